#include "widemeta/widening.hpp"

#include <bit>
#include <cmath>
#include <cstring>

namespace widemeta {

namespace {

bool bits_equal(float a, float b) {
    return std::bit_cast<std::uint32_t>(a) == std::bit_cast<std::uint32_t>(b);
}

}  // namespace

std::pair<Model<float>, WidenReport> widen(const Model<float>& m, const WidenPlan& plan,
                                           std::mt19937& rng) {
    if (m.widened()) throw ConfigError("widen: model is already widened");
    const std::size_t L = m.modules.size();
    if (plan.z.size() != L)
        throw ConfigError("widen: plan has " + std::to_string(plan.z.size()) + " entries for " +
                          std::to_string(L) + " conv modules");
    for (int z : plan.z)
        if (z < 0 || z > kMaxAcuPerLayer)
            throw ConfigError("widen: ACU count " + std::to_string(z) + " outside [0," +
                              std::to_string(kMaxAcuPerLayer) + "]");

    Model<float> out;
    out.cfg = m.cfg;
    out.widen_z = plan.z;
    WidenReport report;

    std::normal_distribution<double> unit(0.0, 1.0);
    const int k = m.cfg.kernel;

    int prev_z = 0;
    for (std::size_t l = 0; l < L; ++l) {
        const auto& spec = m.modules[l];
        const int z = plan.z[l];
        const int F = spec.out_channels;
        const int C = spec.in_channels;
        const int Fn = F + z;
        const int Cn = C + prev_z;
        out.modules.push_back({Cn, Fn, spec.stride, spec.in_size, spec.out_size});

        const std::string id = std::to_string(l + 1);
        const auto& w_old = m.params.at("conv" + id + ".weight");
        const auto& b_old = m.params.at("conv" + id + ".bias");

        Tensor<float> w({static_cast<std::size_t>(Fn), static_cast<std::size_t>(Cn),
                         static_cast<std::size_t>(k), static_cast<std::size_t>(k)});
        Tensor<float> wm = Tensor<float>::zeros(w.shape);
        const std::size_t kk = static_cast<std::size_t>(k) * k;
        // Old rows: meta-trained block, zero columns toward new input channels.
        for (int f = 0; f < F; ++f)
            for (int c = 0; c < C; ++c)
                std::memcpy(w.ptr() + ((static_cast<std::size_t>(f) * Cn) + c) * kk,
                            w_old.ptr() + ((static_cast<std::size_t>(f) * C) + c) * kk,
                            kk * sizeof(float));
        // New rows: fully random per the ACU init.
        const double std_dev =
            plan.scaled_init ? std::sqrt(2.0 / (static_cast<double>(Cn) * k * k)) : 1.0;
        for (int f = F; f < Fn; ++f)
            for (std::size_t i = 0; i < static_cast<std::size_t>(Cn) * kk; ++i)
                w.at(static_cast<std::size_t>(f) * Cn * kk + i) =
                    static_cast<float>(unit(rng) * std_dev);
        // Masks: new rows trainable; old rows frozen (zero cross-block
        // optionally trainable).
        for (int f = F; f < Fn; ++f)
            for (std::size_t i = 0; i < static_cast<std::size_t>(Cn) * kk; ++i)
                wm.at(static_cast<std::size_t>(f) * Cn * kk + i) = 1.0f;
        if (plan.train_hidden_zero_blocks && prev_z > 0)
            for (int f = 0; f < F; ++f)
                for (int c = C; c < Cn; ++c)
                    for (std::size_t i = 0; i < kk; ++i)
                        wm.at(((static_cast<std::size_t>(f) * Cn) + c) * kk + i) = 1.0f;

        Tensor<float> b = Tensor<float>::zeros({static_cast<std::size_t>(Fn)});
        Tensor<float> bm = Tensor<float>::zeros(b.shape);
        std::memcpy(b.ptr(), b_old.ptr(), static_cast<std::size_t>(F) * sizeof(float));
        for (int f = F; f < Fn; ++f) {
            b.at(static_cast<std::size_t>(f)) = static_cast<float>(unit(rng) * std_dev);
            bm.at(static_cast<std::size_t>(f)) = 1.0f;
        }

        Tensor<float> gamma = Tensor<float>::full({static_cast<std::size_t>(Fn)}, 1.0f);
        Tensor<float> beta = Tensor<float>::zeros({static_cast<std::size_t>(Fn)});
        Tensor<float> bnm = Tensor<float>::zeros({static_cast<std::size_t>(Fn)});
        std::memcpy(gamma.ptr(), m.params.at("bn" + id + ".gamma").ptr(),
                    static_cast<std::size_t>(F) * sizeof(float));
        std::memcpy(beta.ptr(), m.params.at("bn" + id + ".beta").ptr(),
                    static_cast<std::size_t>(F) * sizeof(float));
        for (int f = F; f < Fn; ++f) bnm.at(static_cast<std::size_t>(f)) = 1.0f;

        out.params["conv" + id + ".weight"] = std::move(w);
        out.masks["conv" + id + ".weight"] = std::move(wm);
        out.params["conv" + id + ".bias"] = std::move(b);
        out.masks["conv" + id + ".bias"] = std::move(bm);
        out.params["bn" + id + ".gamma"] = std::move(gamma);
        out.masks["bn" + id + ".gamma"] = bnm.clone();
        out.params["bn" + id + ".beta"] = std::move(beta);
        out.masks["bn" + id + ".beta"] = std::move(bnm);

        report.layers.push_back({"conv" + id, F, z});
        report.frozen.push_back("conv" + id + ".weight[old,old]");
        report.frozen.push_back("conv" + id + ".bias[old]");
        report.frozen.push_back("bn" + id + "[old]");
        if (z > 0) {
            report.trainable.push_back("conv" + id + ".weight[new,:]");
            report.trainable.push_back("conv" + id + ".bias[new]");
            report.trainable.push_back("bn" + id + "[new]");
        }
        if (prev_z > 0) report.zero_blocks.push_back("conv" + id + ".weight[old,new]");
        prev_z = z;
    }

    // Head: meta-trained columns for old channels, zero extension for new
    // channels, entirely trainable.
    const auto& last = m.modules.back();
    const std::size_t s2 = static_cast<std::size_t>(last.out_size) * last.out_size;
    const std::size_t n_way = static_cast<std::size_t>(m.cfg.n_way);
    const std::size_t flat_new = out.flat_dim();
    const auto& hw_old = m.params.at("head.weight");
    Tensor<float> hw = Tensor<float>::zeros({n_way, flat_new});
    for (std::size_t r = 0; r < n_way; ++r)
        for (int c = 0; c < last.out_channels; ++c)
            std::memcpy(hw.ptr() + r * flat_new + static_cast<std::size_t>(c) * s2,
                        hw_old.ptr() + r * m.flat_dim() + static_cast<std::size_t>(c) * s2,
                        s2 * sizeof(float));
    out.params["head.weight"] = std::move(hw);
    out.masks["head.weight"] = Tensor<float>::full({n_way, flat_new}, 1.0f);
    out.params["head.bias"] = m.params.at("head.bias").clone();
    out.masks["head.bias"] = Tensor<float>::full({n_way}, 1.0f);
    report.trainable.push_back("head.weight");
    report.trainable.push_back("head.bias");
    if (plan.z.back() > 0) report.zero_blocks.push_back("head.weight[:,new]");

    for (auto& [name, p] : out.params) p.requires_grad = true;
    return {std::move(out), std::move(report)};
}

std::pair<Model<float>, WidenReport> widen(const Model<float>& m, const WidenPlan& plan) {
    std::mt19937 rng(static_cast<std::uint32_t>(plan.seed ^ (plan.seed >> 32)));
    return widen(m, plan, rng);
}

FunctionPreservation verify_function_preservation(const Model<float>& base,
                                                  const Model<float>& widened,
                                                  const Tensor<float>& batch) {
    std::vector<Tensor<float>> base_taps, wide_taps;
    Tensor<float> base_logits = forward<float>(base, batch, nullptr, &base_taps);
    Tensor<float> wide_logits = forward<float>(widened, batch, nullptr, &wide_taps);

    FunctionPreservation fp;
    for (std::size_t i = 0; i < base_logits.size(); ++i)
        fp.max_logit_diff =
            std::max(fp.max_logit_diff, std::abs(base_logits.at(i) - wide_logits.at(i)));

    const std::size_t B = batch.dim(0);
    for (std::size_t l = 0; l < base.modules.size(); ++l) {
        const std::size_t F = static_cast<std::size_t>(base.modules[l].out_channels);
        const std::size_t Fw = static_cast<std::size_t>(widened.modules[l].out_channels);
        const std::size_t hw = static_cast<std::size_t>(base.modules[l].out_size) *
                               base.modules[l].out_size;
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t c = 0; c < F; ++c) {
                const float* pb = base_taps[l].ptr() + (b * F + c) * hw;
                const float* pw = wide_taps[l].ptr() + (b * Fw + c) * hw;
                for (std::size_t i = 0; i < hw; ++i)
                    fp.max_old_feature_diff =
                        std::max(fp.max_old_feature_diff, std::abs(pb[i] - pw[i]));
            }
    }
    return fp;
}

FrozenCheck assert_frozen(const Model<float>& before, const Model<float>& after) {
    for (const auto& [name, pb] : before.params) {
        const auto& pa = after.params.at(name);
        const auto& mask = before.masks.at(name);
        if (pa.shape != pb.shape) return {false, name + " (shape changed)"};
        for (std::size_t i = 0; i < pb.size(); ++i)
            if (mask.at(i) == 0.0f && !bits_equal(pb.at(i), pa.at(i)))
                return {false, name + "[" + std::to_string(i) + "]"};
    }
    // Hidden-layer [old-out, new-in] blocks must stay exactly zero.
    if (after.widened()) {
        const int k = after.cfg.kernel;
        const std::size_t kk = static_cast<std::size_t>(k) * k;
        int prev_z = 0;
        for (std::size_t l = 0; l < after.modules.size(); ++l) {
            const int z = after.widen_z[l];
            const int Fn = after.modules[l].out_channels;
            const int Cn = after.modules[l].in_channels;
            const int F = Fn - z;
            const int C = Cn - prev_z;
            if (prev_z > 0) {
                const std::string pname = "conv" + std::to_string(l + 1) + ".weight";
                const auto& w = after.params.at(pname);
                const auto& wm = after.masks.at(pname);
                for (int f = 0; f < F; ++f)
                    for (int c = C; c < Cn; ++c)
                        for (std::size_t i = 0; i < kk; ++i)
                            if (wm.at(((static_cast<std::size_t>(f) * Cn) + c) * kk + i) == 0.0f &&
                                w.at(((static_cast<std::size_t>(f) * Cn) + c) * kk + i) != 0.0f)
                                return {false, pname + " zero block nonzero at [" +
                                                   std::to_string(f) + "," + std::to_string(c) +
                                                   "]"};
            }
            prev_z = z;
        }
    }
    return {true, ""};
}

}  // namespace widemeta
