#pragma once

#include <random>
#include <string>
#include <vector>

#include "widemeta/ops.hpp"

namespace widemeta {

enum class DepthVariant { standard4, deep6 };

struct ModelConfig {
    int in_channels = 1;   // 1 for 28x28 grayscale, 3 for 84x84 RGB
    int image_size = 28;
    int n_way = 5;
    int base_filters = 64;
    DepthVariant depth = DepthVariant::standard4;
    int stride = 2;
    int kernel = 3;
    int padding = 1;
};

// Static per-module geometry, fixed at build time (and rewritten by widening).
struct ConvModuleSpec {
    int in_channels;
    int out_channels;
    int stride;
    int in_size;
    int out_size;
};

// Conv/BN/ReLU modules, flatten, affine head. Parameters and their
// trainability masks live in name-keyed maps; names are stable across
// save/load ("conv1.weight", "bn1.gamma", ..., "head.weight").
template <typename T>
struct Model {
    ModelConfig cfg;
    std::vector<ConvModuleSpec> modules;
    std::map<std::string, Tensor<T>> params;
    std::map<std::string, Tensor<T>> masks;

    // ACU filters added per module by widening; empty for a base model.
    std::vector<int> widen_z;

    bool widened() const { return !widen_z.empty(); }

    std::size_t flat_dim() const {
        const auto& last = modules.back();
        return static_cast<std::size_t>(last.out_channels) * last.out_size * last.out_size;
    }

    std::size_t count_params() const {
        std::size_t n = 0;
        for (const auto& [name, p] : params) n += p.size();
        return n;
    }

    void set_requires_grad(bool v) {
        for (auto& [name, p] : params) p.requires_grad = v;
    }
};

namespace detail {

inline int conv_out_size(int in, int kernel, int stride, int padding) {
    return (in + 2 * padding - kernel) / stride + 1;
}

template <typename T>
Tensor<T> gaussian_init(std::vector<std::size_t> shape, T std_dev, std::mt19937& rng) {
    Tensor<T> t(std::move(shape));
    std::normal_distribution<double> dist(0.0, static_cast<double>(std_dev));
    for (std::size_t i = 0; i < t.size(); ++i) t.at(i) = static_cast<T>(dist(rng));
    return t;
}

}  // namespace detail

template <typename T>
Model<T> build_model(const ModelConfig& cfg, std::mt19937& rng) {
    if (cfg.n_way < 2) throw ConfigError("build_model: n_way must be >= 2");
    if (cfg.in_channels < 1 || cfg.image_size < 1 || cfg.base_filters < 1)
        throw ConfigError("build_model: invalid channel/size/filter config");

    Model<T> m;
    m.cfg = cfg;
    const int n_modules = cfg.depth == DepthVariant::deep6 ? 6 : 4;
    int size = cfg.image_size;
    int in_ch = cfg.in_channels;
    for (int i = 0; i < n_modules; ++i) {
        int stride = cfg.stride;
        int out = detail::conv_out_size(size, cfg.kernel, stride, cfg.padding);
        if (out < 1) {
            if (i >= 4) {
                // Extra deep-variant modules fall back to stride 1 rather than
                // collapsing the feature map.
                stride = 1;
                out = detail::conv_out_size(size, cfg.kernel, stride, cfg.padding);
            }
            if (out < 1)
                throw ConfigError("build_model: spatial size collapses at module " +
                                  std::to_string(i + 1));
        }
        m.modules.push_back({in_ch, cfg.base_filters, stride, size, out});
        size = out;
        in_ch = cfg.base_filters;
    }

    for (int i = 0; i < n_modules; ++i) {
        const auto& spec = m.modules[static_cast<std::size_t>(i)];
        const std::string id = std::to_string(i + 1);
        const std::size_t F = static_cast<std::size_t>(spec.out_channels);
        const std::size_t C = static_cast<std::size_t>(spec.in_channels);
        const std::size_t k = static_cast<std::size_t>(cfg.kernel);
        const T std_dev = std::sqrt(T{2} / static_cast<T>(C * k * k));
        m.params["conv" + id + ".weight"] = detail::gaussian_init<T>({F, C, k, k}, std_dev, rng);
        m.params["conv" + id + ".bias"] = Tensor<T>::zeros({F});
        m.params["bn" + id + ".gamma"] = Tensor<T>::full({F}, T{1});
        m.params["bn" + id + ".beta"] = Tensor<T>::zeros({F});
    }
    const std::size_t flat = m.flat_dim();
    const std::size_t n_way = static_cast<std::size_t>(cfg.n_way);
    m.params["head.weight"] =
        detail::gaussian_init<T>({n_way, flat}, std::sqrt(T{2} / static_cast<T>(flat)), rng);
    m.params["head.bias"] = Tensor<T>::zeros({n_way});

    for (auto& [name, p] : m.params) {
        p.requires_grad = true;
        m.masks[name] = Tensor<T>::full(p.shape, T{1});
    }
    return m;
}

// Forward pass. `tape` may be null (inference). `taps`, when given, receives
// the post-ReLU activation of every conv module in order.
template <typename T>
Tensor<T> forward(const Model<T>& m, const Tensor<T>& batch, Tape<T>* tape = nullptr,
                  std::vector<Tensor<T>>* taps = nullptr) {
    if (batch.rank() != 4 || batch.dim(1) != static_cast<std::size_t>(m.cfg.in_channels) ||
        batch.dim(2) != static_cast<std::size_t>(m.cfg.image_size) ||
        batch.dim(3) != static_cast<std::size_t>(m.cfg.image_size))
        throw DimensionError("forward: batch " + shape_str(batch.shape) +
                             " does not match model input " +
                             std::to_string(m.cfg.in_channels) + "x" +
                             std::to_string(m.cfg.image_size) + "x" +
                             std::to_string(m.cfg.image_size));
    Tensor<T> x = batch;
    for (std::size_t i = 0; i < m.modules.size(); ++i) {
        const std::string id = std::to_string(i + 1);
        x = conv2d(x, m.params.at("conv" + id + ".weight"), m.params.at("conv" + id + ".bias"),
                   m.modules[i].stride, m.cfg.padding, tape);
        x = batchnorm2d(x, m.params.at("bn" + id + ".gamma"), m.params.at("bn" + id + ".beta"),
                        T{1e-5}, tape);
        x = relu(x, tape);
        if (taps) taps->push_back(x);
    }
    x = reshape(x, {batch.dim(0), m.flat_dim()}, tape);
    return affine(x, m.params.at("head.weight"), m.params.at("head.bias"), tape);
}

template <typename T>
Model<T> clone_model(const Model<T>& m) {
    Model<T> c;
    c.cfg = m.cfg;
    c.modules = m.modules;
    c.widen_z = m.widen_z;
    for (const auto& [name, p] : m.params) c.params[name] = p.clone();
    for (const auto& [name, p] : m.masks) c.masks[name] = p.clone();
    return c;
}

// Checkpoint I/O (float models only); format documented in the README.
void save_checkpoint(const Model<float>& m, const std::string& path);
Model<float> load_checkpoint(const std::string& path);

// Cost model: forward multiply counts and trainable-gradient counts for the
// base, widened, and deep variants under a given adaptation mode.
enum class CostMode { anil, mac, mac_deep };

struct CostEstimate {
    std::vector<std::size_t> per_layer_mults;  // conv modules, in order
    std::size_t head_mults = 0;
    std::size_t forward_mults = 0;  // sum of the above
    std::size_t trainable_grad_count = 0;
};

CostEstimate cost_estimate(const ModelConfig& cfg, const std::vector<int>& widen_z,
                           CostMode mode, int batch = 1);

}  // namespace widemeta
