#include <cstring>
#include <fstream>
#include <sstream>

#include "widemeta/model.hpp"

namespace widemeta {

namespace {

constexpr char kMagic[7] = {'W', 'M', 'E', 'T', 'A', '1', '\0'};

void put_u16(std::ostream& os, std::uint16_t v) {
    char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
    os.write(b, 2);
}

void put_u32(std::ostream& os, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 4);
}

struct Reader {
    std::string bytes;
    std::size_t pos = 0;

    void need(std::size_t n, const char* what) const {
        if (pos + n > bytes.size())
            throw ParseError(std::string("checkpoint truncated while reading ") + what, pos);
    }
    std::uint8_t u8(const char* what) {
        need(1, what);
        return static_cast<std::uint8_t>(bytes[pos++]);
    }
    std::uint16_t u16(const char* what) {
        need(2, what);
        std::uint16_t v = static_cast<std::uint8_t>(bytes[pos]) |
                          (static_cast<std::uint16_t>(static_cast<std::uint8_t>(bytes[pos + 1]))
                           << 8);
        pos += 2;
        return v;
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    std::string str(std::size_t n, const char* what) {
        need(n, what);
        std::string s = bytes.substr(pos, n);
        pos += n;
        return s;
    }
};

}  // namespace

void save_checkpoint(const Model<float>& m, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open checkpoint for writing: " + path);
    os.write(kMagic, sizeof(kMagic));

    // One entry per parameter plus one per mask (".mask", u8 payload).
    put_u32(os, static_cast<std::uint32_t>(m.params.size() + m.masks.size()));
    auto write_header = [&](const std::string& name, const std::vector<std::size_t>& shape) {
        put_u16(os, static_cast<std::uint16_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        os.put(static_cast<char>(shape.size()));
        for (auto d : shape) put_u32(os, static_cast<std::uint32_t>(d));
    };
    for (const auto& [name, p] : m.params) {
        write_header(name, p.shape);
        os.write(reinterpret_cast<const char*>(p.ptr()),
                 static_cast<std::streamsize>(p.size() * sizeof(float)));
    }
    for (const auto& [name, mask] : m.masks) {
        write_header(name + ".mask", mask.shape);
        for (std::size_t i = 0; i < mask.size(); ++i)
            os.put(mask.at(i) != 0.0f ? char(1) : char(0));
    }

    std::ostringstream cfg;
    cfg << "in_channels=" << m.cfg.in_channels << "\n"
        << "image_size=" << m.cfg.image_size << "\n"
        << "n_way=" << m.cfg.n_way << "\n"
        << "base_filters=" << m.cfg.base_filters << "\n"
        << "depth=" << (m.cfg.depth == DepthVariant::deep6 ? "deep6" : "standard4") << "\n"
        << "stride=" << m.cfg.stride << "\n"
        << "kernel=" << m.cfg.kernel << "\n"
        << "padding=" << m.cfg.padding << "\n";
    if (m.widened()) {
        cfg << "widen_z=";
        for (std::size_t i = 0; i < m.widen_z.size(); ++i) cfg << (i ? "," : "") << m.widen_z[i];
        cfg << "\n";
    }
    const std::string block = cfg.str();
    os.write(block.data(), static_cast<std::streamsize>(block.size()));
    if (!os) throw IoError("write failed: " + path);
}

Model<float> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path);
    Reader r;
    {
        std::ostringstream ss;
        ss << is.rdbuf();
        r.bytes = ss.str();
    }
    if (r.str(sizeof(kMagic), "magic") != std::string(kMagic, sizeof(kMagic)))
        throw ParseError("bad checkpoint magic", 0);
    const std::uint32_t n_entries = r.u32("entry count");

    std::map<std::string, Tensor<float>> params, masks;
    for (std::uint32_t e = 0; e < n_entries; ++e) {
        if (r.pos == r.bytes.size())
            throw IntegrityError("checkpoint header declares " + std::to_string(n_entries) +
                                 " entries but file contains " + std::to_string(e));
        const std::uint16_t name_len = r.u16("name length");
        const std::string name = r.str(name_len, "name");
        const std::uint8_t rank = r.u8("rank");
        std::vector<std::size_t> shape;
        std::size_t n = 1;
        for (int d = 0; d < rank; ++d) {
            shape.push_back(r.u32("dimension"));
            n *= shape.back();
        }
        const bool is_mask = name.size() > 5 && name.substr(name.size() - 5) == ".mask";
        Tensor<float> t(shape);
        if (is_mask) {
            for (std::size_t i = 0; i < n; ++i) t.at(i) = r.u8("mask payload") ? 1.0f : 0.0f;
            masks[name.substr(0, name.size() - 5)] = std::move(t);
        } else {
            r.need(n * sizeof(float), "float payload");
            std::memcpy(t.ptr(), r.bytes.data() + r.pos, n * sizeof(float));
            r.pos += n * sizeof(float);
            params[name] = std::move(t);
        }
    }

    // Trailing config block: key=value lines.
    std::map<std::string, std::string> kv;
    {
        std::istringstream ss(r.bytes.substr(r.pos));
        std::string line;
        while (std::getline(ss, line)) {
            auto eq = line.find('=');
            if (eq == std::string::npos) continue;
            kv[line.substr(0, eq)] = line.substr(eq + 1);
        }
    }
    auto geti = [&](const char* key) {
        auto it = kv.find(key);
        if (it == kv.end()) throw IntegrityError(std::string("checkpoint config missing ") + key);
        return std::stoi(it->second);
    };

    Model<float> m;
    m.cfg.in_channels = geti("in_channels");
    m.cfg.image_size = geti("image_size");
    m.cfg.n_way = geti("n_way");
    m.cfg.base_filters = geti("base_filters");
    m.cfg.depth = kv["depth"] == "deep6" ? DepthVariant::deep6 : DepthVariant::standard4;
    m.cfg.stride = geti("stride");
    m.cfg.kernel = geti("kernel");
    m.cfg.padding = geti("padding");
    if (kv.count("widen_z")) {
        std::istringstream zs(kv["widen_z"]);
        std::string tok;
        while (std::getline(zs, tok, ',')) m.widen_z.push_back(std::stoi(tok));
    }

    // Rebuild module geometry from config, then cross-check against payloads.
    {
        std::mt19937 scratch(0);
        Model<float> ref = build_model<float>(m.cfg, scratch);
        m.modules = ref.modules;
        if (m.widened()) {
            if (m.widen_z.size() != m.modules.size())
                throw IntegrityError("checkpoint widen_z length mismatch");
            int prev_z = 0;
            for (std::size_t l = 0; l < m.modules.size(); ++l) {
                m.modules[l].in_channels += prev_z;
                m.modules[l].out_channels += m.widen_z[l];
                prev_z = m.widen_z[l];
            }
        }
        for (const auto& [name, ref_p] : ref.params)
            if (!params.count(name))
                throw IntegrityError("checkpoint missing parameter '" + name + "'");
    }
    for (const auto& [name, p] : params) {
        if (!masks.count(name))
            throw IntegrityError("checkpoint missing mask for '" + name + "'");
        if (masks[name].shape != p.shape)
            throw IntegrityError("checkpoint mask shape mismatch for '" + name + "'");
    }

    m.params = std::move(params);
    m.masks = std::move(masks);
    // Validate declared shapes against the architecture via a forward on a
    // dummy batch shape check: head width must match n_way x flat_dim.
    const auto& hw = m.params.at("head.weight");
    if (hw.dim(0) != static_cast<std::size_t>(m.cfg.n_way) || hw.dim(1) != m.flat_dim())
        throw IntegrityError("checkpoint head shape " + shape_str(hw.shape) +
                             " inconsistent with config");
    for (auto& [name, p] : m.params) p.requires_grad = true;
    return m;
}

CostEstimate cost_estimate(const ModelConfig& cfg, const std::vector<int>& widen_z,
                           CostMode mode, int batch) {
    std::mt19937 scratch(0);
    Model<float> ref = build_model<float>(cfg, scratch);
    const std::size_t L = ref.modules.size();
    std::vector<int> z = widen_z.empty() ? std::vector<int>(L, 0) : widen_z;
    if (z.size() != L) throw ConfigError("cost_estimate: widen plan length mismatch");

    CostEstimate est;
    const std::size_t k2 = static_cast<std::size_t>(cfg.kernel) * cfg.kernel;
    int prev_z = 0;
    std::size_t acu_count = 0;
    std::size_t deep_extra = 0;
    for (std::size_t l = 0; l < L; ++l) {
        const auto& spec = ref.modules[l];
        const std::size_t c_in = static_cast<std::size_t>(spec.in_channels + prev_z);
        const std::size_t f_out = static_cast<std::size_t>(spec.out_channels + z[l]);
        const std::size_t hw = static_cast<std::size_t>(spec.out_size) * spec.out_size;
        est.per_layer_mults.push_back(k2 * c_in * f_out * hw * static_cast<std::size_t>(batch));
        // Trainable ACU blocks: new conv rows, new biases, new BN params.
        acu_count += static_cast<std::size_t>(z[l]) * c_in * k2 +
                     static_cast<std::size_t>(z[l]) * 3;
        if (l >= 4) {
            // Deep-variant extra modules: the cost model counts their full
            // conv weights and biases as updated.
            deep_extra += f_out * c_in * k2 + f_out;
        }
        prev_z = z[l];
    }
    const std::size_t flat = static_cast<std::size_t>(ref.modules.back().out_channels + prev_z) *
                             ref.modules.back().out_size * ref.modules.back().out_size;
    est.head_mults = flat * static_cast<std::size_t>(cfg.n_way) * static_cast<std::size_t>(batch);
    est.forward_mults = est.head_mults;
    for (auto v : est.per_layer_mults) est.forward_mults += v;

    const std::size_t head_count = flat * static_cast<std::size_t>(cfg.n_way) +
                                   static_cast<std::size_t>(cfg.n_way);
    switch (mode) {
        case CostMode::anil: est.trainable_grad_count = head_count; break;
        case CostMode::mac: est.trainable_grad_count = head_count + acu_count; break;
        case CostMode::mac_deep:
            est.trainable_grad_count = head_count + acu_count + deep_extra;
            break;
    }
    return est;
}

}  // namespace widemeta
