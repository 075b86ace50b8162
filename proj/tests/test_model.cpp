#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "widemeta/model.hpp"
#include "widemeta/widening.hpp"

using namespace widemeta;

namespace {

Model<float> make(int in_ch, int img, int filters, int n_way,
                  DepthVariant depth = DepthVariant::standard4, std::uint32_t seed = 3) {
    ModelConfig cfg;
    cfg.in_channels = in_ch;
    cfg.image_size = img;
    cfg.n_way = n_way;
    cfg.base_filters = filters;
    cfg.depth = depth;
    std::mt19937 rng(seed);
    return build_model<float>(cfg, rng);
}

std::string tmp_path(const char* stem) {
    return (std::filesystem::temp_directory_path() / stem).string();
}

bool bit_equal(const Tensor<float>& a, const Tensor<float>& b) {
    if (a.shape != b.shape) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (std::bit_cast<std::uint32_t>(a.at(i)) != std::bit_cast<std::uint32_t>(b.at(i)))
            return false;
    return true;
}

}  // namespace

TEST_CASE("spatial size recurrence: 28 and 84 inputs") {
    Model<float> m28 = make(1, 28, 64, 5);
    std::vector<int> got;
    for (const auto& s : m28.modules) got.push_back(s.out_size);
    CHECK(got == std::vector<int>{14, 7, 4, 2});
    CHECK(m28.flat_dim() == 256);

    Model<float> m84 = make(3, 84, 64, 5);
    got.clear();
    for (const auto& s : m84.modules) got.push_back(s.out_size);
    CHECK(got == std::vector<int>{42, 21, 11, 6});
    CHECK(m84.flat_dim() == 2304);
}

TEST_CASE("parameter counts match the closed form") {
    CHECK(make(1, 28, 64, 5).count_params() == 113221);
    CHECK(make(3, 84, 64, 5).count_params() == 124613);
    CHECK(make(1, 28, 32, 5).count_params() == 28965);
}

TEST_CASE("deep variant adds two conv modules") {
    Model<float> m = make(1, 28, 32, 5, DepthVariant::deep6);
    REQUIRE(m.modules.size() == 6);
    CHECK(m.modules[4].out_size == 1);
    CHECK(m.modules[5].out_size == 1);
    CHECK(m.params.count("conv6.weight") == 1);
}

TEST_CASE("invalid configurations fail before any compute") {
    ModelConfig cfg;
    cfg.n_way = 1;
    std::mt19937 rng(0);
    CHECK_THROWS_AS(build_model<float>(cfg, rng), ConfigError);

    cfg.n_way = 5;
    cfg.image_size = 4;
    cfg.padding = 0;  // collapses before four stride-2 modules
    CHECK_THROWS_AS(build_model<float>(cfg, rng), ConfigError);
}

TEST_CASE("forward output shape and input validation") {
    Model<float> m = make(1, 28, 16, 5);
    Tensor<float> batch({3, 1, 28, 28});
    Tensor<float> logits = forward(m, batch);
    CHECK(logits.shape == std::vector<std::size_t>{3, 5});

    Tensor<float> wrong({3, 1, 32, 32});
    CHECK_THROWS_AS(forward(m, wrong), DimensionError);
}

TEST_CASE("checkpoint round-trip is bit-exact") {
    Model<float> m = make(1, 28, 8, 5);
    m.masks["conv2.weight"].at(7) = 0.0f;  // non-trivial mask survives too
    const std::string path = tmp_path("ckpt_rt.bin");
    save_checkpoint(m, path);
    Model<float> r = load_checkpoint(path);

    CHECK(r.cfg.base_filters == 8);
    CHECK(r.modules.size() == m.modules.size());
    REQUIRE(r.params.size() == m.params.size());
    for (const auto& [name, p] : m.params) CHECK(bit_equal(p, r.params.at(name)));
    for (const auto& [name, k] : m.masks) CHECK(bit_equal(k, r.masks.at(name)));

    // Saving the loaded model reproduces the file byte for byte.
    const std::string path2 = tmp_path("ckpt_rt2.bin");
    save_checkpoint(r, path2);
    std::ifstream a(path, std::ios::binary), b(path2, std::ios::binary);
    std::string sa((std::istreambuf_iterator<char>(a)), {});
    std::string sb((std::istreambuf_iterator<char>(b)), {});
    CHECK(sa == sb);
    std::remove(path.c_str());
    std::remove(path2.c_str());
}

TEST_CASE("widened checkpoint round-trip keeps geometry and masks") {
    Model<float> m = make(1, 28, 8, 5);
    WidenPlan plan;
    plan.z = {2, 3, 1, 4};
    plan.seed = 77;
    auto [wide, report] = widen(m, plan);
    const std::string path = tmp_path("ckpt_wide.bin");
    save_checkpoint(wide, path);
    Model<float> r = load_checkpoint(path);
    CHECK(r.widen_z == plan.z);
    CHECK(r.modules[1].out_channels == 11);
    CHECK(r.modules[2].in_channels == 11);
    for (const auto& [name, p] : wide.params) CHECK(bit_equal(p, r.params.at(name)));
    for (const auto& [name, k] : wide.masks) CHECK(bit_equal(k, r.masks.at(name)));
    std::remove(path.c_str());
}

TEST_CASE("corrupt checkpoints fail loudly") {
    Model<float> m = make(1, 28, 4, 5);
    const std::string path = tmp_path("ckpt_bad.bin");
    save_checkpoint(m, path);
    std::ifstream is(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(is)), {});
    is.close();

    SUBCASE("bad magic") {
        std::string b = bytes;
        b[0] = 'X';
        std::ofstream(path, std::ios::binary | std::ios::trunc).write(b.data(), b.size());
        CHECK_THROWS_AS(load_checkpoint(path), ParseError);
    }
    SUBCASE("truncated mid-payload") {
        std::string b = bytes.substr(0, 40);
        std::ofstream(path, std::ios::binary | std::ios::trunc).write(b.data(), b.size());
        try {
            load_checkpoint(path);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.byte_offset > 0);  // offset of the failing read is reported
        }
    }
    SUBCASE("entry count larger than entries present") {
        std::string b = bytes;
        b[7] = char(200);  // little-endian count low byte, real count is 36
        std::ofstream(path, std::ios::binary | std::ios::trunc).write(b.data(), b.size());
        CHECK_THROWS(load_checkpoint(path));
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_checkpoint(tmp_path("nonexistent.bin")), IoError);
    }
    std::remove(path.c_str());
}

TEST_CASE("cost model matches hand-derived counts (28x28 gray, 64 filters)") {
    ModelConfig cfg;
    cfg.in_channels = 1;
    cfg.image_size = 28;
    cfg.n_way = 5;
    cfg.base_filters = 64;

    CostEstimate base = cost_estimate(cfg, {}, CostMode::anil);
    CHECK(base.per_layer_mults ==
          std::vector<std::size_t>{112896, 1806336, 589824, 147456});
    CHECK(base.head_mults == 1280);
    CHECK(base.forward_mults == 2657792);
    CHECK(base.trainable_grad_count == 1285);

    CostEstimate wide = cost_estimate(cfg, {2, 4, 6, 8}, CostMode::mac);
    CHECK(wide.per_layer_mults ==
          std::vector<std::size_t>{116424, 1979208, 685440, 181440});
    CHECK(wide.head_mults == 1440);
    CHECK(wide.forward_mults == 2963952);
    CHECK(wide.trainable_grad_count == 1445 + 11166);

    // Batch scaling is linear in the forward counts.
    CostEstimate b4 = cost_estimate(cfg, {}, CostMode::anil, 4);
    CHECK(b4.forward_mults == 4 * base.forward_mults);
    CHECK(b4.trainable_grad_count == base.trainable_grad_count);
}

TEST_CASE("clone_model is deep for values, independent for updates") {
    Model<float> m = make(1, 28, 4, 5);
    Model<float> c = clone_model(m);
    c.params["head.bias"].at(0) += 1.0f;
    CHECK(m.params["head.bias"].at(0) == 0.0f);
}
