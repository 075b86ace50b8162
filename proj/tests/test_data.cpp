#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <random>

#include "widemeta/data.hpp"
#include "widemeta/ops.hpp"

namespace fs = std::filesystem;
using namespace widemeta;

namespace {

bool same_image(const float* a, const float* b, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        if (a[i] != b[i]) return false;
    return true;
}

Tensor<float> rot90_ref(const Tensor<float>& img) {
    const std::size_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
    Tensor<float> out({C, W, H});
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x)
                out.at((c * W + (W - 1 - x)) * H + y) = img.at((c * H + y) * W + x);
    return out;
}

}  // namespace

TEST_CASE("gaussian kernel: normalized, symmetric, validated") {
    for (int size : {3, 5, 7, 9})
        for (float sigma : {0.1f, 1.0f, 5.0f}) {
            Tensor<float> k = gaussian_kernel(size, sigma);
            double sum = 0;
            for (std::size_t i = 0; i < k.size(); ++i) sum += k.at(i);
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
            // 8-fold symmetry around the center
            const int n = size;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) {
                    CHECK(k.at(static_cast<std::size_t>(i * n + j)) ==
                          k.at(static_cast<std::size_t>((n - 1 - i) * n + (n - 1 - j))));
                    CHECK(k.at(static_cast<std::size_t>(i * n + j)) ==
                          k.at(static_cast<std::size_t>(j * n + i)));
                }
        }
    CHECK_THROWS_AS(gaussian_kernel(4, 1.0f), ContractError);
    CHECK_THROWS_AS(gaussian_kernel(1, 1.0f), ContractError);
    CHECK_THROWS_AS(gaussian_kernel(5, 0.0f), ContractError);
}

TEST_CASE("blur keeps range and roughly preserves interior mass") {
    // A glyph comfortably away from the border: blur redistributes but does
    // not create or destroy ink.
    SynthGlyphConfig scfg;
    scfg.n_classes = 3;
    scfg.seed = 42;
    scfg.image_size = 28;
    ClassPool pool = synth_glyph_pool(scfg, 4);

    BlurConfig bcfg;
    bcfg.kernel_choices = {5};
    bcfg.sigma_min = 0.8f;
    bcfg.sigma_max = 0.8f;
    std::mt19937 rng(7);
    for (const auto& cls : pool.classes)
        for (const auto& img : cls) {
            Tensor<float> b = gaussian_blur(img, bcfg, rng);
            float in_mean = 0, out_mean = 0;
            for (std::size_t i = 0; i < img.size(); ++i) {
                CHECK(b.at(i) >= 0.0f);
                CHECK(b.at(i) <= 1.0f);
                in_mean += img.at(i);
                out_mean += b.at(i);
            }
            in_mean /= static_cast<float>(img.size());
            out_mean /= static_cast<float>(img.size());
            CHECK(out_mean == doctest::Approx(in_mean).epsilon(0.05).scale(1e-3));
        }
}

TEST_CASE("blur_episode: targets, apply=none passthrough, per-draw modes") {
    SynthGlyphConfig scfg;
    scfg.n_classes = 6;
    scfg.seed = 5;
    ClassPool pool = synth_glyph_pool(scfg, 6);
    std::mt19937 er(3);
    Episode ep = sample_episode(pool, 5, 1, 2, er);
    const std::size_t slen = ep.support_x.size(), qlen = ep.query_x.size();

    BlurConfig cfg;
    cfg.kernel_choices = {5, 7};
    cfg.sigma_min = 1.0f;
    cfg.sigma_max = 3.0f;

    SUBCASE("apply=none returns the episode untouched") {
        cfg.apply = BlurApply::none;
        std::mt19937 rng(1);
        Episode out = blur_episode(ep, cfg, rng);
        CHECK(same_image(out.support_x.ptr(), ep.support_x.ptr(), slen));
        CHECK(same_image(out.query_x.ptr(), ep.query_x.ptr(), qlen));
    }
    SUBCASE("support_only leaves queries untouched") {
        cfg.target = BlurTarget::support_only;
        std::mt19937 rng(1);
        Episode out = blur_episode(ep, cfg, rng);
        CHECK_FALSE(same_image(out.support_x.ptr(), ep.support_x.ptr(), slen));
        CHECK(same_image(out.query_x.ptr(), ep.query_x.ptr(), qlen));
    }
    SUBCASE("query_only leaves supports untouched") {
        cfg.target = BlurTarget::query_only;
        std::mt19937 rng(1);
        Episode out = blur_episode(ep, cfg, rng);
        CHECK(same_image(out.support_x.ptr(), ep.support_x.ptr(), slen));
        CHECK_FALSE(same_image(out.query_x.ptr(), ep.query_x.ptr(), qlen));
    }
    SUBCASE("deterministic under a fixed generator, per_image and per_task") {
        for (BlurDraw draw : {BlurDraw::per_image, BlurDraw::per_task}) {
            cfg.draw = draw;
            std::mt19937 r1(9), r2(9);
            Episode a = blur_episode(ep, cfg, r1);
            Episode b = blur_episode(ep, cfg, r2);
            CHECK(same_image(a.support_x.ptr(), b.support_x.ptr(), slen));
            CHECK(same_image(a.query_x.ptr(), b.query_x.ptr(), qlen));
        }
    }
    SUBCASE("original episode is never mutated") {
        std::mt19937 rng(2);
        Tensor<float> before = ep.support_x.clone();
        (void)blur_episode(ep, cfg, rng);
        CHECK(same_image(before.ptr(), ep.support_x.ptr(), slen));
    }
}

TEST_CASE("rotation augmentation: 4x classes, group property") {
    SynthGlyphConfig scfg;
    scfg.n_classes = 2;
    scfg.seed = 3;
    ClassPool pool = synth_glyph_pool(scfg, 3);
    ClassPool aug = rotate_augment(pool);
    REQUIRE(aug.classes.size() == 8);
    CHECK(aug.class_names[0] == "glyph0/rot000");
    CHECK(aug.class_names[3] == "glyph0/rot270");

    for (std::size_t c = 0; c < pool.classes.size(); ++c)
        for (std::size_t i = 0; i < pool.classes[c].size(); ++i) {
            const auto& orig = pool.classes[c][i];
            // rot000 is the original
            CHECK(same_image(aug.classes[4 * c][i].ptr(), orig.ptr(), orig.size()));
            // each step is one more quarter turn; four turns close the group
            Tensor<float> r = orig.clone();
            for (int k = 1; k < 4; ++k) {
                r = rot90_ref(r);
                CHECK(same_image(aug.classes[4 * c + static_cast<std::size_t>(k)][i].ptr(),
                                 r.ptr(), r.size()));
            }
            r = rot90_ref(r);
            CHECK(same_image(r.ptr(), orig.ptr(), orig.size()));
        }
}

TEST_CASE("sample_episode: shapes, label order, determinism, capacity") {
    SynthGlyphConfig scfg;
    scfg.n_classes = 12;
    scfg.seed = 17;
    ClassPool pool = synth_glyph_pool(scfg, 8);

    std::mt19937 r1(1), r2(1);
    Episode a = sample_episode(pool, 5, 2, 3, r1);
    Episode b = sample_episode(pool, 5, 2, 3, r2);
    CHECK(a.support_x.shape == std::vector<std::size_t>{10, 1, 28, 28});
    CHECK(a.query_x.shape == std::vector<std::size_t>{15, 1, 28, 28});
    CHECK(a.support_y == std::vector<int>{0, 0, 1, 1, 2, 2, 3, 3, 4, 4});
    CHECK(same_image(a.support_x.ptr(), b.support_x.ptr(), a.support_x.size()));
    CHECK(same_image(a.query_x.ptr(), b.query_x.ptr(), a.query_x.size()));

    std::mt19937 r3(0);
    CHECK_THROWS_AS(sample_episode(pool, 13, 1, 1, r3), CapacityError);
    CHECK_THROWS_AS(sample_episode(pool, 5, 5, 5, r3), CapacityError);  // 10 > 8 images
}

TEST_CASE("sample_episode: support and query never share an image") {
    SynthGlyphConfig scfg;
    scfg.n_classes = 10;
    scfg.seed = 23;
    scfg.jitter_std = 0.08f;  // make instances distinct
    ClassPool pool = synth_glyph_pool(scfg, 10);
    const std::size_t img_len = 28 * 28;

    std::mt19937 rng(99);
    for (int trial = 0; trial < 1000; ++trial) {
        Episode ep = sample_episode(pool, 5, 1, 2, rng);
        for (std::size_t s = 0; s < 5; ++s)
            for (std::size_t q = 0; q < 10; ++q)
                CHECK_FALSE(same_image(ep.support_x.ptr() + s * img_len,
                                       ep.query_x.ptr() + q * img_len, img_len));
    }
}

TEST_CASE("synthetic glyphs: determinism, jitter=0 identity, value range") {
    SynthGlyphConfig cfg;
    cfg.n_classes = 20;
    cfg.seed = 31;
    ClassPool p1 = synth_glyph_pool(cfg, 5);
    ClassPool p2 = synth_glyph_pool(cfg, 5);
    REQUIRE(p1.classes.size() == 20);
    for (std::size_t c = 0; c < 20; ++c)
        for (std::size_t i = 0; i < 5; ++i)
            CHECK(same_image(p1.classes[c][i].ptr(), p2.classes[c][i].ptr(),
                             p1.classes[c][i].size()));
    for (std::size_t i = 0; i < p1.classes[0][0].size(); ++i) {
        CHECK(p1.classes[0][0].at(i) >= 0.0f);
        CHECK(p1.classes[0][0].at(i) <= 1.0f);
    }

    cfg.jitter_std = 0.0f;
    ClassPool frozen = synth_glyph_pool(cfg, 4);
    for (const auto& cls : frozen.classes)
        for (std::size_t i = 1; i < cls.size(); ++i)
            CHECK(same_image(cls[0].ptr(), cls[i].ptr(), cls[0].size()));
}

TEST_CASE("two glyph classes are linearly separable (>=95% probe accuracy)") {
    SynthGlyphConfig cfg;
    cfg.n_classes = 2;
    cfg.seed = 57;
    ClassPool pool = synth_glyph_pool(cfg, 20);

    // Logistic probe on raw pixels, trained by full-batch gradient descent.
    const std::size_t D = 28 * 28, N = 40;
    Tensor<float> X({N, D});
    std::vector<int> y;
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t i = 0; i < 20; ++i) {
            const auto& img = pool.classes[c][i];
            std::copy(img.ptr(), img.ptr() + D, X.ptr() + (c * 20 + i) * D);
            y.push_back(static_cast<int>(c));
        }
    std::map<std::string, Tensor<float>> params;
    params["w"] = Tensor<float>::zeros({2, D});
    params["b"] = Tensor<float>::zeros({2});
    for (auto& [k, p] : params) p.requires_grad = true;
    for (int step = 0; step < 200; ++step) {
        Tape<float> tape;
        Tensor<float> logits = affine(X, params["w"], params["b"], &tape);
        Tensor<float> loss = softmax_cross_entropy(logits, y, &tape);
        auto grads = backward(tape, loss, params);
        sgd_step<float>(params, grads, 0.5f);
    }
    Tensor<float> logits = affine(X, params["w"], params["b"], static_cast<Tape<float>*>(nullptr));
    std::size_t hits = 0;
    for (std::size_t i = 0; i < N; ++i)
        hits += (logits.at(i * 2) < logits.at(i * 2 + 1)) == (y[i] == 1);
    CHECK(static_cast<double>(hits) / static_cast<double>(N) >= 0.95);
}

TEST_CASE("png round trip and directory-tree loading") {
    const fs::path root = fs::temp_directory_path() / "widemeta_tree";
    fs::remove_all(root);
    fs::create_directories(root / "alpha" / "charA");
    fs::create_directories(root / "alpha" / "charB");

    // Two 8x8 grayscale classes: dark-on-light disk and bar.
    auto write_class = [&](const fs::path& dir, bool bar) {
        for (int n = 0; n < 3; ++n) {
            RawImage img;
            img.width = img.height = 8;
            img.channels = 1;
            img.pixels.assign(64, 255);
            for (int y = 2; y < 6; ++y)
                for (int x = 2; x < 6; ++x)
                    if (bar ? (y == 3 + n % 2) : true)
                        img.pixels[static_cast<std::size_t>(y * 8 + x)] = 10;
            write_png((dir / ("img" + std::to_string(n) + ".png")).string(), img);
        }
    };
    write_class(root / "alpha" / "charA", false);
    write_class(root / "alpha" / "charB", true);

    RawImage back = read_png((root / "alpha" / "charA" / "img0.png").string());
    CHECK(back.width == 8);
    CHECK(back.channels == 1);
    CHECK(back.pixels[0] == 255);
    CHECK(back.pixels[2 * 8 + 2] == 10);

    ClassPool pool = load_image_tree(root.string(), 28, 1);
    REQUIRE(pool.classes.size() == 2);
    CHECK(pool.class_names[0] == "alpha/charA");
    CHECK(pool.classes[0].size() == 3);
    // ink=1 convention: bright background got inverted, so mean is low
    float mean = 0;
    for (std::size_t i = 0; i < pool.classes[0][0].size(); ++i)
        mean += pool.classes[0][0].at(i);
    CHECK(mean / static_cast<float>(pool.classes[0][0].size()) < 0.5f);

    // Split filtering keeps only listed class paths.
    const fs::path split = root / "keep.split";
    std::ofstream(split) << "alpha/charB\n";
    ClassPool filtered = filter_classes(pool, split.string());
    REQUIRE(filtered.classes.size() == 1);
    CHECK(filtered.class_names[0] == "alpha/charB");

    CHECK_THROWS_AS(load_image_tree((root / "missing").string(), 28, 1), IoError);
    // A corrupt PNG reports its path.
    std::ofstream(root / "alpha" / "charA" / "img0.png", std::ios::trunc) << "not a png";
    CHECK_THROWS_AS(load_image_tree(root.string(), 28, 1), IoError);
    fs::remove_all(root);
}
