#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "widemeta/meta.hpp"

namespace widemeta {

// Immutable-after-load collection of classes; each image is [C,H,W] in [0,1].
struct ClassPool {
    std::vector<std::vector<Tensor<float>>> classes;
    std::vector<std::string> class_names;
    int channels = 1;
    int image_size = 28;
};

enum class BlurApply { meta_test_only, none };
enum class BlurDraw { per_image, per_task };
enum class BlurTarget { both, support_only, query_only };

struct BlurConfig {
    std::vector<int> kernel_choices = {5, 7, 9};
    float sigma_min = 0.1f;
    float sigma_max = 5.0f;
    BlurApply apply = BlurApply::meta_test_only;
    BlurDraw draw = BlurDraw::per_image;
    BlurTarget target = BlurTarget::both;
};

struct SynthGlyphConfig {
    int n_classes = 20;
    int strokes_per_glyph = 4;
    float jitter_std = 0.06f;
    int image_size = 28;
    std::uint64_t seed = 0;
};

// Raw 8-bit image as decoded from disk.
struct RawImage {
    int width = 0;
    int height = 0;
    int channels = 0;  // 1 or 3
    std::vector<std::uint8_t> pixels;  // row-major, interleaved
};

RawImage read_png(const std::string& path);
void write_png(const std::string& path, const RawImage& img);

// Loads every leaf directory under `root` that contains PNGs as one class
// (covers both <root>/<alphabet>/<char>/*.png and <root>/<class>/*.png).
// Images are bilinearly resized, scaled to [0,1], and stored ink=1: sources
// with a bright background are inverted.
ClassPool load_image_tree(const std::string& root, int image_size, int channels);

// Restricts a pool to the class paths listed (one per line) in a split file.
ClassPool filter_classes(const ClassPool& pool, const std::string& split_file);

// Each class spawns rotations 0/90/180/270 as four distinct classes.
ClassPool rotate_augment(const ClassPool& pool);

Episode sample_episode(const ClassPool& pool, int n_way, int k_shot, int q_queries,
                       std::mt19937& rng);

// Normalized isotropic kernel, sum exactly 1.
Tensor<float> gaussian_kernel(int size, float sigma);

// Blur with a per-call random (size, sigma) draw; reflect border, clamped.
Tensor<float> gaussian_blur(const Tensor<float>& image, const BlurConfig& cfg,
                            std::mt19937& rng);

// Applies the configured blur to an episode's support/query images.
Episode blur_episode(const Episode& ep, const BlurConfig& cfg, std::mt19937& rng);

// Deterministic polyline-glyph classes; instances are the class template
// under small rotation/translation jitter.
ClassPool synth_glyph_pool(const SynthGlyphConfig& cfg, int instances_per_class = 20);

}  // namespace widemeta
