#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "widemeta/model.hpp"

namespace widemeta {

// Per-module ACU filter counts. z[l] == 0 leaves module l untouched.
struct WidenPlan {
    std::vector<int> z;
    std::uint64_t seed = 0;
    // Standard-normal ACU init is the default; scaled_init switches to
    // sqrt(2/fan_in) for experiments.
    bool scaled_init = false;
    // When true, the hidden-layer [old-out, new-in] zero blocks are marked
    // trainable instead of frozen-at-zero.
    bool train_hidden_zero_blocks = false;
};

constexpr int kMaxAcuPerLayer = 50;

struct WidenLayerInfo {
    std::string name;
    int old_filters;
    int new_filters;
};

struct WidenReport {
    std::vector<WidenLayerInfo> layers;
    std::vector<std::string> frozen;
    std::vector<std::string> trainable;
    std::vector<std::string> zero_blocks;
};

// Expands each conv module by plan.z[l] filters with the block layout
//   W' = [[W_old, 0], [W_new_old, W_new_new]],  b' = [b_old | b_new]
// where the new blocks are drawn from the plan's init and the head gains a
// zero extension over the new flattened features. Masks confine later
// adaptation to the new blocks and the head.
std::pair<Model<float>, WidenReport> widen(const Model<float>& m, const WidenPlan& plan,
                                           std::mt19937& rng);
std::pair<Model<float>, WidenReport> widen(const Model<float>& m, const WidenPlan& plan);

struct FunctionPreservation {
    float max_logit_diff = 0;
    // Largest deviation of the widened model's old-channel feature maps from
    // the base model's, over all depths.
    float max_old_feature_diff = 0;
};

FunctionPreservation verify_function_preservation(const Model<float>& base,
                                                  const Model<float>& widened,
                                                  const Tensor<float>& batch);

struct FrozenCheck {
    bool pass = true;
    std::string first_offender;
};

// Checks that every mask-zero coordinate is bit-identical between the two
// models and that the hidden-layer zero blocks are exactly zero in `after`.
FrozenCheck assert_frozen(const Model<float>& before, const Model<float>& after);

}  // namespace widemeta
