#pragma once

#include <functional>

#include "widemeta/widening.hpp"

namespace widemeta {

// One N-way K-shot task: support set for adaptation, query set for scoring.
struct Episode {
    Tensor<float> support_x;  // [N*K, C, H, W]
    std::vector<int> support_y;
    Tensor<float> query_x;  // [N*Q, C, H, W]
    std::vector<int> query_y;
    int n_way = 0;
    int k_shot = 0;
    int q_queries = 0;
};

enum class AdaptScope { all_params, head_only, acu_and_head };

struct InnerConfig {
    int steps = 1;
    float alpha = 0.4f;
    AdaptScope scope = AdaptScope::all_params;
    // Optional per-group rates, keys "hidden" and "head"; falls back to alpha.
    std::map<std::string, float> per_group_lr;
};

enum class Algorithm { FOMAML, ANIL, MAC };

enum class LossReduction { sum, mean };

struct MetaConfig {
    int iterations = 1000;
    int meta_batch = 8;
    float eta = 0.01f;
    Algorithm algorithm = Algorithm::ANIL;
    InnerConfig inner;
    std::uint64_t seed = 0;
    LossReduction outer_loss_reduction = LossReduction::sum;
};

struct EvalReport {
    std::vector<float> per_task_accuracy;
    float mean = 0;
    float stddev = 0;
    int n_tasks = 0;
    std::vector<std::uint64_t> seeds_used;
    std::map<std::string, std::string> config_snapshot;
};

const char* algorithm_name(Algorithm a);

// Deterministic stream-splitting hash for per-(seed, index) generators.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

// Fraction of argmax matches; ties resolve to the lowest class index.
float accuracy(const Tensor<float>& logits, const std::vector<int>& labels);

// `steps` full-support-batch gradient steps on a clone; only parameters
// selected by scope (and their masks) move.
Model<float> inner_adapt(const Model<float>& m, const Tensor<float>& support_x,
                         const std::vector<int>& support_y, const InnerConfig& cfg);

// Sum over tasks of query-set cross-entropy of each adapted model.
float meta_loss(const std::vector<Model<float>>& adapted, const std::vector<Episode>& episodes);

struct OuterStats {
    float meta_loss = 0;
    float query_accuracy = 0;  // mean over the batch, at adapted parameters
};

// One first-order outer step: adapt per episode, take the query-loss gradient
// at the adapted parameters, accumulate over the batch, apply to `m`.
OuterStats outer_update_fomaml(Model<float>& m, const std::vector<Episode>& episodes,
                               const MetaConfig& cfg);

using TaskSampler = std::function<Episode(std::mt19937& rng)>;
using MetricsHook = std::function<void(int iteration, float meta_loss, float probe_accuracy)>;

void meta_train(Model<float>& m, const TaskSampler& sampler, const MetaConfig& cfg,
                const MetricsHook& hook = nullptr, int log_every = 100);

// Per-task adaptation then query accuracy. Deterministic; `n_threads` > 1
// runs tasks in parallel with identical results.
EvalReport evaluate(const Model<float>& m, const std::vector<Episode>& tasks,
                    const InnerConfig& cfg, int n_threads = 1);

// Algorithm for meta-testing with ACUs: each task independently widens a
// clone with a fresh standard-normal draw, adapts [ACU, head] on the support
// set, and scores the query set.
EvalReport mac_meta_test(const Model<float>& m, const WidenPlan& plan,
                         const std::vector<Episode>& tasks, const InnerConfig& cfg,
                         int n_threads = 1);

}  // namespace widemeta
