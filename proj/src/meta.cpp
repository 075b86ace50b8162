#include "widemeta/meta.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace widemeta {

const char* algorithm_name(Algorithm a) {
    switch (a) {
        case Algorithm::FOMAML: return "fomaml";
        case Algorithm::ANIL: return "anil";
        case Algorithm::MAC: return "mac";
    }
    return "?";
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    // splitmix64 over the concatenated words
    auto mix = [](std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    };
    return mix(mix(mix(seed) ^ a) ^ b);
}

float accuracy(const Tensor<float>& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2 || logits.dim(0) != labels.size())
        throw DimensionError("accuracy: logits " + shape_str(logits.shape) + " vs " +
                             std::to_string(labels.size()) + " labels");
    const std::size_t B = logits.dim(0), N = logits.dim(1);
    std::size_t hits = 0;
    for (std::size_t b = 0; b < B; ++b) {
        const float* row = logits.ptr() + b * N;
        std::size_t best = 0;
        for (std::size_t j = 1; j < N; ++j)
            if (row[j] > row[best]) best = j;
        if (static_cast<int>(best) == labels[b]) ++hits;
    }
    return static_cast<float>(hits) / static_cast<float>(B);
}

namespace {

bool is_head(const std::string& name) { return name.rfind("head.", 0) == 0; }

bool mask_any(const Tensor<float>& m) {
    for (std::size_t i = 0; i < m.size(); ++i)
        if (m.at(i) != 0.0f) return true;
    return false;
}

void select_scope(Model<float>& m, AdaptScope scope) {
    switch (scope) {
        case AdaptScope::all_params:
            m.set_requires_grad(true);
            break;
        case AdaptScope::head_only:
            for (auto& [name, p] : m.params) p.requires_grad = is_head(name);
            break;
        case AdaptScope::acu_and_head:
            if (!m.widened())
                throw ConfigError("inner_adapt: scope acu_and_head requires a widened model");
            for (auto& [name, p] : m.params) p.requires_grad = mask_any(m.masks.at(name));
            break;
    }
}

float group_lr(const InnerConfig& cfg, const std::string& name) {
    const char* group = is_head(name) ? "head" : "hidden";
    auto it = cfg.per_group_lr.find(group);
    return it == cfg.per_group_lr.end() ? cfg.alpha : it->second;
}

void apply_masked_update(Model<float>& m, const Gradients<float>& grads, const InnerConfig& cfg) {
    for (const auto& [name, g] : grads) {
        Gradients<float> one;
        one.emplace(name, g);
        std::map<std::string, Tensor<float>> target;
        target.emplace(name, m.params.at(name));
        sgd_step(target, one, group_lr(cfg, name), &m.masks);
        // sgd_step mutates shared storage; nothing to copy back.
    }
}

}  // namespace

Model<float> inner_adapt(const Model<float>& m, const Tensor<float>& support_x,
                         const std::vector<int>& support_y, const InnerConfig& cfg) {
    if (cfg.steps < 1) throw ConfigError("inner_adapt: steps must be >= 1");
    Model<float> adapted = clone_model(m);
    select_scope(adapted, cfg.scope);
    for (int s = 0; s < cfg.steps; ++s) {
        Tape<float> tape;
        Tensor<float> loss = softmax_cross_entropy(forward(adapted, support_x, &tape),
                                                   support_y, &tape);
        Gradients<float> grads = backward(tape, loss, adapted.params);
        apply_masked_update(adapted, grads, cfg);
    }
    return adapted;
}

float meta_loss(const std::vector<Model<float>>& adapted, const std::vector<Episode>& episodes) {
    if (adapted.size() != episodes.size())
        throw ContractError("meta_loss: " + std::to_string(adapted.size()) + " models vs " +
                            std::to_string(episodes.size()) + " episodes");
    float total = 0;
    for (std::size_t i = 0; i < adapted.size(); ++i) {
        Tensor<float> logits = forward(adapted[i], episodes[i].query_x);
        total += softmax_cross_entropy(logits, episodes[i].query_y, (Tape<float>*)nullptr).at(0);
    }
    return total;
}

OuterStats outer_update_fomaml(Model<float>& m, const std::vector<Episode>& episodes,
                               const MetaConfig& cfg) {
    if (cfg.algorithm == Algorithm::MAC)
        throw ConfigError("outer_update_fomaml: MAC trains as ANIL; pass algorithm=ANIL");
    InnerConfig inner = cfg.inner;
    inner.scope =
        cfg.algorithm == Algorithm::FOMAML ? AdaptScope::all_params : AdaptScope::head_only;

    Gradients<float> total;
    OuterStats stats;
    for (const auto& ep : episodes) {
        Model<float> adapted = inner_adapt(m, ep.support_x, ep.support_y, inner);
        adapted.set_requires_grad(true);  // outer update touches all parameters
        Tape<float> tape;
        Tensor<float> logits = forward(adapted, ep.query_x, &tape);
        Tensor<float> loss = softmax_cross_entropy(logits, ep.query_y, &tape);
        stats.meta_loss += loss.at(0);
        stats.query_accuracy += accuracy(logits, ep.query_y);
        Gradients<float> g = backward(tape, loss, adapted.params);
        if (total.empty()) {
            total = std::move(g);
        } else {
            for (auto& [name, t] : total) {
                const auto& src = g.at(name);
                for (std::size_t i = 0; i < t.size(); ++i) t.at(i) += src.at(i);
            }
        }
    }
    stats.query_accuracy /= static_cast<float>(episodes.size());
    if (cfg.outer_loss_reduction == LossReduction::mean) {
        const float inv = 1.0f / static_cast<float>(episodes.size());
        for (auto& [name, t] : total)
            for (std::size_t i = 0; i < t.size(); ++i) t.at(i) *= inv;
        stats.meta_loss *= inv;
    }
    sgd_step(m.params, total, cfg.eta, &m.masks);
    return stats;
}

void meta_train(Model<float>& m, const TaskSampler& sampler, const MetaConfig& cfg,
                const MetricsHook& hook, int log_every) {
    MetaConfig outer_cfg = cfg;
    if (outer_cfg.algorithm == Algorithm::MAC) outer_cfg.algorithm = Algorithm::ANIL;
    for (int it = 0; it < cfg.iterations; ++it) {
        std::vector<Episode> batch;
        batch.reserve(static_cast<std::size_t>(cfg.meta_batch));
        for (int b = 0; b < cfg.meta_batch; ++b) {
            std::mt19937 rng(static_cast<std::uint32_t>(
                mix_seed(cfg.seed, static_cast<std::uint64_t>(it), static_cast<std::uint64_t>(b))));
            batch.push_back(sampler(rng));
        }
        OuterStats stats = outer_update_fomaml(m, batch, outer_cfg);
        if (hook && (it % log_every == 0 || it == cfg.iterations - 1))
            hook(it, stats.meta_loss, stats.query_accuracy);
    }
}

namespace {

EvalReport finish_report(std::vector<float> accs) {
    EvalReport r;
    r.n_tasks = static_cast<int>(accs.size());
    float mean = 0;
    for (float a : accs) mean += a;
    mean /= static_cast<float>(accs.size());
    float var = 0;
    for (float a : accs) var += (a - mean) * (a - mean);
    var /= static_cast<float>(accs.size());
    r.per_task_accuracy = std::move(accs);
    r.mean = mean;
    r.stddev = std::sqrt(var);
    return r;
}

// Runs fn(i) for i in [0, n) on n_threads, writing results by index.
void parallel_for(int n, int n_threads, const std::function<void(int)>& fn) {
    if (n_threads <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> workers;
    std::atomic<int> next{0};
    for (int t = 0; t < n_threads; ++t)
        workers.emplace_back([&] {
            for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
        });
    for (auto& w : workers) w.join();
}

}  // namespace

EvalReport evaluate(const Model<float>& m, const std::vector<Episode>& tasks,
                    const InnerConfig& cfg, int n_threads) {
    if (tasks.empty()) throw ContractError("evaluate: empty task list");
    std::vector<float> accs(tasks.size());
    parallel_for(static_cast<int>(tasks.size()), n_threads, [&](int i) {
        const auto& ep = tasks[static_cast<std::size_t>(i)];
        Model<float> adapted = inner_adapt(m, ep.support_x, ep.support_y, cfg);
        Tensor<float> logits = forward(adapted, ep.query_x);
        accs[static_cast<std::size_t>(i)] = accuracy(logits, ep.query_y);
    });
    EvalReport r = finish_report(std::move(accs));
    r.config_snapshot["scope"] = cfg.scope == AdaptScope::head_only ? "head_only"
                                 : cfg.scope == AdaptScope::all_params ? "all_params"
                                                                       : "acu_and_head";
    r.config_snapshot["steps"] = std::to_string(cfg.steps);
    if (!tasks.empty()) {
        r.config_snapshot["n_way"] = std::to_string(tasks[0].n_way);
        r.config_snapshot["k_shot"] = std::to_string(tasks[0].k_shot);
    }
    return r;
}

EvalReport mac_meta_test(const Model<float>& m, const WidenPlan& plan,
                         const std::vector<Episode>& tasks, const InnerConfig& cfg,
                         int n_threads) {
    if (tasks.empty()) throw ContractError("mac_meta_test: empty task list");
    if (plan.z.size() != m.modules.size())
        throw ConfigError("mac_meta_test: plan length " + std::to_string(plan.z.size()) +
                          " vs " + std::to_string(m.modules.size()) + " modules");
    InnerConfig inner = cfg;
    inner.scope = AdaptScope::acu_and_head;

    std::vector<float> accs(tasks.size());
    parallel_for(static_cast<int>(tasks.size()), n_threads, [&](int i) {
        const auto& ep = tasks[static_cast<std::size_t>(i)];
        // Fresh theta+ draw per task.
        std::mt19937 rng(static_cast<std::uint32_t>(
            mix_seed(plan.seed, static_cast<std::uint64_t>(i))));
        auto [widened, report] = widen(m, plan, rng);
        Model<float> adapted = inner_adapt(widened, ep.support_x, ep.support_y, inner);
        Tensor<float> logits = forward(adapted, ep.query_x);
        accs[static_cast<std::size_t>(i)] = accuracy(logits, ep.query_y);
    });
    EvalReport r = finish_report(std::move(accs));
    r.seeds_used.push_back(plan.seed);
    r.config_snapshot["algorithm"] = "mac";
    r.config_snapshot["steps"] = std::to_string(cfg.steps);
    r.config_snapshot["n_way"] = std::to_string(tasks[0].n_way);
    r.config_snapshot["k_shot"] = std::to_string(tasks[0].k_shot);
    std::string zs;
    for (std::size_t l = 0; l < plan.z.size(); ++l)
        zs += (l ? "," : "") + std::to_string(plan.z[l]);
    r.config_snapshot["widen_z"] = zs;
    return r;
}

}  // namespace widemeta
