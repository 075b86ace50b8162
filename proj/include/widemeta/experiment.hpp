#pragma once

#include "widemeta/config.hpp"
#include "widemeta/data.hpp"

namespace widemeta {

// Named ACU plan presets from the sweep results.
std::vector<int> mac_opt_omniglot_text();     // [45,35,20,10]
std::vector<int> mac_opt_omniglot_caption();  // [50,40,25,20]
std::vector<int> mac_opt_miniimagenet();      // [50,40,25,20]

struct EvalSettings {
    int n_task_batches = 100;
    int inner_steps = 10;
    float alpha = 0.4f;
    std::map<std::string, float> per_group_lr;
    int q_queries = 15;
};

struct DataConfig {
    std::string source = "synthetic";  // synthetic | omniglot_tree
    std::string root;
    SynthGlyphConfig synth;  // test pool uses seed+1
};

struct ExperimentConfig {
    std::string run_id = "run";
    ModelConfig model;
    MetaConfig meta;
    std::vector<Algorithm> algorithms = {Algorithm::ANIL};
    int n_way = 5;
    int k_shot = 5;
    int q_queries = 5;
    EvalSettings eval;
    WidenPlan widen;
    BlurConfig blur;
    DataConfig data;
    std::vector<std::uint64_t> seeds = {7};
    std::string output_dir = "out";
    int sweep_budget = 64;
    int eval_threads = 1;

    static ExperimentConfig from_file(const std::string& path);
    static ExperimentConfig from_kv(const KeyValueConfig& kv);
    void validate() const;
};

// Exclusive ownership of an output directory for the lifetime of a run.
class OutputLock {
  public:
    explicit OutputLock(const std::string& dir);
    ~OutputLock();
    OutputLock(const OutputLock&) = delete;
    OutputLock& operator=(const OutputLock&) = delete;

  private:
    std::string path_;
};

// Append-only metrics stream:
// run_id,seed,phase,iteration,algorithm,mean_accuracy,meta_loss,wall_ms
class MetricsWriter {
  public:
    explicit MetricsWriter(const std::string& path);
    void row(const std::string& run_id, std::uint64_t seed, const std::string& phase,
             int iteration, const std::string& algorithm, float mean_accuracy, float meta_loss,
             long wall_ms);

  private:
    std::string path_;
};

struct LabeledReport {
    std::string algorithm;  // "fomaml", "anil", "mac"
    std::uint64_t seed = 0;
    std::string condition;  // "clean" | "blurred"
    EvalReport report;
};

struct RunResult {
    std::vector<LabeledReport> reports;
};

// Trains each configured algorithm per seed, evaluates on clean and blurred
// meta-test tasks (MAC on blurred, from the ANIL checkpoint), and writes
// checkpoints, metrics, eval reports, and the aggregate comparison table.
RunResult run(const ExperimentConfig& cfg);

// Deterministic meta-test episode sets for an experiment seed.
std::vector<Episode> make_test_episodes(const ExperimentConfig& cfg, const ClassPool& test_pool,
                                        std::uint64_t seed, bool blurred);

ClassPool make_train_pool(const ExperimentConfig& cfg);
ClassPool make_test_pool(const ExperimentConfig& cfg);

enum class SweepPosition { initial_layers, end_layers, all_layers };

struct SweepSpec {
    SweepPosition position = SweepPosition::all_layers;
    std::vector<std::vector<int>> z_candidates;  // one candidate set per layer
};

SweepSpec sweep_spec_from_file(const std::string& path, std::size_t n_modules);

struct SweepRow {
    std::vector<int> z;
    float mean_accuracy = 0;
    bool is_opt_reference = false;
};

struct SweepResult {
    std::vector<SweepRow> rows;
    std::vector<int> best;
    float best_accuracy = 0;
};

// Evaluates every candidate plan against one shared trained model.
SweepResult sweep_acu(const Model<float>& trained, const std::vector<Episode>& tasks,
                      const SweepSpec& spec, const ExperimentConfig& cfg);

// Comparison table over collected reports; plain text plus a CSV twin.
struct ReportTables {
    std::string text;
    std::string csv;
};

ReportTables format_report(const std::vector<LabeledReport>& records);

void save_labeled_report(const LabeledReport& r, const std::string& path);
LabeledReport load_labeled_report(const std::string& path);

// Forward-cost and trainable-gradient table for M, M', and M'_deep.
ReportTables cost_report(const ExperimentConfig& cfg);

}  // namespace widemeta
