#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "widemeta/experiment.hpp"

namespace fs = std::filesystem;
using namespace widemeta;

namespace {

KeyValueConfig tiny_kv(const std::string& outdir) {
    return KeyValueConfig::from_string(
        "run.id = tiny\n"
        "model.base_filters = 4\n"
        "task.n_way = 5\n"
        "task.k_shot = 1\n"
        "task.q_queries = 2\n"
        "meta.iterations = 2\n"
        "meta.meta_batch = 2\n"
        "meta.eta = 0.01\n"
        "meta.algorithms = anil\n"
        "meta.inner.steps = 1\n"
        "eval.n_task_batches = 3\n"
        "eval.inner_steps = 2\n"
        "eval.q_queries = 2\n"
        "widen.z = 1,1,1,1\n"
        "data.synth.n_classes = 8\n"
        "seeds = 3\n"
        "output_dir = " + outdir + "\n");
}

}  // namespace

TEST_CASE("experiment config: defaults, presets, validation") {
    ExperimentConfig cfg = ExperimentConfig::from_kv(tiny_kv("/tmp/x"));
    CHECK(cfg.model.n_way == 5);  // follows task.n_way
    CHECK(cfg.meta.outer_loss_reduction == LossReduction::sum);
    CHECK(cfg.blur.kernel_choices == std::vector<int>{5, 7, 9});
    CHECK(cfg.widen.z == std::vector<int>{1, 1, 1, 1});

    KeyValueConfig preset = tiny_kv("/tmp/x");
    preset.set("widen.preset", "mac_opt_omniglot_text");
    preset.set("widen.z", "");
    CHECK(ExperimentConfig::from_kv(preset).widen.z == std::vector<int>{45, 35, 20, 10});

    auto expect_reject = [&](const char* key, const char* value) {
        KeyValueConfig bad = tiny_kv("/tmp/x");
        bad.set(key, value);
        CHECK_THROWS_AS(ExperimentConfig::from_kv(bad), ConfigError);
    };
    expect_reject("task.n_way", "1");
    expect_reject("widen.z", "1,1,1");       // wrong plan length
    expect_reject("widen.z", "51,0,0,0");    // over the per-layer cap
    expect_reject("blur.kernels", "4,5");    // even kernel
    expect_reject("meta.algorithms", "sgd");
    expect_reject("data.source", "imagenet");
    expect_reject("data.synth.n_classes", "3");  // fewer classes than ways
}

TEST_CASE("WIDEMETA_DATA overrides data.root") {
    KeyValueConfig kv = tiny_kv("/tmp/x");
    kv.set("data.root", "/from/config");
    setenv("WIDEMETA_DATA", "/from/env", 1);
    CHECK(ExperimentConfig::from_kv(kv).data.root == "/from/env");
    unsetenv("WIDEMETA_DATA");
    CHECK(ExperimentConfig::from_kv(kv).data.root == "/from/config");
}

TEST_CASE("output lock: exclusive while held, released on destruction") {
    const std::string dir = (fs::temp_directory_path() / "widemeta_lock").string();
    fs::remove_all(dir);
    {
        OutputLock lock(dir);
        CHECK_THROWS_AS(OutputLock{dir}, IoError);
    }
    OutputLock again(dir);  // reacquirable after release
    fs::remove_all(dir);
}

TEST_CASE("metrics writer emits the exact header once") {
    const std::string path = (fs::temp_directory_path() / "widemeta_metrics.csv").string();
    fs::remove(path);
    {
        MetricsWriter w(path);
        w.row("r1", 7, "train", 0, "anil", 0.5f, 1.25f, 42);
        MetricsWriter w2(path);  // reopening must not duplicate the header
        w2.row("r1", 7, "eval", 10, "mac/blurred", 0.75f, 0.0f, 7);
    }
    std::ifstream is(path);
    std::string l1, l2, l3, l4;
    std::getline(is, l1);
    std::getline(is, l2);
    std::getline(is, l3);
    CHECK(l1 == "run_id,seed,phase,iteration,algorithm,mean_accuracy,meta_loss,wall_ms");
    CHECK(l2 == "r1,7,train,0,anil,0.5000,1.2500,42");
    CHECK(l3 == "r1,7,eval,10,mac/blurred,0.7500,0.0000,7");
    CHECK_FALSE(std::getline(is, l4));
    fs::remove(path);
}

TEST_CASE("labeled report JSON round trip") {
    LabeledReport r;
    r.algorithm = "mac";
    r.seed = 11;
    r.condition = "blurred";
    r.report.per_task_accuracy = {0.5f, 0.75f, 1.0f};
    r.report.mean = 0.75f;
    r.report.stddev = 0.2041f;
    r.report.n_tasks = 3;
    r.report.seeds_used = {11};
    r.report.config_snapshot = {{"n_way", "5"}, {"k_shot", "1"}, {"widen_z", "1,1,1,1"}};

    const std::string path = (fs::temp_directory_path() / "widemeta_rep.json").string();
    save_labeled_report(r, path);
    LabeledReport back = load_labeled_report(path);
    CHECK(back.algorithm == "mac");
    CHECK(back.seed == 11);
    CHECK(back.condition == "blurred");
    CHECK(back.report.per_task_accuracy == r.report.per_task_accuracy);
    CHECK(back.report.config_snapshot.at("widen_z") == "1,1,1,1");

    // Identical content serializes byte-identically.
    const std::string path2 = (fs::temp_directory_path() / "widemeta_rep2.json").string();
    save_labeled_report(back, path2);
    std::ifstream a(path), b(path2);
    std::string sa((std::istreambuf_iterator<char>(a)), {});
    std::string sb((std::istreambuf_iterator<char>(b)), {});
    CHECK(sa == sb);
    fs::remove(path);
    fs::remove(path2);
}

TEST_CASE("report table: labels, delta vs ANIL, footer, csv twin") {
    auto rec = [](const char* alg, std::uint64_t seed, const char* cond, float mean) {
        LabeledReport r;
        r.algorithm = alg;
        r.seed = seed;
        r.condition = cond;
        r.report.mean = mean;
        r.report.config_snapshot = {{"n_way", "5"}, {"k_shot", "1"}};
        return r;
    };
    std::vector<LabeledReport> recs{
        rec("anil", 1, "blurred", 0.60f),  rec("anil", 2, "blurred", 0.62f),
        rec("mac", 1, "blurred", 0.70f),   rec("mac", 2, "blurred", 0.68f),
        rec("fomaml", 1, "blurred", 0.55f)};
    ReportTables t = format_report(recs);
    CHECK(t.text.find("MAML(first-order)") != std::string::npos);
    CHECK(t.text.find("first-order approximation (FOMAML)") != std::string::npos);
    CHECK(t.text.find("5-way 1-shot") != std::string::npos);

    // CSV twin re-parses to the same values; MAC delta = 69 - 61 points.
    std::istringstream csv(t.csv);
    std::string line;
    std::getline(csv, line);
    CHECK(line == "algorithm,condition,n_way,k_shot,mean_accuracy,delta_vs_anil");
    bool saw_mac = false;
    while (std::getline(csv, line)) {
        if (line.rfind("mac,", 0) == 0) {
            saw_mac = true;
            CHECK(line == "mac,blurred,5,1,69.0000,8.0000");
        }
        if (line.rfind("anil,", 0) == 0) CHECK(line == "anil,blurred,5,1,61.0000,");
    }
    CHECK(saw_mac);

    // Mixed task settings are a hard error.
    recs.push_back(rec("anil", 1, "clean", 0.9f));
    recs.back().report.config_snapshot["k_shot"] = "5";
    CHECK_THROWS_AS(format_report(recs), ContractError);
}

TEST_CASE("cost report covers base, widened, and deep variants") {
    ExperimentConfig cfg = ExperimentConfig::from_kv(tiny_kv("/tmp/x"));
    ReportTables t = cost_report(cfg);
    CHECK(t.text.find("M (base, ANIL)") != std::string::npos);
    CHECK(t.text.find("M' (MAC)") != std::string::npos);
    CHECK(t.text.find("M'_deep (MAC)") != std::string::npos);
    CHECK(t.csv.find("variant,forward_mults,trainable_grad_count") == 0);
}

TEST_CASE("sweep: grid file, position constraint, budget enforcement") {
    const std::string grid = (fs::temp_directory_path() / "widemeta_grid.cfg").string();
    std::ofstream(grid) << "position = initial_layers\nz1 = 0,2\nz2 = 0,2\nz3 = 0,2\n";
    SweepSpec spec = sweep_spec_from_file(grid, 4);
    CHECK(spec.position == SweepPosition::initial_layers);
    REQUIRE(spec.z_candidates.size() == 4);
    CHECK(spec.z_candidates[3] == std::vector<int>{0});  // unlisted layer pins to 0

    ExperimentConfig cfg = ExperimentConfig::from_kv(tiny_kv("/tmp/x"));
    ModelConfig mc = cfg.model;
    std::mt19937 rng(4);
    Model<float> m = build_model<float>(mc, rng);
    ClassPool pool = make_test_pool(cfg);
    std::vector<Episode> tasks = make_test_episodes(cfg, pool, 3, true);

    // initial_layers pins z3 anyway: 2*2*1*1 = 4 evaluations.
    cfg.sweep_budget = 4;
    SweepResult res = sweep_acu(m, tasks, spec, cfg);
    CHECK(res.rows.size() == 5);  // 4 grid rows + configured-plan reference
    CHECK(res.rows.back().is_opt_reference);
    int n_grid = 0;
    for (const auto& row : res.rows)
        if (!row.is_opt_reference) {
            ++n_grid;
            CHECK(row.z[2] == 0);
            CHECK(row.z[3] == 0);
        }
    CHECK(n_grid == 4);
    CHECK(res.best_accuracy >= res.rows[0].mean_accuracy);

    cfg.sweep_budget = 3;
    CHECK_THROWS_AS(sweep_acu(m, tasks, spec, cfg), ContractError);

    std::ofstream(grid) << "position = all_layers\nz1 = 60\n";
    SweepSpec over = sweep_spec_from_file(grid, 4);
    cfg.sweep_budget = 64;
    CHECK_THROWS_AS(sweep_acu(m, tasks, over, cfg), ConfigError);
    fs::remove(grid);
}

TEST_CASE("end-to-end tiny run writes checkpoints, metrics, and reports") {
    const std::string dir = (fs::temp_directory_path() / "widemeta_run").string();
    fs::remove_all(dir);
    ExperimentConfig cfg = ExperimentConfig::from_kv(tiny_kv(dir));
    RunResult result = run(cfg);

    // anil clean + anil blurred + mac blurred
    CHECK(result.reports.size() == 3);
    CHECK(fs::exists(dir + "/ckpt_anil_seed3.bin"));
    CHECK(fs::exists(dir + "/metrics.csv"));
    CHECK(fs::exists(dir + "/report.txt"));
    CHECK(fs::exists(dir + "/report.csv"));
    CHECK(fs::exists(dir + "/report_anil_clean_seed3.json"));
    CHECK(fs::exists(dir + "/report_mac_blurred_seed3.json"));
    CHECK_FALSE(fs::exists(dir + "/.lock"));  // released

    Model<float> m = load_checkpoint(dir + "/ckpt_anil_seed3.bin");
    CHECK(m.cfg.base_filters == 4);
    fs::remove_all(dir);
}
