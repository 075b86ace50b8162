#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "widemeta/experiment.hpp"

namespace fs = std::filesystem;
using namespace widemeta;

namespace {

int cmd_train(const std::string& config_path) {
    const ExperimentConfig cfg = ExperimentConfig::from_file(config_path);
    const RunResult result = run(cfg);
    std::cout << format_report(result.reports).text;
    std::cout << "outputs: " << cfg.output_dir << "\n";
    return 0;
}

int cmd_eval(const std::string& config_path, const std::string& ckpt_path, bool blur) {
    const ExperimentConfig cfg = ExperimentConfig::from_file(config_path);
    const Model<float> model = load_checkpoint(ckpt_path);
    const ClassPool pool = make_test_pool(cfg);
    const std::vector<Episode> tasks = make_test_episodes(cfg, pool, cfg.seeds[0], blur);

    InnerConfig ecfg;
    ecfg.steps = cfg.eval.inner_steps;
    ecfg.alpha = cfg.eval.alpha;
    ecfg.per_group_lr = cfg.eval.per_group_lr;
    ecfg.scope = model.widened() ? AdaptScope::acu_and_head : AdaptScope::head_only;

    EvalReport rep;
    if (!model.widened() && !cfg.widen.z.empty() && blur) {
        WidenPlan plan = cfg.widen;
        plan.seed = mix_seed(cfg.seeds[0], 0xAC);
        rep = mac_meta_test(model, plan, tasks, ecfg, cfg.eval_threads);
    } else {
        rep = evaluate(model, tasks, ecfg, cfg.eval_threads);
    }
    std::cout << "tasks=" << rep.n_tasks << " condition=" << (blur ? "blurred" : "clean")
              << " mean_accuracy=" << rep.mean * 100 << "% stddev=" << rep.stddev * 100
              << "%\n";
    return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& grid_path,
              const std::string& ckpt_path) {
    ExperimentConfig cfg = ExperimentConfig::from_file(config_path);
    Model<float> model;
    if (!ckpt_path.empty()) {
        model = load_checkpoint(ckpt_path);
    } else {
        std::mt19937 rng(static_cast<std::uint32_t>(mix_seed(cfg.seeds[0], 0xA0, 0)));
        model = build_model<float>(cfg.model, rng);
        const ClassPool train_pool = make_train_pool(cfg);
        MetaConfig mc = cfg.meta;
        mc.algorithm = Algorithm::ANIL;
        mc.seed = mix_seed(cfg.seeds[0], 0xA1, 0);
        meta_train(model,
                   [&](std::mt19937& r) {
                       return sample_episode(train_pool, cfg.n_way, cfg.k_shot, cfg.q_queries, r);
                   },
                   mc);
    }
    const ClassPool pool = make_test_pool(cfg);
    const std::vector<Episode> tasks = make_test_episodes(cfg, pool, cfg.seeds[0], true);
    const SweepSpec spec = sweep_spec_from_file(grid_path, model.modules.size());
    const SweepResult res = sweep_acu(model, tasks, spec, cfg);
    for (const auto& row : res.rows) {
        std::cout << (row.is_opt_reference ? "opt  z=[" : "grid z=[");
        for (std::size_t l = 0; l < row.z.size(); ++l)
            std::cout << (l ? "," : "") << row.z[l];
        std::cout << "] accuracy=" << row.mean_accuracy * 100 << "%\n";
    }
    std::cout << "best z=[";
    for (std::size_t l = 0; l < res.best.size(); ++l)
        std::cout << (l ? "," : "") << res.best[l];
    std::cout << "] accuracy=" << res.best_accuracy * 100 << "%\n";
    return 0;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& csv_out) {
    std::vector<LabeledReport> records;
    for (const auto& dir : inputs) {
        if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
        std::vector<std::string> files;
        for (const auto& e : fs::directory_iterator(dir)) {
            const std::string name = e.path().filename().string();
            if (name.rfind("report_", 0) == 0 && e.path().extension() == ".json")
                files.push_back(e.path().string());
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) records.push_back(load_labeled_report(f));
    }
    const ReportTables tables = format_report(records);
    std::cout << tables.text;
    if (!csv_out.empty()) {
        std::ofstream os(csv_out, std::ios::trunc);
        if (!os) throw IoError("cannot write: " + csv_out);
        os << tables.csv;
    }
    return 0;
}

int cmd_cost(const std::string& config_path) {
    const ExperimentConfig cfg = ExperimentConfig::from_file(config_path);
    std::cout << cost_report(cfg).text;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"meta-learning trainer with meta-test network widening"};
    app.require_subcommand(1);

    std::string config_path, ckpt_path, grid_path, csv_out;
    std::vector<std::string> inputs;
    bool blur = false;

    auto* train = app.add_subcommand("train", "train and evaluate per the config");
    train->add_option("--config", config_path)->required();

    auto* eval = app.add_subcommand("eval", "evaluate a saved checkpoint");
    eval->add_option("--config", config_path)->required();
    eval->add_option("--checkpoint", ckpt_path)->required();
    eval->add_flag("--blur", blur, "blur the meta-test tasks");

    auto* sweep = app.add_subcommand("widen-sweep", "grid-search ACU plans");
    sweep->add_option("--config", config_path)->required();
    sweep->add_option("--grid", grid_path)->required();
    sweep->add_option("--checkpoint", ckpt_path, "reuse a trained checkpoint");

    auto* report = app.add_subcommand("report", "aggregate saved eval reports");
    report->add_option("--inputs", inputs)->required()->expected(-1);
    report->add_option("--csv", csv_out, "also write the CSV twin here");

    auto* cost = app.add_subcommand("cost", "forward-cost and gradient-count table");
    cost->add_option("--config", config_path)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cmd_train(config_path);
        if (eval->parsed()) return cmd_eval(config_path, ckpt_path, blur);
        if (sweep->parsed()) return cmd_sweep(config_path, grid_path, ckpt_path);
        if (report->parsed()) return cmd_report(inputs, csv_out);
        if (cost->parsed()) return cmd_cost(config_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
