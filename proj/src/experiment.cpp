#include "widemeta/experiment.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace widemeta {

std::vector<int> mac_opt_omniglot_text() { return {45, 35, 20, 10}; }
std::vector<int> mac_opt_omniglot_caption() { return {50, 40, 25, 20}; }
std::vector<int> mac_opt_miniimagenet() { return {50, 40, 25, 20}; }

namespace {

Algorithm parse_algorithm(const std::string& s) {
    if (s == "fomaml" || s == "maml") return Algorithm::FOMAML;
    if (s == "anil") return Algorithm::ANIL;
    if (s == "mac") return Algorithm::MAC;
    throw ConfigError("unknown algorithm: " + s);
}

std::vector<int> parse_widen_plan(const KeyValueConfig& kv) {
    const std::string preset = kv.get("widen.preset", "");
    if (preset == "mac_opt_omniglot_text") return mac_opt_omniglot_text();
    if (preset == "mac_opt_omniglot_caption") return mac_opt_omniglot_caption();
    if (preset == "mac_opt_miniimagenet") return mac_opt_miniimagenet();
    if (!preset.empty()) throw ConfigError("unknown widen preset: " + preset);
    return kv.get_int_list("widen.z");
}

long now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::string fmt4(float v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", static_cast<double>(v));
    return buf;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    return from_kv(KeyValueConfig::from_file(path));
}

ExperimentConfig ExperimentConfig::from_kv(const KeyValueConfig& kv) {
    ExperimentConfig cfg;
    cfg.run_id = kv.get("run.id", "run");

    cfg.n_way = kv.get_int("task.n_way", 5);
    cfg.k_shot = kv.get_int("task.k_shot", 5);
    cfg.q_queries = kv.get_int("task.q_queries", 5);

    cfg.model.in_channels = kv.get_int("model.in_channels", 1);
    cfg.model.image_size = kv.get_int("model.image_size", 28);
    cfg.model.n_way = kv.get_int("model.n_way", cfg.n_way);
    cfg.model.base_filters = kv.get_int("model.base_filters", 64);
    const std::string depth = kv.get("model.depth", "standard4");
    if (depth != "standard4" && depth != "deep6")
        throw ConfigError("model.depth must be standard4 or deep6");
    cfg.model.depth = depth == "deep6" ? DepthVariant::deep6 : DepthVariant::standard4;
    cfg.model.stride = kv.get_int("model.stride", 2);
    cfg.model.kernel = kv.get_int("model.kernel", 3);
    cfg.model.padding = kv.get_int("model.padding", 1);

    cfg.meta.iterations = kv.get_int("meta.iterations", 1000);
    cfg.meta.meta_batch = kv.get_int("meta.meta_batch", 8);
    cfg.meta.eta = kv.get_float("meta.eta", 0.01f);
    cfg.meta.inner.steps = kv.get_int("meta.inner.steps", 3);
    cfg.meta.inner.alpha = kv.get_float("meta.inner.alpha", 0.4f);
    if (kv.has("meta.inner.lr.hidden"))
        cfg.meta.inner.per_group_lr["hidden"] = kv.get_float("meta.inner.lr.hidden", 0);
    if (kv.has("meta.inner.lr.head"))
        cfg.meta.inner.per_group_lr["head"] = kv.get_float("meta.inner.lr.head", 0);
    const std::string red = kv.get("meta.outer_loss_reduction", "sum");
    if (red != "sum" && red != "mean")
        throw ConfigError("meta.outer_loss_reduction must be sum or mean");
    cfg.meta.outer_loss_reduction = red == "mean" ? LossReduction::mean : LossReduction::sum;
    cfg.algorithms.clear();
    for (const auto& a : kv.get_str_list("meta.algorithms")) cfg.algorithms.push_back(parse_algorithm(a));
    if (cfg.algorithms.empty()) cfg.algorithms = {Algorithm::ANIL};

    cfg.eval.n_task_batches = kv.get_int("eval.n_task_batches", 100);
    cfg.eval.inner_steps = kv.get_int("eval.inner_steps", 10);
    cfg.eval.alpha = kv.get_float("eval.alpha", 0.4f);
    if (kv.has("eval.lr.hidden")) cfg.eval.per_group_lr["hidden"] = kv.get_float("eval.lr.hidden", 0);
    if (kv.has("eval.lr.head")) cfg.eval.per_group_lr["head"] = kv.get_float("eval.lr.head", 0);
    cfg.eval.q_queries = kv.get_int("eval.q_queries", 15);
    cfg.eval_threads = kv.get_int("eval.threads", 1);

    if (kv.has("widen.z") || kv.has("widen.preset")) cfg.widen.z = parse_widen_plan(kv);
    cfg.widen.scaled_init = kv.get_bool("widen.scaled_init", false);
    cfg.widen.train_hidden_zero_blocks = kv.get_bool("widen.train_hidden_zero_blocks", false);

    if (kv.has("blur.kernels")) cfg.blur.kernel_choices = kv.get_int_list("blur.kernels");
    if (kv.has("blur.sigma")) {
        auto s = kv.get_str_list("blur.sigma");
        if (s.size() != 2) throw ConfigError("blur.sigma needs two comma values");
        cfg.blur.sigma_min = std::stof(s[0]);
        cfg.blur.sigma_max = std::stof(s[1]);
    }
    const std::string apply = kv.get("blur.apply", "meta_test_only");
    if (apply != "meta_test_only" && apply != "none")
        throw ConfigError("blur.apply must be meta_test_only or none");
    cfg.blur.apply = apply == "none" ? BlurApply::none : BlurApply::meta_test_only;
    const std::string draw = kv.get("blur.draw", "per_image");
    if (draw != "per_image" && draw != "per_task")
        throw ConfigError("blur.draw must be per_image or per_task");
    cfg.blur.draw = draw == "per_task" ? BlurDraw::per_task : BlurDraw::per_image;
    const std::string target = kv.get("blur.target", "both");
    if (target == "both") cfg.blur.target = BlurTarget::both;
    else if (target == "support") cfg.blur.target = BlurTarget::support_only;
    else if (target == "query") cfg.blur.target = BlurTarget::query_only;
    else throw ConfigError("blur.target must be both, support, or query");

    cfg.data.source = kv.get("data.source", "synthetic");
    cfg.data.root = kv.get("data.root", "");
    if (const char* env = std::getenv("WIDEMETA_DATA"); env && *env) cfg.data.root = env;
    cfg.data.synth.n_classes = kv.get_int("data.synth.n_classes", 40);
    cfg.data.synth.strokes_per_glyph = kv.get_int("data.synth.strokes", 4);
    cfg.data.synth.jitter_std = kv.get_float("data.synth.jitter", 0.06f);
    cfg.data.synth.image_size = cfg.model.image_size;
    cfg.data.synth.seed = static_cast<std::uint64_t>(kv.get_int("data.synth.seed", 1234));

    cfg.seeds = kv.get_u64_list("seeds");
    if (cfg.seeds.empty()) cfg.seeds = {7};
    cfg.output_dir = kv.get("output_dir", "out");
    cfg.sweep_budget = kv.get_int("sweep.budget", 64);
    cfg.validate();
    return cfg;
}

void ExperimentConfig::validate() const {
    if (seeds.empty()) throw ConfigError("seeds must be nonempty");
    if (n_way < 2) throw ConfigError("task.n_way must be >= 2");
    if (k_shot < 1 || q_queries < 1) throw ConfigError("task shape must be positive");
    if (meta.iterations < 0) throw ConfigError("meta.iterations must be >= 0");
    if (meta.meta_batch < 1) throw ConfigError("meta.meta_batch must be >= 1");
    if (meta.eta <= 0) throw ConfigError("meta.eta must be > 0");
    if (meta.inner.steps < 1) throw ConfigError("meta.inner.steps must be >= 1");
    if (meta.inner.alpha < 0) throw ConfigError("meta.inner.alpha must be >= 0");
    const std::size_t n_modules = model.depth == DepthVariant::deep6 ? 6 : 4;
    if (!widen.z.empty() && widen.z.size() != n_modules)
        throw ConfigError("widen.z must have one entry per conv module");
    for (int z : widen.z)
        if (z < 0 || z > kMaxAcuPerLayer)
            throw ConfigError("widen.z entries must be in [0,50]");
    for (int k : blur.kernel_choices)
        if (k < 3 || k % 2 == 0) throw ConfigError("blur kernels must be odd and >= 3");
    if (blur.sigma_min <= 0 || blur.sigma_max < blur.sigma_min)
        throw ConfigError("blur.sigma range invalid");
    if (data.source != "synthetic" && data.source != "omniglot_tree")
        throw ConfigError("data.source must be synthetic or omniglot_tree");
    if (data.source == "omniglot_tree" && data.root.empty())
        throw ConfigError("data.root required for omniglot_tree source");
    if (data.source == "synthetic" && data.synth.n_classes < n_way)
        throw ConfigError("data.synth.n_classes must be >= task.n_way");
}

OutputLock::OutputLock(const std::string& dir) : path_(dir + "/.lock") {
    fs::create_directories(dir);
    int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) throw IoError("output dir is locked by another run: " + dir);
    ::close(fd);
}

OutputLock::~OutputLock() { ::unlink(path_.c_str()); }

MetricsWriter::MetricsWriter(const std::string& path) : path_(path) {
    if (!fs::exists(path_) || fs::file_size(path_) == 0) {
        std::ofstream os(path_, std::ios::trunc);
        os << "run_id,seed,phase,iteration,algorithm,mean_accuracy,meta_loss,wall_ms\n";
    }
}

void MetricsWriter::row(const std::string& run_id, std::uint64_t seed, const std::string& phase,
                        int iteration, const std::string& algorithm, float mean_accuracy,
                        float meta_loss, long wall_ms) {
    std::ofstream os(path_, std::ios::app);
    os << run_id << ',' << seed << ',' << phase << ',' << iteration << ',' << algorithm << ','
       << fmt4(mean_accuracy) << ',' << fmt4(meta_loss) << ',' << wall_ms << '\n';
}

ClassPool make_train_pool(const ExperimentConfig& cfg) {
    if (cfg.data.source == "synthetic") return synth_glyph_pool(cfg.data.synth);
    ClassPool pool = load_image_tree(cfg.data.root, cfg.model.image_size, cfg.model.in_channels);
    const std::string split = cfg.data.root + "/train.split";
    if (fs::exists(split)) pool = filter_classes(pool, split);
    return rotate_augment(pool);
}

ClassPool make_test_pool(const ExperimentConfig& cfg) {
    if (cfg.data.source == "synthetic") {
        SynthGlyphConfig test_cfg = cfg.data.synth;
        test_cfg.seed = cfg.data.synth.seed + 1;  // disjoint classes from training
        return synth_glyph_pool(test_cfg);
    }
    ClassPool pool = load_image_tree(cfg.data.root, cfg.model.image_size, cfg.model.in_channels);
    const std::string split = cfg.data.root + "/test.split";
    if (fs::exists(split)) pool = filter_classes(pool, split);
    return pool;
}

std::vector<Episode> make_test_episodes(const ExperimentConfig& cfg, const ClassPool& test_pool,
                                        std::uint64_t seed, bool blurred) {
    std::vector<Episode> eps;
    eps.reserve(static_cast<std::size_t>(cfg.eval.n_task_batches));
    for (int i = 0; i < cfg.eval.n_task_batches; ++i) {
        std::mt19937 rng(static_cast<std::uint32_t>(mix_seed(seed, 0xE0, static_cast<std::uint64_t>(i))));
        Episode ep = sample_episode(test_pool, cfg.n_way, cfg.k_shot, cfg.eval.q_queries, rng);
        if (blurred) {
            std::mt19937 brng(
                static_cast<std::uint32_t>(mix_seed(seed, 0xB1, static_cast<std::uint64_t>(i))));
            ep = blur_episode(ep, cfg.blur, brng);
        }
        eps.push_back(std::move(ep));
    }
    return eps;
}

void save_labeled_report(const LabeledReport& r, const std::string& path) {
    json j;
    j["algorithm"] = r.algorithm;
    j["seed"] = r.seed;
    j["condition"] = r.condition;
    j["mean"] = r.report.mean;
    j["stddev"] = r.report.stddev;
    j["n_tasks"] = r.report.n_tasks;
    j["per_task_accuracy"] = r.report.per_task_accuracy;
    j["seeds_used"] = r.report.seeds_used;
    j["config"] = r.report.config_snapshot;
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot write report: " + path);
    os << j.dump(2) << "\n";
}

LabeledReport load_labeled_report(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot read report: " + path);
    json j = json::parse(is);
    LabeledReport r;
    r.algorithm = j.at("algorithm").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.condition = j.at("condition").get<std::string>();
    r.report.mean = j.at("mean").get<float>();
    r.report.stddev = j.at("stddev").get<float>();
    r.report.n_tasks = j.at("n_tasks").get<int>();
    r.report.per_task_accuracy = j.at("per_task_accuracy").get<std::vector<float>>();
    r.report.seeds_used = j.at("seeds_used").get<std::vector<std::uint64_t>>();
    r.report.config_snapshot =
        j.at("config").get<std::map<std::string, std::string>>();
    return r;
}

RunResult run(const ExperimentConfig& cfg) {
    cfg.validate();
    OutputLock lock(cfg.output_dir);
    MetricsWriter metrics(cfg.output_dir + "/metrics.csv");

    const ClassPool train_pool = make_train_pool(cfg);
    const ClassPool test_pool = make_test_pool(cfg);

    TaskSampler sampler = [&](std::mt19937& rng) {
        return sample_episode(train_pool, cfg.n_way, cfg.k_shot, cfg.q_queries, rng);
    };

    RunResult result;
    for (std::size_t si = 0; si < cfg.seeds.size(); ++si) {
        const std::uint64_t seed = cfg.seeds[si];
        const std::vector<Episode> clean_eps = make_test_episodes(cfg, test_pool, seed, false);
        const std::vector<Episode> blur_eps = make_test_episodes(cfg, test_pool, seed, true);

        for (std::size_t ai = 0; ai < cfg.algorithms.size(); ++ai) {
            const Algorithm alg = cfg.algorithms[ai];
            const std::string name = algorithm_name(alg);
            std::mt19937 init_rng(static_cast<std::uint32_t>(mix_seed(seed, 0xA0, ai)));
            Model<float> model = build_model<float>(cfg.model, init_rng);

            MetaConfig mc = cfg.meta;
            mc.algorithm = alg;
            mc.seed = mix_seed(seed, 0xA1, ai);
            const long t0 = now_ms();
            meta_train(model, sampler, mc,
                       [&](int it, float loss, float acc) {
                           metrics.row(cfg.run_id, seed, "train", it, name, acc, loss,
                                       now_ms() - t0);
                       });
            save_checkpoint(model, cfg.output_dir + "/ckpt_" + name + "_seed" +
                                       std::to_string(seed) + ".bin");

            InnerConfig ecfg;
            ecfg.steps = cfg.eval.inner_steps;
            ecfg.alpha = cfg.eval.alpha;
            ecfg.per_group_lr = cfg.eval.per_group_lr;
            ecfg.scope = alg == Algorithm::FOMAML ? AdaptScope::all_params
                                                  : AdaptScope::head_only;

            for (const bool blurred : {false, true}) {
                const long te = now_ms();
                EvalReport rep =
                    evaluate(model, blurred ? blur_eps : clean_eps, ecfg, cfg.eval_threads);
                rep.seeds_used.push_back(seed);
                rep.config_snapshot["algorithm"] = name;
                LabeledReport lr{name, seed, blurred ? "blurred" : "clean", rep};
                metrics.row(cfg.run_id, seed, "eval", cfg.meta.iterations,
                            name + std::string(blurred ? "/blurred" : "/clean"), rep.mean, 0.0f,
                            now_ms() - te);
                save_labeled_report(lr, cfg.output_dir + "/report_" + name +
                                            (blurred ? "_blurred" : "_clean") + "_seed" +
                                            std::to_string(seed) + ".json");
                result.reports.push_back(std::move(lr));
            }

            // MAC meta-tests from the ANIL checkpoint on the perturbed tasks.
            if (alg == Algorithm::ANIL && !cfg.widen.z.empty()) {
                WidenPlan plan = cfg.widen;
                plan.seed = mix_seed(seed, 0xAC);
                const long tm = now_ms();
                EvalReport rep = mac_meta_test(model, plan, blur_eps, ecfg, cfg.eval_threads);
                rep.seeds_used.push_back(seed);
                LabeledReport lr{"mac", seed, "blurred", rep};
                metrics.row(cfg.run_id, seed, "eval", cfg.meta.iterations, "mac/blurred",
                            rep.mean, 0.0f, now_ms() - tm);
                save_labeled_report(lr, cfg.output_dir + "/report_mac_blurred_seed" +
                                            std::to_string(seed) + ".json");
                result.reports.push_back(std::move(lr));
            }
        }
    }

    const ReportTables tables = format_report(result.reports);
    {
        std::ofstream os(cfg.output_dir + "/report.txt", std::ios::trunc);
        os << tables.text;
    }
    {
        std::ofstream os(cfg.output_dir + "/report.csv", std::ios::trunc);
        os << tables.csv;
    }
    return result;
}

SweepSpec sweep_spec_from_file(const std::string& path, std::size_t n_modules) {
    const KeyValueConfig kv = KeyValueConfig::from_file(path);
    SweepSpec spec;
    const std::string pos = kv.get("position", "all_layers");
    if (pos == "initial_layers") spec.position = SweepPosition::initial_layers;
    else if (pos == "end_layers") spec.position = SweepPosition::end_layers;
    else if (pos == "all_layers") spec.position = SweepPosition::all_layers;
    else throw ConfigError("sweep position must be initial_layers, end_layers, or all_layers");
    for (std::size_t l = 0; l < n_modules; ++l) {
        const std::string key = "z" + std::to_string(l + 1);
        spec.z_candidates.push_back(kv.has(key) ? kv.get_int_list(key) : std::vector<int>{0});
    }
    return spec;
}

SweepResult sweep_acu(const Model<float>& trained, const std::vector<Episode>& tasks,
                      const SweepSpec& spec, const ExperimentConfig& cfg) {
    const std::size_t L = trained.modules.size();
    if (spec.z_candidates.size() != L)
        throw ConfigError("sweep: need one candidate set per conv module");

    // Position constraint narrows the grid shape.
    std::vector<std::vector<int>> grid = spec.z_candidates;
    if (spec.position == SweepPosition::initial_layers)
        for (std::size_t l = 2; l < L; ++l) grid[l] = {0};
    if (spec.position == SweepPosition::end_layers)
        for (std::size_t l = 0; l + 2 < L; ++l) grid[l] = {0};

    std::size_t total = 1;
    for (const auto& g : grid) {
        for (int z : g)
            if (z < 0 || z > kMaxAcuPerLayer)
                throw ConfigError("sweep candidate " + std::to_string(z) + " exceeds the " +
                                  std::to_string(kMaxAcuPerLayer) + "-per-layer cap");
        total *= g.size();
    }
    if (total > static_cast<std::size_t>(cfg.sweep_budget))
        throw ContractError("sweep needs budget " + std::to_string(total) +
                            " evaluations, configured budget is " +
                            std::to_string(cfg.sweep_budget));

    InnerConfig ecfg;
    ecfg.steps = cfg.eval.inner_steps;
    ecfg.alpha = cfg.eval.alpha;
    ecfg.per_group_lr = cfg.eval.per_group_lr;

    SweepResult result;
    std::vector<std::size_t> idx(L, 0);
    for (std::size_t n = 0; n < total; ++n) {
        std::vector<int> z(L);
        for (std::size_t l = 0; l < L; ++l) z[l] = grid[l][idx[l]];
        WidenPlan plan = cfg.widen;
        plan.z = z;
        EvalReport rep = mac_meta_test(trained, plan, tasks, ecfg, cfg.eval_threads);
        result.rows.push_back({z, rep.mean, false});
        if (result.best.empty() || rep.mean > result.best_accuracy) {
            result.best = z;
            result.best_accuracy = rep.mean;
        }
        for (std::size_t l = L; l-- > 0;) {
            if (++idx[l] < grid[l].size()) break;
            idx[l] = 0;
        }
    }
    if (!cfg.widen.z.empty()) {
        EvalReport rep = mac_meta_test(trained, cfg.widen, tasks, ecfg, cfg.eval_threads);
        result.rows.push_back({cfg.widen.z, rep.mean, true});
    }
    return result;
}

ReportTables format_report(const std::vector<LabeledReport>& records) {
    if (records.empty()) throw ContractError("report: no records");
    // All records must share one task setting.
    std::string n_way, k_shot;
    for (const auto& r : records) {
        auto nw = r.report.config_snapshot.find("n_way");
        auto ks = r.report.config_snapshot.find("k_shot");
        const std::string rn = nw == r.report.config_snapshot.end() ? "" : nw->second;
        const std::string rk = ks == r.report.config_snapshot.end() ? "" : ks->second;
        if (n_way.empty()) {
            n_way = rn;
            k_shot = rk;
        } else if (rn != n_way || rk != k_shot) {
            throw ContractError("report: mixed task settings (" + n_way + "-way " + k_shot +
                                "-shot vs " + rn + "-way " + rk + "-shot)");
        }
    }

    // Seed-averaged mean per (algorithm, condition).
    struct Cell {
        float sum = 0;
        int n = 0;
    };
    std::map<std::pair<std::string, std::string>, Cell> cells;
    for (const auto& r : records) {
        auto& c = cells[{r.algorithm, r.condition}];
        c.sum += r.report.mean;
        ++c.n;
    }
    auto avg = [&](const std::string& alg, const std::string& cond) -> float {
        auto it = cells.find({alg, cond});
        return it == cells.end() ? -1.0f : it->second.sum / static_cast<float>(it->second.n);
    };

    static const std::pair<const char*, const char*> kRows[] = {
        {"fomaml", "MAML(first-order)"}, {"anil", "ANIL"}, {"mac", "MAC"},
        {"mac_deep", "MAC_deep"}};
    std::ostringstream text, csv;
    text << "Few-shot accuracy (" << n_way << "-way " << k_shot << "-shot), mean over seeds\n";
    text << std::left << std::setw(20) << "algorithm" << std::setw(10) << "condition"
         << std::setw(12) << "accuracy%" << "d_vs_anil"
         << "\n";
    csv << "algorithm,condition,n_way,k_shot,mean_accuracy,delta_vs_anil\n";
    for (const char* cond : {"clean", "blurred"}) {
        const float anil = avg("anil", cond);
        for (const auto& [key, label] : kRows) {
            const float m = avg(key, cond);
            if (m < 0) continue;
            const bool has_delta = anil >= 0 && std::string(key) != "anil";
            text << std::left << std::setw(20) << label << std::setw(10) << cond << std::setw(12)
                 << fmt4(m * 100);
            if (has_delta) text << std::setw(12) << fmt4((m - anil) * 100);
            text << "\n";
            csv << key << ',' << cond << ',' << n_way << ',' << k_shot << ',' << fmt4(m * 100)
                << ',' << (has_delta ? fmt4((m - anil) * 100) : std::string()) << "\n";
        }
    }
    text << "note: MAML rows use the first-order approximation (FOMAML).\n";
    return {text.str(), csv.str()};
}

ReportTables cost_report(const ExperimentConfig& cfg) {
    const std::size_t n4 = cfg.model.depth == DepthVariant::deep6 ? 6 : 4;
    std::vector<int> zero(n4, 0);
    std::vector<int> plan = cfg.widen.z.empty() ? zero : cfg.widen.z;

    ModelConfig deep_cfg = cfg.model;
    deep_cfg.depth = DepthVariant::deep6;
    std::vector<int> deep_plan = plan;
    deep_plan.resize(6, 0);

    struct Row {
        const char* name;
        CostEstimate est;
    };
    const Row rows[] = {
        {"M (base, ANIL)", cost_estimate(cfg.model, zero, CostMode::anil)},
        {"M' (MAC)", cost_estimate(cfg.model, plan, CostMode::mac)},
        {"M'_deep (MAC)", cost_estimate(deep_cfg, deep_plan, CostMode::mac_deep)},
    };

    std::ostringstream text, csv;
    text << std::left << std::setw(18) << "variant" << std::setw(16) << "forward_mults"
         << "trainable_grads"
         << "\n";
    csv << "variant,forward_mults,trainable_grad_count\n";
    for (const auto& r : rows) {
        text << std::left << std::setw(18) << r.name << std::setw(16) << r.est.forward_mults
             << std::setw(20) << r.est.trainable_grad_count << "\n";
        csv << r.name << ',' << r.est.forward_mults << ',' << r.est.trainable_grad_count << "\n";
    }
    return {text.str(), csv.str()};
}

}  // namespace widemeta
