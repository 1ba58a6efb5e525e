#include "fairprior/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <sstream>

#include "fairprior/io.hpp"
#include "fairprior/rng.hpp"
#include "fairprior/trainer.hpp"

namespace fairprior {

namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kKnownMethods = {"naive", "laftr", "prior_training"};

bool known_method(const std::string& m) {
    return std::find(kKnownMethods.begin(), kKnownMethods.end(), m) != kKnownMethods.end();
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else if (!isspace(static_cast<unsigned char>(c))) {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

struct PlanParse {
    ExperimentPlan plan;
    std::vector<std::string> errors;
};

PlanParse parse_plan_impl(const std::string& text) {
    PlanParse out;
    ExperimentPlan& plan = out.plan;
    std::string base_config_text;
    std::map<std::string, std::string> override_text;  // method -> config lines

    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            out.errors.push_back("line " + std::to_string(lineno) + ": expected 'key = value'");
            continue;
        }
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));

        const auto dot = key.find('.');
        if (dot != std::string::npos) {
            const std::string method = key.substr(0, dot);
            if (!known_method(method)) {
                out.errors.push_back("unknown method prefix '" + method + "' in key '" + key + "'");
                continue;
            }
            override_text[method] += key.substr(dot + 1) + " = " + value + "\n";
            continue;
        }

        auto set_int = [&](int& target, int min_allowed) {
            try {
                target = std::stoi(value);
            } catch (...) {
                out.errors.push_back(key + ": cannot parse '" + value + "'");
                return;
            }
            if (target < min_allowed) out.errors.push_back(key + ": must be >= " + std::to_string(min_allowed));
        };

        if (key == "methods") {
            plan.methods = split_list(value);
            for (const auto& m : plan.methods)
                if (!known_method(m)) out.errors.push_back("unknown method '" + m + "'");
        } else if (key == "seeds") {
            plan.seeds.clear();
            for (const auto& s : split_list(value)) {
                try {
                    plan.seeds.push_back(std::stoull(s));
                } catch (...) {
                    out.errors.push_back("seeds: cannot parse '" + s + "'");
                }
            }
        } else if (key == "data_seed") {
            try {
                plan.data_seed = std::stoull(value);
            } catch (...) {
                out.errors.push_back("data_seed: cannot parse '" + value + "'");
            }
        } else if (key == "grid_rows") {
            set_int(plan.grid_rows, 1);
        } else if (key == "grid_cols") {
            set_int(plan.grid_cols, 1);
        } else if (key == "corpus_train") {
            set_int(plan.corpus_train, 1);
        } else if (key == "corpus_test") {
            set_int(plan.corpus_test, 1);
        } else if (key == "gen_train_n") {
            set_int(plan.gen_train_n, -1);
        } else if (key == "gen_test_n") {
            set_int(plan.gen_test_n, -1);
        } else if (key == "samples_per_class") {
            set_int(plan.samples_per_class, 1);
        } else if (key == "test_per_class") {
            set_int(plan.test_per_class, -1);
        } else {
            base_config_text += key + " = " + value + "\n";
            if (key == "dataset") plan.dataset = value;
        }
    }

    for (const auto& e : validate_train_config_text(base_config_text)) out.errors.push_back(e);
    if (out.errors.empty()) plan.base = parse_train_config_text(base_config_text);

    if (plan.methods.empty()) out.errors.push_back("methods: the method set must be nonempty");
    if (plan.seeds.empty()) out.errors.push_back("seeds: the seed list must be nonempty");

    for (const auto& [method, text2] : override_text) {
        auto errs = validate_train_config_text(text2);
        for (const auto& e : errs) out.errors.push_back(method + "." + e);
        if (out.errors.empty()) {
            TrainConfig cfg = plan.base;
            auto more = validate_train_config_text(text2);
            (void)more;
            // re-apply on top of base
            std::string merged = train_config_text(plan.base) + text2;
            cfg = parse_train_config_text(merged);
            plan.per_method[method] = cfg;
        }
    }
    return out;
}

}  // namespace

TrainConfig ExperimentPlan::config_for(const std::string& method, uint64_t seed) const {
    TrainConfig cfg = base;
    auto it = per_method.find(method);
    if (it != per_method.end()) cfg = it->second;
    cfg.dataset = dataset;
    cfg.seed = seed;
    if (method == "naive") {
        cfg.stage1_epochs = 0;
        cfg.stage2_epochs = 0;
    } else if (method == "laftr") {
        // the stage-2 objective with the prior term removed
        cfg.stage1_epochs = 0;
        cfg.weights.gamma_prior = 0.0;
    }
    return cfg;
}

std::vector<std::string> validate_plan_text(const std::string& text) {
    return parse_plan_impl(text).errors;
}

ExperimentPlan parse_plan_text(const std::string& text) {
    auto parsed = parse_plan_impl(text);
    if (!parsed.errors.empty()) {
        std::string msg = "invalid experiment plan:";
        for (const auto& e : parsed.errors) msg += "\n  - " + e;
        throw ConfigError(msg);
    }
    return parsed.plan;
}

ExperimentPlan load_plan(const std::string& path) {
    return parse_plan_text(io::read_text_file(path));
}

ReferenceRows analytic_reference_rows(const json& provenance, int class_count) {
    ReferenceRows rows;
    rows.random_accuracy = 1.0 / class_count;
    const std::string generator = provenance.value("generator", "");
    if (generator == "colormnist") {
        // the digit shape determines y_tilde exactly; y differs from it with
        // the label-flip probability
        rows.optimal_accuracy = 1.0 - provenance.at("label_flip_prob").get<double>();
    } else if (generator == "dsprite") {
        // shape is fully determined by the image
        rows.optimal_accuracy = 1.0;
    } else {
        throw InputError("reference rows: unknown generator '" + generator + "'");
    }
    return rows;
}

// ------------------------------------------------------------------- data

DatasetBundle build_dataset(const ExperimentPlan& plan, const std::string& cache_dir) {
    const std::string dir = cache_dir + "/" + plan.dataset;
    if (fs::exists(dir + "/manifest.json")) return load_bundle(dir);

    DatasetBundle bundle;
    if (plan.dataset == "colormnist") {
        DigitCorpus corpus = synth_digit_corpus(plan.corpus_train, plan.corpus_test,
                                                derive_seed(plan.data_seed, "corpus"));
        ColorMnistOptions opts;
        opts.train_n = plan.gen_train_n;
        opts.test_n = plan.gen_test_n;
        bundle = generate_colormnist(corpus, plan.data_seed, opts);
    } else if (plan.dataset == "dsprite") {
        ProceduralSprites sprites;
        DspriteOptions opts;
        opts.test_per_class = plan.test_per_class;
        bundle = generate_biased_dsprite(sprites, plan.samples_per_class, DspriteBiasSpec{},
                                         plan.data_seed, opts);
    } else {
        throw ConfigError("unknown dataset '" + plan.dataset + "'");
    }
    save_bundle(dir, bundle);
    return bundle;
}

// ------------------------------------------------------------------- runs

namespace {

struct CellResult {
    MetricsReport report;
    bool ok = false;
    std::string error;
};

std::string cell_dir(const std::string& out_dir, const ExperimentPlan& plan,
                     const std::string& method, uint64_t seed) {
    return out_dir + "/runs/" + plan.dataset + "/" + method + "/" + std::to_string(seed);
}

CellResult run_cell(const ExperimentPlan& plan, const DatasetBundle& bundle,
                    const std::string& method, uint64_t seed, const std::string& dir) {
    CellResult result;
    fs::create_directories(dir);
    const TrainConfig cfg = plan.config_for(method, seed);
    io::write_text_file(dir + "/config.cfg", train_config_text(cfg));

    try {
        TrainingTrace trace;
        std::optional<DatasetBundle> encoded;

        if (method == "naive") {
            // probe directly on the raw biased images
        } else if (method == "laftr") {
            auto fair = train_fair(bundle, std::nullopt, cfg);
            trace = std::move(fair.trace);
            save_checkpoint(dir + "/checkpoint.fpckpt", fair.checkpoint);
            encoded = encode_dataset(fair.checkpoint, bundle);
        } else if (method == "prior_training") {
            auto stage1 = train_prior(bundle, cfg);
            save_checkpoint(dir + "/stage1.fpckpt", stage1.checkpoint);
            stage1.trace.save(dir + "/stage1_trace.jsonl");
            auto fair = train_fair(bundle, stage1.checkpoint, cfg);
            trace = std::move(fair.trace);
            save_checkpoint(dir + "/checkpoint.fpckpt", fair.checkpoint);
            encoded = encode_dataset(fair.checkpoint, bundle);
        } else {
            throw ConfigError("unknown method '" + method + "'");
        }

        const DatasetBundle& probe_data = encoded ? *encoded : bundle;
        auto probe = train_probe(probe_data, cfg);
        for (auto& r : probe.trace.records) trace.records.push_back(r);
        save_checkpoint(dir + "/probe.fpckpt", probe.checkpoint);
        trace.save(dir + "/trace.jsonl");

        MetricsReport report = build_report(probe.checkpoint, probe_data);
        report.metadata["method"] = method;
        report.metadata["loss_weights"] = {{"lambda_div", cfg.weights.lambda_div},
                                           {"alpha_clf", cfg.weights.alpha_clf},
                                           {"beta_adv", cfg.weights.beta_adv},
                                           {"gamma_prior", cfg.weights.gamma_prior}};
        report.metadata["loss_weights_note"] =
            "loss weights are artifact defaults; the source tables report none";
        report.save(dir + "/report.json");

        export_grid(probe_data, plan.grid_rows, plan.grid_cols, dir + "/grid.png", plan.data_seed);
        result.report = std::move(report);
        result.ok = true;
    } catch (const TrainAbort& abort) {
        abort.trace.save(dir + "/trace.jsonl");
        result.error = abort.what();
    } catch (const std::exception& e) {
        result.error = e.what();
    }
    return result;
}

json load_cell_reports(const ExperimentPlan& plan, const std::string& out_dir) {
    json cells = json::object();
    for (const auto& method : plan.methods) {
        json per_seed = json::array();
        for (uint64_t seed : plan.seeds) {
            const std::string path = cell_dir(out_dir, plan, method, seed) + "/report.json";
            if (fs::exists(path)) {
                auto r = MetricsReport::load(path);
                per_seed.push_back({{"seed", seed},
                                    {"train_accuracy", r.train_accuracy},
                                    {"test_accuracy", r.test_accuracy},
                                    {"parity_gap", r.parity_gap}});
            }
        }
        cells[method] = per_seed;
    }
    return cells;
}

struct Stat {
    double mean = 0.0, spread = 0.0;
};

Stat stat_of(const json& rows, const std::string& key) {
    std::vector<double> v;
    for (const auto& r : rows) v.push_back(r.at(key).get<double>());
    Stat s;
    if (v.empty()) return s;
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double lo = v[0], hi = v[0];
    for (double x : v) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    s.spread = (hi - lo) / 2.0;
    return s;
}

}  // namespace

json aggregate_runs(const ExperimentPlan& plan, const std::string& out_dir) {
    const std::string data_dir = out_dir + "/data/" + plan.dataset;
    json provenance;
    int class_count = plan.dataset == "dsprite" ? 3 : 2;
    if (fs::exists(data_dir + "/manifest.json")) {
        auto manifest = json::parse(io::read_text_file(data_dir + "/manifest.json"));
        provenance = manifest.at("provenance");
        class_count = manifest.at("class_count").get<int>();
    } else {
        provenance = {{"generator", plan.dataset}, {"label_flip_prob", kColorMnistLabelFlip}};
    }
    const ReferenceRows refs = analytic_reference_rows(provenance, class_count);

    json aggregate;
    aggregate["dataset"] = plan.dataset;
    json rows = json::array();
    const json cells = load_cell_reports(plan, out_dir);
    for (const auto& method : plan.methods) {
        const auto& per_seed = cells.at(method);
        const Stat train = stat_of(per_seed, "train_accuracy");
        const Stat test = stat_of(per_seed, "test_accuracy");
        const Stat gap = stat_of(per_seed, "parity_gap");
        rows.push_back({{"method", method},
                        {"seeds", per_seed.size()},
                        {"train_accuracy", {{"mean", train.mean}, {"spread", train.spread}}},
                        {"test_accuracy", {{"mean", test.mean}, {"spread", test.spread}}},
                        {"parity_gap", {{"mean", gap.mean}, {"spread", gap.spread}}}});
    }
    rows.push_back({{"method", "random_guessing"},
                    {"seeds", 0},
                    {"train_accuracy", {{"mean", refs.random_accuracy}, {"spread", 0.0}}},
                    {"test_accuracy", {{"mean", refs.random_accuracy}, {"spread", 0.0}}},
                    {"parity_gap", {{"mean", 0.0}, {"spread", 0.0}}}});
    rows.push_back({{"method", "optimal_theoretical"},
                    {"seeds", 0},
                    {"train_accuracy", {{"mean", refs.optimal_accuracy}, {"spread", 0.0}}},
                    {"test_accuracy", {{"mean", refs.optimal_accuracy}, {"spread", 0.0}}},
                    {"parity_gap", {{"mean", 0.0}, {"spread", 0.0}}}});
    aggregate["rows"] = rows;
    aggregate["per_seed"] = cells;
    return aggregate;
}

std::string render_table_text(const json& aggregate) {
    std::ostringstream os;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-20s %-16s %-16s %-16s\n", "method", "train_acc",
                  "test_acc", "parity_gap");
    os << buf;
    for (const auto& row : aggregate.at("rows")) {
        auto cell = [&](const char* key) {
            const double mean = row.at(key).at("mean").get<double>();
            const double spread = row.at(key).at("spread").get<double>();
            char c[48];
            if (spread > 0.0)
                std::snprintf(c, sizeof(c), "%.4f +/- %.3f", mean, spread);
            else
                std::snprintf(c, sizeof(c), "%.4f", mean);
            return std::string(c);
        };
        std::snprintf(buf, sizeof(buf), "%-20s %-16s %-16s %-16s\n",
                      row.at("method").get<std::string>().c_str(), cell("train_accuracy").c_str(),
                      cell("test_accuracy").c_str(), cell("parity_gap").c_str());
        os << buf;
    }
    return os.str();
}

std::string render_table_csv(const json& aggregate) {
    std::ostringstream os;
    os << "method,train_acc_mean,train_acc_spread,test_acc_mean,test_acc_spread,parity_gap_mean,"
          "parity_gap_spread\n";
    for (const auto& row : aggregate.at("rows")) {
        os << row.at("method").get<std::string>();
        for (const char* key : {"train_accuracy", "test_accuracy", "parity_gap"})
            os << "," << row.at(key).at("mean").get<double>() << ","
               << row.at(key).at("spread").get<double>();
        os << "\n";
    }
    return os.str();
}

int run_experiment(const ExperimentPlan& plan, const std::string& out_dir) {
    if (plan.methods.empty()) throw ConfigError("experiment plan: empty method set");
    if (plan.seeds.empty()) throw ConfigError("experiment plan: empty seed list");
    fs::create_directories(out_dir);

    const char* cache_env = std::getenv("FAIRPRIOR_DATA_DIR");
    const std::string data_dir = cache_env && *cache_env ? std::string(cache_env)
                                                         : out_dir + "/data";
    DatasetBundle bundle = build_dataset(plan, data_dir);
    if (cache_env && *cache_env && !fs::exists(out_dir + "/data/" + plan.dataset))
        fs::create_directories(out_dir + "/data");

    json manifest;
    const std::string manifest_path = out_dir + "/run_manifest.json";
    if (fs::exists(manifest_path)) manifest = json::parse(io::read_text_file(manifest_path));

    bool any_failed = false;
    for (const auto& method : plan.methods) {
        for (uint64_t seed : plan.seeds) {
            const std::string dir = cell_dir(out_dir, plan, method, seed);
            const std::string key = plan.dataset + "/" + method + "/" + std::to_string(seed);
            if (manifest.contains(key) && manifest[key].value("complete", false) &&
                fs::exists(dir + "/report.json")) {
                std::printf("[skip] %s (already complete)\n", key.c_str());
                continue;
            }
            std::printf("[run ] %s\n", key.c_str());
            std::fflush(stdout);
            CellResult result = run_cell(plan, bundle, method, seed, dir);
            manifest[key] = {{"complete", result.ok}, {"error", result.error}};
            io::write_text_file(manifest_path, manifest.dump(2) + "\n");
            if (!result.ok) {
                any_failed = true;
                std::printf("[fail] %s: %s\n", key.c_str(), result.error.c_str());
            }
        }
    }

    // aggregate artifacts
    json aggregate = aggregate_runs(plan, out_dir);
    const std::string agg_dir = out_dir + "/runs/" + plan.dataset;
    fs::create_directories(agg_dir);
    io::write_text_file(agg_dir + "/aggregate.json", aggregate.dump(2) + "\n");
    io::write_text_file(agg_dir + "/aggregate.txt", render_table_text(aggregate));
    io::write_text_file(agg_dir + "/aggregate.csv", render_table_csv(aggregate));
    std::printf("%s", render_table_text(aggregate).c_str());

    // side-by-side comparison grid: original | laftr | prior_training
    try {
        auto sel = grid_selection(bundle.test.size(), plan.grid_rows, plan.grid_cols,
                                  plan.data_seed);
        std::vector<RasterImage> panels;
        std::vector<Tensor> originals;
        for (const auto& r : bundle.test) originals.push_back(r.image);
        panels.push_back(tile_images(originals, sel, plan.grid_rows, plan.grid_cols));
        for (const std::string method : {"laftr", "prior_training"}) {
            if (std::find(plan.methods.begin(), plan.methods.end(), method) == plan.methods.end())
                continue;
            const std::string ckpt_path =
                cell_dir(out_dir, plan, method, plan.seeds.front()) + "/checkpoint.fpckpt";
            if (!fs::exists(ckpt_path)) continue;
            auto ckpt = load_checkpoint(ckpt_path);
            auto encoded = encode_dataset(ckpt, bundle);
            std::vector<Tensor> imgs;
            for (const auto& r : encoded.test) imgs.push_back(r.image);
            panels.push_back(tile_images(imgs, sel, plan.grid_rows, plan.grid_cols));
        }
        if (panels.size() > 1) {
            const int gutter = 4;
            const int h = panels[0].height;
            const int c = panels[0].channels;
            int w_total = 0;
            for (const auto& p : panels) w_total += p.width;
            w_total += gutter * static_cast<int>(panels.size() - 1);
            std::vector<uint8_t> pixels(static_cast<size_t>(w_total) * h * c, 255);
            int x_off = 0;
            for (const auto& p : panels) {
                for (int y = 0; y < h; ++y)
                    std::copy(p.pixels.begin() + static_cast<std::ptrdiff_t>(y) * p.width * c,
                              p.pixels.begin() + static_cast<std::ptrdiff_t>(y + 1) * p.width * c,
                              pixels.begin() + (static_cast<std::ptrdiff_t>(y) * w_total + x_off) * c);
                x_off += p.width + gutter;
            }
            io::write_png(agg_dir + "/comparison_grid.png", pixels, w_total, h, c);
        }
    } catch (const std::exception& e) {
        std::printf("[warn] comparison grid not written: %s\n", e.what());
    }

    return any_failed ? 1 : 0;
}

}  // namespace fairprior
