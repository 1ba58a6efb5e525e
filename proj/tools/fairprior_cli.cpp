#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <optional>

#include "fairprior/evaluation.hpp"
#include "fairprior/experiment.hpp"
#include "fairprior/io.hpp"
#include "fairprior/rng.hpp"
#include "fairprior/trainer.hpp"

namespace fs = std::filesystem;
using namespace fairprior;

namespace {

DatasetBundle load_data_dir(const std::string& dir) {
    if (!fs::exists(dir + "/manifest.json"))
        throw IoError("no dataset bundle found at " + dir + " (run generate-data first)");
    return load_bundle(dir);
}

void save_run(const std::string& out, const TrainResult& result) {
    fs::create_directories(out);
    save_checkpoint(out + "/checkpoint.fpckpt", result.checkpoint);
    result.trace.save(out + "/trace.jsonl");
    std::printf("wrote %s/checkpoint.fpckpt (%s, step %lld/%lld)\n", out.c_str(),
                result.checkpoint.stage.c_str(),
                static_cast<long long>(result.checkpoint.progress.step),
                static_cast<long long>(result.checkpoint.progress.total_steps));
}

TrainResult resume_from_dir(const std::string& out, const DatasetBundle& bundle,
                            const TrainConfig& config) {
    auto ckpt = load_checkpoint(out + "/checkpoint.fpckpt");
    TrainingTrace trace;
    if (fs::exists(out + "/trace.jsonl")) trace = TrainingTrace::load(out + "/trace.jsonl");
    return resume_training(trace, ckpt, bundle, config);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fairprior: interpretable fair representation learning"};
    app.require_subcommand(1);

    bool deterministic = true;
    app.add_flag("--deterministic,!--no-deterministic", deterministic,
                 "single-threaded deterministic execution (default on)");

    // ---------------------------------------------------------- generate-data
    auto* gen = app.add_subcommand("generate-data", "generate a dataset bundle");
    std::string gen_dataset, gen_out, mnist_dir, dsprites_npz;
    uint64_t gen_seed = 1;
    int samples_per_class = 20000, corpus_train = 60000, corpus_test = 10000;
    int train_n = -1, test_n = -1, prior_n = -1, test_per_class = -1;
    gen->add_option("--dataset", gen_dataset, "colormnist|dsprite")->required();
    gen->add_option("--seed", gen_seed, "generation seed");
    gen->add_option("--out", gen_out, "output bundle directory")->required();
    gen->add_option("--samples-per-class", samples_per_class, "dsprite train records per shape");
    gen->add_option("--test-per-class", test_per_class, "dsprite test records per shape");
    gen->add_option("--mnist-dir", mnist_dir, "idx digit corpus directory (default: synthesized)");
    gen->add_option("--dsprites-npz", dsprites_npz, "sprite archive (default: procedural)");
    gen->add_option("--corpus-train", corpus_train, "synthesized corpus train size");
    gen->add_option("--corpus-test", corpus_test, "synthesized corpus test size");
    gen->add_option("--train-n", train_n, "colormnist train records (-1: full corpus)");
    gen->add_option("--test-n", test_n, "colormnist test records (-1: full corpus)");
    gen->add_option("--prior-n", prior_n, "prior set size (-1: match train)");

    // -------------------------------------------------------------- training
    std::string cfg_path, data_dir, out_dir, start_path;
    bool resume = false;
    int64_t stop_after = -1;
    auto add_train_opts = [&](CLI::App* cmd) {
        cmd->add_option("--config", cfg_path, "training config file")->required();
        cmd->add_option("--data", data_dir, "dataset bundle directory")->required();
        cmd->add_option("--out", out_dir, "output run directory")->required();
        cmd->add_flag("--resume", resume, "continue from the checkpoint in --out");
        cmd->add_option("--stop-after", stop_after, "interrupt after N steps (for resume tests)");
    };
    auto* tprior = app.add_subcommand("train-prior", "stage 1: prior-knowledge training");
    add_train_opts(tprior);
    auto* tfair = app.add_subcommand("train-fair", "stage 2: fairness fine-tuning");
    add_train_opts(tfair);
    tfair->add_option("--start", start_path, "stage-1 checkpoint to fine-tune");
    auto* tbase = app.add_subcommand("train-baseline", "baseline training");
    std::string baseline_method = "naive";
    tbase->add_option("--method", baseline_method, "naive|laftr")->required();
    add_train_opts(tbase);

    // -------------------------------------------------------------- evaluate
    auto* eval = app.add_subcommand("evaluate", "train a probe and write a metrics report");
    std::string eval_ckpt;
    eval->add_option("--config", cfg_path, "training config file")->required();
    eval->add_option("--data", data_dir, "dataset bundle directory")->required();
    eval->add_option("--out", out_dir, "output directory")->required();
    eval->add_option("--checkpoint", eval_ckpt,
                     "encoder checkpoint (omit to evaluate the raw data)");

    // ---------------------------------------------------------- export-grids
    auto* grids = app.add_subcommand("export-grids", "tile sample images into a png");
    std::string grid_out;
    int rows = 6, cols = 6;
    uint64_t grid_seed = 1;
    grids->add_option("--data", data_dir, "dataset bundle directory")->required();
    grids->add_option("--out", grid_out, "output png path")->required();
    grids->add_option("--checkpoint", eval_ckpt, "encoder checkpoint (omit for originals)");
    grids->add_option("--rows", rows, "grid rows");
    grids->add_option("--cols", cols, "grid columns");
    grids->add_option("--seed", grid_seed, "sample-selection seed");

    // ----------------------------------------------------------------- report
    auto* report_cmd = app.add_subcommand("report", "re-render the aggregate comparison table");
    std::string plan_path;
    report_cmd->add_option("--plan", plan_path, "experiment plan file")->required();
    report_cmd->add_option("--out", out_dir, "experiment output directory")->required();

    // --------------------------------------------------------- run-experiment
    auto* runexp = app.add_subcommand("run-experiment", "full pipeline for one dataset");
    runexp->add_option("--plan", plan_path, "experiment plan file")->required();
    runexp->add_option("--out", out_dir, "output directory")->required();

    // --------------------------------------------------------- validate-config
    auto* validate = app.add_subcommand("validate-config", "check a config file");
    bool is_plan = false;
    validate->add_option("--config", cfg_path, "config file to check")->required();
    validate->add_flag("--plan", is_plan, "treat the file as an experiment plan");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            DatasetBundle bundle;
            if (gen_dataset == "colormnist") {
                DigitCorpus corpus;
                if (!mnist_dir.empty()) {
                    corpus = load_idx_corpus(mnist_dir);
                } else {
                    const char* cache = std::getenv("FAIRPRIOR_DATA_DIR");
                    std::string cache_dir =
                        cache && *cache ? std::string(cache) + "/digit-corpus-" +
                                              std::to_string(corpus_train) + "-" +
                                              std::to_string(corpus_test)
                                        : "";
                    if (!cache_dir.empty() && fs::exists(cache_dir + "/train-images-idx3-ubyte")) {
                        corpus = load_idx_corpus(cache_dir);
                    } else {
                        corpus = synth_digit_corpus(corpus_train, corpus_test,
                                                    derive_seed(gen_seed, "corpus"));
                        if (!cache_dir.empty()) save_idx_corpus(cache_dir, corpus);
                    }
                }
                ColorMnistOptions opts;
                opts.train_n = train_n;
                opts.test_n = test_n;
                opts.prior_n = prior_n;
                bundle = generate_colormnist(corpus, gen_seed, opts);
            } else if (gen_dataset == "dsprite") {
                DspriteOptions opts;
                opts.test_per_class = test_per_class;
                opts.prior_n = prior_n;
                if (!dsprites_npz.empty()) {
                    ArchiveSprites sprites(dsprites_npz);
                    bundle = generate_biased_dsprite(sprites, samples_per_class, DspriteBiasSpec{},
                                                     gen_seed, opts);
                } else {
                    ProceduralSprites sprites;
                    bundle = generate_biased_dsprite(sprites, samples_per_class, DspriteBiasSpec{},
                                                     gen_seed, opts);
                }
            } else {
                throw ConfigError("unknown dataset '" + gen_dataset + "'");
            }
            save_bundle(gen_out, bundle);
            std::printf("wrote bundle to %s (train %zu, test %zu, prior %zu)\n", gen_out.c_str(),
                        bundle.train.size(), bundle.test.size(), bundle.prior.size());
            return 0;
        }

        if (tprior->parsed() || tfair->parsed() || tbase->parsed()) {
            const TrainConfig config = load_train_config(cfg_path);
            const DatasetBundle bundle = load_data_dir(data_dir);
            TrainResult result;
            try {
                if (resume) {
                    result = resume_from_dir(out_dir, bundle, config);
                } else if (tprior->parsed()) {
                    result = train_prior(bundle, config, stop_after);
                } else if (tfair->parsed()) {
                    std::optional<ModelCheckpoint> start;
                    if (!start_path.empty()) start = load_checkpoint(start_path);
                    result = train_fair(bundle, start, config, stop_after);
                } else {
                    if (baseline_method == "naive") {
                        result = train_baseline_naive(bundle, config, stop_after);
                    } else if (baseline_method == "laftr") {
                        TrainConfig laftr_cfg = config;
                        laftr_cfg.weights.gamma_prior = 0.0;
                        laftr_cfg.stage1_epochs = 0;
                        result = train_fair(bundle, std::nullopt, laftr_cfg, stop_after);
                    } else {
                        throw ConfigError("unknown baseline method '" + baseline_method + "'");
                    }
                }
            } catch (const TrainAbort& abort) {
                fs::create_directories(out_dir);
                abort.trace.save(out_dir + "/trace.jsonl");
                std::fprintf(stderr, "training aborted: %s (trace written)\n", abort.what());
                return 2;
            }
            save_run(out_dir, result);
            return 0;
        }

        if (eval->parsed()) {
            const TrainConfig config = load_train_config(cfg_path);
            DatasetBundle bundle = load_data_dir(data_dir);
            if (!eval_ckpt.empty()) {
                auto ckpt = load_checkpoint(eval_ckpt);
                bundle = encode_dataset(ckpt, bundle);
            }
            auto probe = train_probe(bundle, config);
            fs::create_directories(out_dir);
            save_checkpoint(out_dir + "/probe.fpckpt", probe.checkpoint);
            probe.trace.save(out_dir + "/probe_trace.jsonl");
            MetricsReport report = build_report(probe.checkpoint, bundle);
            report.save(out_dir + "/report.json");
            std::printf("train_acc=%.4f test_acc=%.4f parity_gap=%.4f\n", report.train_accuracy,
                        report.test_accuracy, report.parity_gap);
            return 0;
        }

        if (grids->parsed()) {
            DatasetBundle bundle = load_data_dir(data_dir);
            if (!eval_ckpt.empty()) {
                auto ckpt = load_checkpoint(eval_ckpt);
                bundle = encode_dataset(ckpt, bundle);
            }
            export_grid(bundle, rows, cols, grid_out, grid_seed);
            std::printf("wrote %s\n", grid_out.c_str());
            return 0;
        }

        if (report_cmd->parsed()) {
            const ExperimentPlan plan = load_plan(plan_path);
            json aggregate = aggregate_runs(plan, out_dir);
            std::printf("%s", render_table_text(aggregate).c_str());
            return 0;
        }

        if (runexp->parsed()) {
            const ExperimentPlan plan = load_plan(plan_path);
            return run_experiment(plan, out_dir);
        }

        if (validate->parsed()) {
            const std::string text = io::read_text_file(cfg_path);
            const auto errors =
                is_plan ? validate_plan_text(text) : validate_train_config_text(text);
            if (errors.empty()) {
                std::printf("ok\n");
                return 0;
            }
            for (const auto& e : errors) std::fprintf(stderr, "error: %s\n", e.c_str());
            return 1;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
