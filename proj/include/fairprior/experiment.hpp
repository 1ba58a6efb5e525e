#pragma once

#include <map>
#include <string>
#include <vector>

#include "fairprior/evaluation.hpp"
#include "fairprior/train_config.hpp"

namespace fairprior {

// One end-to-end reproduction: generate data, train each method over each
// seed, evaluate, aggregate, export grids.
struct ExperimentPlan {
    std::string dataset = "colormnist";
    std::vector<uint64_t> seeds = {1, 2, 3};
    std::vector<std::string> methods = {"naive", "laftr", "prior_training"};
    TrainConfig base;  // shared training settings; per-method overrides on top
    std::map<std::string, TrainConfig> per_method;

    uint64_t data_seed = 99;
    int grid_rows = 6;
    int grid_cols = 6;

    // colormnist generation
    int corpus_train = 60000;
    int corpus_test = 10000;
    int gen_train_n = -1;  // -1: full corpus partition
    int gen_test_n = -1;

    // dsprite generation
    int samples_per_class = 20000;
    int test_per_class = -1;

    TrainConfig config_for(const std::string& method, uint64_t seed) const;
};

std::vector<std::string> validate_plan_text(const std::string& text);
ExperimentPlan parse_plan_text(const std::string& text);  // throws ConfigError
ExperimentPlan load_plan(const std::string& path);

// Analytic reference rows, computed from the construction parameters in the
// bundle provenance rather than hard-coded.
struct ReferenceRows {
    double random_accuracy = 0.0;
    double optimal_accuracy = 0.0;
};
ReferenceRows analytic_reference_rows(const json& bundle_provenance, int class_count);

// Generates (or reuses) the dataset under <out>/data, runs every
// (method, seed) cell under <out>/runs/<dataset>/<method>/<seed>/, writes
// reports, traces, grids, an aggregate table and a side-by-side comparison
// grid. Idempotent per cell via completion markers. Returns a nonzero exit
// code when any sub-run failed.
int run_experiment(const ExperimentPlan& plan, const std::string& out_dir);

// Re-renders the aggregate artifacts from the reports already on disk.
json aggregate_runs(const ExperimentPlan& plan, const std::string& out_dir);
std::string render_table_text(const json& aggregate);
std::string render_table_csv(const json& aggregate);

// Dataset construction entry point shared by run_experiment and the CLI.
DatasetBundle build_dataset(const ExperimentPlan& plan, const std::string& cache_dir);

}  // namespace fairprior
