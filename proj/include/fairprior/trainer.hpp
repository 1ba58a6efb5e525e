#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fairprior/model_zoo.hpp"
#include "fairprior/synthetic_data.hpp"
#include "fairprior/train_config.hpp"

namespace fairprior {

struct StepRecord {
    int64_t step = 0;
    std::string stage;  // stage1 | stage2 | probe
    double prior = 0.0;
    double div = 0.0;
    double clf = 0.0;
    double adv = 0.0;
    double total = 0.0;
    double wall_ms = 0.0;
};

struct TrainingTrace {
    std::vector<StepRecord> records;
    json summary;

    std::string to_jsonl() const;
    static TrainingTrace from_jsonl(const std::string& text);
    void save(const std::string& path) const;
    static TrainingTrace load(const std::string& path);
};

struct TrainResult {
    ModelCheckpoint checkpoint;
    TrainingTrace trace;
};

// Thrown when a loss goes non-finite; carries the partial trace so callers
// can persist it.
struct TrainAbort : NumericError {
    TrainAbort(const std::string& msg, TrainingTrace t)
        : NumericError(msg), trace(std::move(t)) {}
    TrainingTrace trace;
};

// Stage 1: Wasserstein prior-knowledge training. Per encoder step the critic
// takes `critic_steps` ascent steps on the prior objective (parameters
// clipped to [-c, c]), then the encoder takes one descent step on
// prior - lambda * diversity. stop_after_steps interrupts after that many
// encoder steps (-1 = run to completion) leaving a resumable checkpoint.
TrainResult train_prior(const DatasetBundle& bundle, const TrainConfig& config,
                        int64_t stop_after_steps = -1);

// Stage 2: fairness fine-tuning. Per step: the adversary ascends
// beta*L_adv, the critic ascends gamma*L_prior (clipped), and the encoder +
// classifier descend alpha*L_clf + beta*L_adv + gamma*L_prior.
// `start` must be a stage-"prior" checkpoint; omitted (with gamma usually 0)
// it trains from fresh initialization, which is the LAFTR baseline path.
TrainResult train_fair(const DatasetBundle& bundle, const std::optional<ModelCheckpoint>& start,
                       const TrainConfig& config, int64_t stop_after_steps = -1);

// Probe trained directly on the raw (unfair) images.
TrainResult train_baseline_naive(const DatasetBundle& bundle, const TrainConfig& config,
                                 int64_t stop_after_steps = -1);

// Continues an interrupted run; a resumed run reproduces the exact final
// parameters of an uninterrupted one. Completed checkpoints are returned
// unchanged.
TrainResult resume_training(const TrainingTrace& trace_so_far, const ModelCheckpoint& checkpoint,
                            const DatasetBundle& bundle, const TrainConfig& config);

// Training-loop internals shared with the evaluation-side probe trainer.
namespace detail {

std::vector<int> subset_indices(size_t n, int subset, uint64_t seed, const char* tag);
std::vector<int> batch_indices(const std::vector<int>& pool, int batch, uint64_t seed,
                               const char* tag, int64_t step);
Tensor gather_images(const std::vector<ExampleRecord>& records, const std::vector<int>& idx);
Tensor gather_tensors(const std::vector<Tensor>& images, const std::vector<int>& idx);
void check_record_finite(const StepRecord& record, TrainingTrace& trace);

// Cross-entropy training of a probe over the given records; `stage` tags the
// resulting checkpoint and `provenance` is stored verbatim.
TrainResult train_probe_records(const std::vector<ExampleRecord>& records, int class_count,
                                const TrainConfig& config, const std::string& stage,
                                json provenance, int64_t stop_after_steps = -1,
                                const ModelCheckpoint* resume_from = nullptr,
                                TrainingTrace trace_so_far = {});

}  // namespace detail

}  // namespace fairprior
