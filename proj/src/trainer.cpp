#include "fairprior/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

#include "fairprior/io.hpp"
#include "fairprior/objectives.hpp"
#include "fairprior/rng.hpp"

namespace fairprior {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

struct BundleView {
    std::vector<int> train_pool;  // indices into bundle.train
    std::vector<int> prior_pool;  // indices into bundle.prior
    std::vector<int> shape;       // {C,H,W}
    std::vector<int> group_index_of_train;
};

BundleView make_view(const DatasetBundle& bundle, const TrainConfig& config) {
    if (bundle.train.empty()) throw InputError("trainer: bundle has an empty train split");
    BundleView v;
    v.shape = bundle.image_shape();
    if (v.shape.size() != 3 || v.shape[1] != v.shape[2])
        throw InputError("trainer: records must be square {C,H,W} images");
    v.train_pool = detail::subset_indices(bundle.train.size(), config.train_subset, config.seed,
                                          "train-subset");
    if (!bundle.prior.empty())
        v.prior_pool = detail::subset_indices(bundle.prior.size(), config.prior_subset,
                                              config.seed, "prior-subset");
    v.group_index_of_train.reserve(bundle.train.size());
    for (const auto& r : bundle.train)
        v.group_index_of_train.push_back(bundle.group_index(r.sensitive));
    return v;
}

EncoderSpec encoder_spec_for(const BundleView& v, const TrainConfig& config) {
    EncoderSpec spec;
    spec.in_channels = v.shape[0];
    spec.image_side = v.shape[1];
    spec.hidden_channels = config.encoder_hidden;
    spec.kernel = config.encoder_kernel;
    return spec;
}

HeadSpec head_spec_for(HeadKind kind, int out_dim, const TrainConfig& config) {
    HeadSpec spec;
    spec.kind = kind;
    spec.out_dim = out_dim;
    spec.hidden_channels = config.head_hidden;
    spec.probe_hidden1 = config.probe_hidden1;
    spec.probe_hidden2 = config.probe_hidden2;
    return spec;
}

void restore_optimizer(nn::Optimizer& opt, const ModelCheckpoint* ckpt, const std::string& name) {
    if (!ckpt) return;
    const OptEntry* entry = ckpt->find_opt(name);
    if (entry && !entry->state.empty()) opt.set_state(entry->state);
}

void validate_dataset_match(const DatasetBundle& bundle, const TrainConfig& config) {
    const std::string gen = bundle.provenance.value("generator", "");
    if (!gen.empty() && gen != config.dataset)
        throw ConfigError("config says dataset '" + config.dataset + "' but the bundle was made by '" +
                          gen + "'");
}

int64_t steps_per_epoch(size_t pool, int batch) {
    return std::max<int64_t>(1, static_cast<int64_t>(pool) / batch);
}

std::vector<int> gather_group_indices(const std::vector<int>& group_of, const std::vector<int>& idx) {
    std::vector<int> out(idx.size());
    for (size_t i = 0; i < idx.size(); ++i) out[i] = group_of[static_cast<size_t>(idx[i])];
    return out;
}

std::vector<int> gather_labels(const std::vector<ExampleRecord>& recs, const std::vector<int>& idx) {
    std::vector<int> out(idx.size());
    for (size_t i = 0; i < idx.size(); ++i) out[i] = recs[static_cast<size_t>(idx[i])].label;
    return out;
}

// scores tensor [N,1] -> raw span
std::span<const float> score_span(const Tensor& t) {
    return std::span<const float>(t.ptr(), static_cast<size_t>(t.numel()));
}

double mean_of(const float* p, int64_t n) {
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) s += p[i];
    return s / static_cast<double>(n);
}

double l2_between(const std::vector<float>& a, const std::vector<float>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

// One critic ascent step on scale*(mean D(t) - mean D(f(x))) with clipping.
double critic_ascent(Network& critic, nn::Optimizer& opt, const Tensor& prior_batch,
                     const Tensor& encoded_batch, double scale, double clip) {
    const int bt = prior_batch.dim(0), be = encoded_batch.dim(0);
    Tensor both({bt + be, prior_batch.dim(1), prior_batch.dim(2), prior_batch.dim(3)});
    std::memcpy(both.ptr(), prior_batch.ptr(), static_cast<size_t>(prior_batch.numel()) * 4);
    std::memcpy(both.ptr() + prior_batch.numel(), encoded_batch.ptr(),
                static_cast<size_t>(encoded_batch.numel()) * 4);
    Tensor scores = critic.forward(both, true);
    const double lp = prior_loss(std::span<const float>(scores.ptr(), static_cast<size_t>(bt)),
                                 std::span<const float>(scores.ptr() + bt, static_cast<size_t>(be)));
    Tensor dscores(scores.shape);
    for (int i = 0; i < bt; ++i) dscores.data[static_cast<size_t>(i)] = static_cast<float>(-scale / bt);
    for (int i = 0; i < be; ++i) dscores.data[static_cast<size_t>(bt + i)] = static_cast<float>(scale / be);
    critic.net.zero_grads();
    critic.net.backward(dscores);
    opt.step(critic.net.params());
    critic.net.clip_params(static_cast<float>(clip));
    return lp;
}

}  // namespace

// ------------------------------------------------------------------ traces

std::string TrainingTrace::to_jsonl() const {
    std::string out;
    for (const auto& r : records) {
        json j = {{"step", r.step}, {"stage", r.stage},   {"prior", r.prior},
                  {"div", r.div},   {"clf", r.clf},       {"adv", r.adv},
                  {"total", r.total}, {"wall_ms", r.wall_ms}};
        out += j.dump() + "\n";
    }
    if (!summary.is_null()) out += json{{"summary", summary}}.dump() + "\n";
    return out;
}

TrainingTrace TrainingTrace::from_jsonl(const std::string& text) {
    TrainingTrace trace;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        if (j.contains("summary")) {
            trace.summary = j["summary"];
            continue;
        }
        StepRecord r;
        r.step = j.at("step").get<int64_t>();
        r.stage = j.at("stage").get<std::string>();
        r.prior = j.at("prior").get<double>();
        r.div = j.at("div").get<double>();
        r.clf = j.at("clf").get<double>();
        r.adv = j.at("adv").get<double>();
        r.total = j.at("total").get<double>();
        r.wall_ms = j.at("wall_ms").get<double>();
        trace.records.push_back(std::move(r));
    }
    return trace;
}

void TrainingTrace::save(const std::string& path) const { io::write_text_file(path, to_jsonl()); }

TrainingTrace TrainingTrace::load(const std::string& path) {
    return from_jsonl(io::read_text_file(path));
}

// ----------------------------------------------------------------- details

namespace detail {

std::vector<int> subset_indices(size_t n, int subset, uint64_t seed, const char* tag) {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    if (subset <= 0 || static_cast<size_t>(subset) >= n) return idx;
    Rng rng(derive_seed(seed, tag));
    rng.shuffle(idx.begin(), idx.end());
    idx.resize(static_cast<size_t>(subset));
    return idx;
}

std::vector<int> batch_indices(const std::vector<int>& pool, int batch, uint64_t seed,
                               const char* tag, int64_t step) {
    Rng rng(derive_seed(seed, tag, static_cast<uint64_t>(step)));
    std::vector<int> out(static_cast<size_t>(batch));
    for (auto& v : out) v = pool[static_cast<size_t>(rng.below(pool.size()))];
    return out;
}

Tensor gather_images(const std::vector<ExampleRecord>& records, const std::vector<int>& idx) {
    const auto& shape = records.front().image.shape;
    Tensor out({static_cast<int>(idx.size()), shape[0], shape[1], shape[2]});
    const int64_t chw = records.front().image.numel();
    for (size_t i = 0; i < idx.size(); ++i)
        std::memcpy(out.ptr() + static_cast<int64_t>(i) * chw,
                    records[static_cast<size_t>(idx[i])].image.ptr(), static_cast<size_t>(chw) * 4);
    return out;
}

Tensor gather_tensors(const std::vector<Tensor>& images, const std::vector<int>& idx) {
    const auto& shape = images.front().shape;
    Tensor out({static_cast<int>(idx.size()), shape[0], shape[1], shape[2]});
    const int64_t chw = images.front().numel();
    for (size_t i = 0; i < idx.size(); ++i)
        std::memcpy(out.ptr() + static_cast<int64_t>(i) * chw, images[static_cast<size_t>(idx[i])].ptr(),
                    static_cast<size_t>(chw) * 4);
    return out;
}

void check_record_finite(const StepRecord& record, TrainingTrace& trace) {
    trace.records.push_back(record);
    const double vals[] = {record.prior, record.div, record.clf, record.adv, record.total};
    for (double v : vals)
        if (!std::isfinite(v))
            throw TrainAbort("non-finite loss at step " + std::to_string(record.step) +
                                 " (stage " + record.stage + ")",
                             trace);
}

TrainResult train_probe_records(const std::vector<ExampleRecord>& records, int class_count,
                                const TrainConfig& config, const std::string& stage,
                                json provenance, int64_t stop_after_steps,
                                const ModelCheckpoint* resume_from, TrainingTrace trace_so_far) {
    if (records.empty()) throw InputError("probe training: empty record set");
    const auto& shape = records.front().image.shape;

    Network probe = resume_from
                        ? resume_from->rebuild("probe")
                        : build_head(head_spec_for(HeadKind::probe, class_count, config), shape,
                                     derive_seed(config.seed, "probe"));
    nn::Adam opt(config.lr_probe);
    restore_optimizer(opt, resume_from, "probe");

    std::vector<int> pool(records.size());
    std::iota(pool.begin(), pool.end(), 0);
    const int64_t total_steps = static_cast<int64_t>(config.probe_epochs) *
                                steps_per_epoch(pool.size(), config.probe_batch);
    int64_t step = resume_from ? resume_from->progress.step : 0;
    const int64_t stop_at = stop_after_steps < 0 ? total_steps
                                                 : std::min<int64_t>(total_steps, stop_after_steps);

    TrainingTrace trace = std::move(trace_so_far);
    for (; step < stop_at; ++step) {
        const auto t0 = Clock::now();
        auto idx = batch_indices(pool, config.probe_batch, config.seed, "probe/x", step);
        Tensor xb = gather_images(records, idx);
        auto yb = gather_labels(records, idx);
        Tensor logits = probe.forward(xb, true);
        Tensor dlogits(logits.shape);
        const double loss = classification_loss_backward(logits, yb, 1.0, dlogits);
        probe.net.zero_grads();
        probe.net.backward(dlogits);
        opt.step(probe.net.params());

        StepRecord r;
        r.step = step;
        r.stage = "probe";
        r.clf = loss;
        r.total = loss;
        r.wall_ms = ms_since(t0);
        check_record_finite(r, trace);
    }

    ModelCheckpoint ckpt;
    ckpt.stage = stage;
    ckpt.seed = config.seed;
    ckpt.config_fingerprint = train_config_fingerprint(config);
    ckpt.nets.push_back(snapshot_net("probe", probe));
    ckpt.opts.push_back({"probe", opt.kind(), opt.state()});
    ckpt.progress = {step, total_steps, step >= total_steps};
    ckpt.provenance = std::move(provenance);
    return {std::move(ckpt), std::move(trace)};
}

}  // namespace detail

// ----------------------------------------------------------------- stage 1

namespace {

TrainResult run_stage1(const DatasetBundle& bundle, const TrainConfig& config,
                       int64_t stop_after_steps, const ModelCheckpoint* resume_from,
                       TrainingTrace trace) {
    if (bundle.prior.empty()) throw InputError("prior training requires a nonempty prior set");
    validate_dataset_match(bundle, config);
    config.weights.validate();
    const BundleView view = make_view(bundle, config);

    Network encoder = resume_from ? resume_from->rebuild("encoder")
                                  : build_encoder(encoder_spec_for(view, config),
                                                  derive_seed(config.seed, "encoder"));
    Network critic = resume_from ? resume_from->rebuild("critic")
                                 : build_head(head_spec_for(HeadKind::critic, 1, config),
                                              view.shape, derive_seed(config.seed, "critic"));
    nn::Adam enc_opt(config.lr_encoder);
    nn::RmsProp critic_opt(config.lr_critic);
    restore_optimizer(enc_opt, resume_from, "encoder");
    restore_optimizer(critic_opt, resume_from, "critic");

    const int64_t total_steps = static_cast<int64_t>(config.stage1_epochs) *
                                steps_per_epoch(view.train_pool.size(), config.batch_size);
    int64_t step = resume_from ? resume_from->progress.step : 0;
    const int64_t stop_at = stop_after_steps < 0 ? total_steps
                                                 : std::min<int64_t>(total_steps, stop_after_steps);

    for (; step < stop_at; ++step) {
        const auto t0 = Clock::now();

        for (int c = 0; c < config.critic_steps; ++c) {
            const int64_t inner = step * config.critic_steps + c;
            auto xi = detail::batch_indices(view.train_pool, config.batch_size, config.seed,
                                            "s1/critic/x", inner);
            auto ti = detail::batch_indices(view.prior_pool, config.batch_size, config.seed,
                                            "s1/critic/t", inner);
            Tensor xb = detail::gather_images(bundle.train, xi);
            Tensor tb = detail::gather_tensors(bundle.prior, ti);
            Tensor enc = encoder.forward(xb, true);
            critic_ascent(critic, critic_opt, tb, enc, 1.0, config.critic_clip);
        }

        // encoder step on prior - lambda * diversity
        auto xi = detail::batch_indices(view.train_pool, config.batch_size, config.seed, "s1/enc/x",
                                        step);
        auto ti = detail::batch_indices(view.prior_pool, config.batch_size, config.seed, "s1/enc/t",
                                        step);
        Tensor xb = detail::gather_images(bundle.train, xi);
        Tensor tb = detail::gather_tensors(bundle.prior, ti);
        Tensor enc = encoder.forward(xb, true);
        Tensor scores_t = critic.forward(tb, true);
        Tensor scores_e = critic.forward(enc, true);
        const double lp = prior_loss(score_span(scores_t), score_span(scores_e));

        Tensor dscores(scores_e.shape);
        const float g = static_cast<float>(prior_loss_grad_wrt_encoded(static_cast<size_t>(scores_e.dim(0))));
        for (auto& v : dscores.data) v = g;
        critic.net.zero_grads();  // input-gradient pass only; param grads discarded
        Tensor denc = critic.net.backward(dscores);

        double div = 0.0;
        if (config.weights.lambda_div > 0.0)
            div = diversity_loss_backward(xb, enc, -config.weights.lambda_div, denc);

        encoder.net.zero_grads();
        encoder.net.backward(denc);
        enc_opt.step(encoder.net.params());

        StepRecord r;
        r.step = step;
        r.stage = "stage1";
        r.prior = lp;
        r.div = div;
        r.total = stage1_total(lp, div, config.weights);
        r.wall_ms = ms_since(t0);
        detail::check_record_finite(r, trace);
    }

    ModelCheckpoint ckpt;
    ckpt.stage = "prior";
    ckpt.seed = config.seed;
    ckpt.config_fingerprint = train_config_fingerprint(config);
    ckpt.nets.push_back(snapshot_net("encoder", encoder));
    ckpt.nets.push_back(snapshot_net("critic", critic));
    ckpt.opts.push_back({"encoder", enc_opt.kind(), enc_opt.state()});
    ckpt.opts.push_back({"critic", critic_opt.kind(), critic_opt.state()});
    ckpt.progress = {step, total_steps, step >= total_steps};
    ckpt.provenance = {{"method", "prior_stage1"}, {"dataset", bundle.provenance}};
    return {std::move(ckpt), std::move(trace)};
}

// ----------------------------------------------------------------- stage 2

TrainResult run_stage2(const DatasetBundle& bundle, const std::optional<ModelCheckpoint>& start,
                       const TrainConfig& config, int64_t stop_after_steps,
                       const ModelCheckpoint* resume_from, TrainingTrace trace) {
    validate_dataset_match(bundle, config);
    config.weights.validate();
    const BundleView view = make_view(bundle, config);
    const bool use_prior_term = config.weights.gamma_prior > 0.0;
    if (use_prior_term && bundle.prior.empty())
        throw InputError("gamma_prior > 0 requires a nonempty prior set");

    if (start && start->stage != "prior")
        throw InputError("train_fair: start checkpoint is stage '" + start->stage +
                         "', expected 'prior'");

    Network encoder = resume_from ? resume_from->rebuild("encoder")
                      : start     ? start->rebuild("encoder")
                                  : build_encoder(encoder_spec_for(view, config),
                                                  derive_seed(config.seed, "encoder"));
    if (encoder.spec.at("image_side").get<int>() != view.shape[1] ||
        encoder.spec.at("in_channels").get<int>() != view.shape[0])
        throw CompatibilityError("train_fair: encoder checkpoint shape does not match the bundle");

    Network critic = resume_from ? resume_from->rebuild("critic")
                     : start     ? start->rebuild("critic")
                                 : build_head(head_spec_for(HeadKind::critic, 1, config),
                                              view.shape, derive_seed(config.seed, "critic"));
    Network adversary = resume_from
                            ? resume_from->rebuild("adversary")
                            : build_head(head_spec_for(HeadKind::adversary, bundle.group_count,
                                                       config),
                                         view.shape, derive_seed(config.seed, "adversary"));
    Network classifier = resume_from
                             ? resume_from->rebuild("classifier")
                             : build_head(head_spec_for(HeadKind::classifier, bundle.class_count,
                                                        config),
                                          view.shape, derive_seed(config.seed, "classifier"));

    // reference points for the fine-tuning locality report
    std::vector<float> start_params;
    if (resume_from) {
        const NetEntry* e = resume_from->find_net("encoder_start");
        if (!e) throw CompatibilityError("fair checkpoint is missing its encoder_start reference");
        start_params = e->params;
    } else {
        start_params = encoder.net.flat_params();
    }

    nn::Adam enc_opt(config.lr_encoder);
    nn::Adam clf_opt(config.lr_classifier);
    nn::Adam adv_opt(config.lr_adversary);
    nn::RmsProp critic_opt(config.lr_critic);
    restore_optimizer(enc_opt, resume_from, "encoder");
    restore_optimizer(clf_opt, resume_from, "classifier");
    restore_optimizer(adv_opt, resume_from, "adversary");
    restore_optimizer(critic_opt, resume_from, "critic");

    const int64_t total_steps = static_cast<int64_t>(config.stage2_epochs) *
                                steps_per_epoch(view.train_pool.size(), config.batch_size);
    int64_t step = resume_from ? resume_from->progress.step : 0;
    const int64_t stop_at = stop_after_steps < 0 ? total_steps
                                                 : std::min<int64_t>(total_steps, stop_after_steps);

    const double alpha = config.weights.alpha_clf;
    const double beta = config.weights.beta_adv;
    const double gamma = config.weights.gamma_prior;

    for (; step < stop_at; ++step) {
        const auto t0 = Clock::now();
        auto xi = detail::batch_indices(view.train_pool, config.batch_size, config.seed, "s2/x",
                                        step);
        Tensor xb = detail::gather_images(bundle.train, xi);
        auto yb = gather_labels(bundle.train, xi);
        auto ab = gather_group_indices(view.group_index_of_train, xi);

        Tensor enc = encoder.forward(xb, true);

        // (1) adversary ascends beta * L_adv
        double adv_value = 0.0;
        if (beta > 0.0) {
            Tensor h_logits = adversary.forward(enc, true);
            Tensor dh(h_logits.shape);
            adversary_loss_backward(h_logits, ab, bundle.group_count, -beta, dh);
            adversary.net.zero_grads();
            adversary.net.backward(dh);
            adv_opt.step(adversary.net.params());
        }

        // (2) critic ascends gamma * L_prior, clipped
        double prior_value = 0.0;
        if (use_prior_term) {
            auto ti = detail::batch_indices(view.prior_pool, config.batch_size, config.seed,
                                            "s2/t", step);
            Tensor tb = detail::gather_tensors(bundle.prior, ti);
            prior_value = critic_ascent(critic, critic_opt, tb, enc, gamma, config.critic_clip);
        }

        // (3) encoder + classifier descend the combined objective
        Tensor denc(enc.shape);
        Tensor c_logits = classifier.forward(enc, true);
        Tensor dc(c_logits.shape);
        const double clf_value = classification_loss_backward(c_logits, yb, alpha, dc);
        classifier.net.zero_grads();
        {
            Tensor d = classifier.net.backward(dc);
            for (int64_t i = 0; i < denc.numel(); ++i) denc.data[static_cast<size_t>(i)] += d.data[static_cast<size_t>(i)];
        }
        if (beta > 0.0) {
            Tensor h_logits = adversary.forward(enc, true);  // fresh opponent after (1)
            Tensor dh(h_logits.shape);
            adv_value = adversary_loss_backward(h_logits, ab, bundle.group_count, beta, dh);
            adversary.net.zero_grads();  // param grads from this pass are discarded
            Tensor d = adversary.net.backward(dh);
            for (int64_t i = 0; i < denc.numel(); ++i) denc.data[static_cast<size_t>(i)] += d.data[static_cast<size_t>(i)];
        }
        if (use_prior_term) {
            Tensor scores_e = critic.forward(enc, true);
            Tensor ds(scores_e.shape);
            const float g = static_cast<float>(
                gamma * prior_loss_grad_wrt_encoded(static_cast<size_t>(scores_e.dim(0))));
            for (auto& v : ds.data) v = g;
            critic.net.zero_grads();
            Tensor d = critic.net.backward(ds);
            for (int64_t i = 0; i < denc.numel(); ++i) denc.data[static_cast<size_t>(i)] += d.data[static_cast<size_t>(i)];
        }
        encoder.net.zero_grads();
        encoder.net.backward(denc);
        enc_opt.step(encoder.net.params());
        clf_opt.step(classifier.net.params());

        StepRecord r;
        r.step = step;
        r.stage = "stage2";
        r.prior = prior_value;
        r.clf = clf_value;
        r.adv = adv_value;
        r.total = stage2_total(clf_value, adv_value, prior_value, config.weights);
        r.wall_ms = ms_since(t0);
        detail::check_record_finite(r, trace);
    }

    const bool done = step >= total_steps;
    ModelCheckpoint ckpt;
    ckpt.stage = "fair";
    ckpt.seed = config.seed;
    ckpt.config_fingerprint = train_config_fingerprint(config);
    ckpt.nets.push_back(snapshot_net("encoder", encoder));
    ckpt.nets.push_back(snapshot_net("critic", critic));
    ckpt.nets.push_back(snapshot_net("adversary", adversary));
    ckpt.nets.push_back(snapshot_net("classifier", classifier));
    NetEntry start_entry;
    start_entry.name = "encoder_start";
    start_entry.spec = encoder.spec;
    start_entry.params = start_params;
    ckpt.nets.push_back(std::move(start_entry));
    ckpt.opts.push_back({"encoder", enc_opt.kind(), enc_opt.state()});
    ckpt.opts.push_back({"critic", critic_opt.kind(), critic_opt.state()});
    ckpt.opts.push_back({"adversary", adv_opt.kind(), adv_opt.state()});
    ckpt.opts.push_back({"classifier", clf_opt.kind(), clf_opt.state()});
    ckpt.progress = {step, total_steps, done};
    if (resume_from)
        ckpt.provenance = resume_from->provenance;
    else
        ckpt.provenance = {{"method", start ? "prior_training" : "laftr"},
                           {"started_from_prior", start.has_value()},
                           {"dataset", bundle.provenance}};

    if (done) {
        // fine-tuning locality: how far stage 2 moved the encoder, vs. how far
        // it sits from a fresh initialization
        Network init = build_encoder(encoder_spec_for(view, config),
                                     derive_seed(config.seed, "encoder"));
        auto final_params = encoder.net.flat_params();
        trace.summary["encoder_displacement_from_start"] = l2_between(final_params, start_params);
        trace.summary["encoder_displacement_from_init"] =
            l2_between(final_params, init.net.flat_params());
    }
    return {std::move(ckpt), std::move(trace)};
}

}  // namespace

TrainResult train_prior(const DatasetBundle& bundle, const TrainConfig& config,
                        int64_t stop_after_steps) {
    return run_stage1(bundle, config, stop_after_steps, nullptr, {});
}

TrainResult train_fair(const DatasetBundle& bundle, const std::optional<ModelCheckpoint>& start,
                       const TrainConfig& config, int64_t stop_after_steps) {
    return run_stage2(bundle, start, config, stop_after_steps, nullptr, {});
}

TrainResult train_baseline_naive(const DatasetBundle& bundle, const TrainConfig& config,
                                 int64_t stop_after_steps) {
    validate_dataset_match(bundle, config);
    if (bundle.train.empty()) throw InputError("naive baseline: bundle has an empty train split");
    json prov = {{"method", "naive"}, {"dataset", bundle.provenance}};
    return detail::train_probe_records(bundle.train, bundle.class_count, config, "baseline",
                                       std::move(prov), stop_after_steps);
}

TrainResult resume_training(const TrainingTrace& trace_so_far, const ModelCheckpoint& checkpoint,
                            const DatasetBundle& bundle, const TrainConfig& config) {
    if (checkpoint.config_fingerprint != train_config_fingerprint(config))
        throw CompatibilityError(
            "resume: config fingerprint does not match the checkpoint (the run was started with "
            "different settings)");
    if (checkpoint.progress.completed) return {checkpoint, trace_so_far};

    if (checkpoint.stage == "prior")
        return run_stage1(bundle, config, -1, &checkpoint, trace_so_far);
    if (checkpoint.stage == "fair")
        return run_stage2(bundle, std::nullopt, config, -1, &checkpoint, trace_so_far);
    if (checkpoint.stage == "baseline" || checkpoint.stage == "probe")
        return detail::train_probe_records(bundle.train, bundle.class_count, config,
                                           checkpoint.stage, checkpoint.provenance, -1,
                                           &checkpoint, trace_so_far);
    throw CompatibilityError("resume: unknown checkpoint stage '" + checkpoint.stage + "'");
}

}  // namespace fairprior
