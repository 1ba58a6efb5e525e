#include "fairprior/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "fairprior/io.hpp"
#include "fairprior/objectives.hpp"
#include "fairprior/rng.hpp"

namespace fairprior {

// ----------------------------------------------------------------- reports

json MetricsReport::to_json() const {
    json per_group = json::object();
    for (const auto& [g, acc] : per_group_test_accuracy) per_group[std::to_string(g)] = acc;
    return {{"train_accuracy", train_accuracy},
            {"test_accuracy", test_accuracy},
            {"per_group_test_accuracy", per_group},
            {"parity_gap", parity_gap},
            {"metadata", metadata}};
}

MetricsReport MetricsReport::from_json(const json& j) {
    MetricsReport r;
    r.train_accuracy = j.at("train_accuracy").get<double>();
    r.test_accuracy = j.at("test_accuracy").get<double>();
    for (const auto& [key, value] : j.at("per_group_test_accuracy").items())
        r.per_group_test_accuracy[std::stoi(key)] = value.get<double>();
    r.parity_gap = j.at("parity_gap").get<double>();
    r.metadata = j.at("metadata");
    return r;
}

void MetricsReport::save(const std::string& path) const {
    io::write_text_file(path, to_json().dump(2) + "\n");
}

MetricsReport MetricsReport::load(const std::string& path) {
    return from_json(json::parse(io::read_text_file(path)));
}

// ------------------------------------------------------------- parity gap

ParityResult parity_gap(std::span<const int> predictions, std::span<const int> labels,
                        std::span<const int> sensitive) {
    if (predictions.empty()) throw InputError("parity_gap: empty input");
    if (predictions.size() != labels.size() || labels.size() != sensitive.size())
        throw InputError("parity_gap: misaligned arrays");

    std::map<int, std::pair<int64_t, int64_t>> counts;  // group -> {correct, total}
    for (size_t i = 0; i < predictions.size(); ++i) {
        auto& c = counts[sensitive[i]];
        c.first += predictions[i] == labels[i] ? 1 : 0;
        c.second += 1;
    }
    ParityResult out;
    for (const auto& [g, c] : counts)
        out.per_group[g] = static_cast<double>(c.first) / static_cast<double>(c.second);

    // max pairwise |a_i - a_j|, and the equivalent max - min route; for
    // accuracy-valued scores the two must agree exactly
    double pairwise = 0.0;
    for (auto i = out.per_group.begin(); i != out.per_group.end(); ++i)
        for (auto j = std::next(i); j != out.per_group.end(); ++j)
            pairwise = std::max(pairwise, std::abs(i->second - j->second));
    double lo = 1.0, hi = 0.0;
    for (const auto& [g, a] : out.per_group) {
        lo = std::min(lo, a);
        hi = std::max(hi, a);
    }
    const double spread = out.per_group.size() < 2 ? 0.0 : hi - lo;
    if (std::abs(spread - pairwise) > 1e-12)
        throw NumericError("parity_gap: max-min and pairwise routes disagree");
    out.gap = pairwise;
    return out;
}

// ---------------------------------------------------------------- encoding

namespace {

std::vector<ExampleRecord> encode_records(Network& encoder, const std::vector<ExampleRecord>& recs,
                                          int batch) {
    std::vector<ExampleRecord> out(recs.size());
    const auto shape = recs.empty() ? std::vector<int>{} : recs.front().image.shape;
    for (size_t begin = 0; begin < recs.size(); begin += static_cast<size_t>(batch)) {
        const size_t end = std::min(recs.size(), begin + static_cast<size_t>(batch));
        std::vector<int> idx(end - begin);
        std::iota(idx.begin(), idx.end(), static_cast<int>(begin));
        Tensor xb = detail::gather_images(recs, idx);
        Tensor enc = encoder.forward(xb, false);
        const int64_t chw = enc.numel() / enc.dim(0);
        for (size_t i = begin; i < end; ++i) {
            out[i].label = recs[i].label;
            out[i].sensitive = recs[i].sensitive;
            out[i].image = Tensor(shape);
            std::memcpy(out[i].image.ptr(), enc.ptr() + static_cast<int64_t>(i - begin) * chw,
                        static_cast<size_t>(chw) * 4);
        }
    }
    return out;
}

}  // namespace

DatasetBundle encode_dataset(const ModelCheckpoint& encoder_checkpoint,
                             const DatasetBundle& bundle) {
    Network encoder = encoder_checkpoint.rebuild("encoder");
    const auto shape = bundle.image_shape();
    if (encoder.spec.at("in_channels").get<int>() != shape[0] ||
        encoder.spec.at("image_side").get<int>() != shape[1])
        throw InputError("encode_dataset: encoder shape does not match the bundle records");

    DatasetBundle out;
    out.group_ids = bundle.group_ids;
    out.group_count = bundle.group_count;
    out.class_count = bundle.class_count;
    out.train = encode_records(encoder, bundle.train, 256);
    out.test = encode_records(encoder, bundle.test, 256);
    out.prior = bundle.prior;
    out.provenance = bundle.provenance;
    out.provenance["encoded_with"] = encoder_checkpoint.content_fingerprint();
    out.provenance["encoder_stage"] = encoder_checkpoint.stage;
    return out;
}

// ------------------------------------------------------------------ probes

uint64_t bundle_fingerprint(const DatasetBundle& bundle) {
    uint64_t h = hash_str(bundle.provenance.dump());
    h = hash_combine(h, bundle.train.size());
    h = hash_combine(h, bundle.test.size());
    return h;
}

TrainResult train_probe(const DatasetBundle& bundle, const TrainConfig& config) {
    if (bundle.train.empty()) throw InputError("train_probe: empty train split");
    json prov = {{"method", "probe"},
                 {"bundle_fingerprint", bundle_fingerprint(bundle)},
                 {"dataset", bundle.provenance}};
    return detail::train_probe_records(bundle.train, bundle.class_count, config, "probe",
                                       std::move(prov));
}

std::vector<int> predict_labels(Network& probe, const std::vector<ExampleRecord>& records,
                                int batch) {
    std::vector<int> preds(records.size());
    for (size_t begin = 0; begin < records.size(); begin += static_cast<size_t>(batch)) {
        const size_t end = std::min(records.size(), begin + static_cast<size_t>(batch));
        std::vector<int> idx(end - begin);
        std::iota(idx.begin(), idx.end(), static_cast<int>(begin));
        Tensor xb = detail::gather_images(records, idx);
        Tensor logits = probe.forward(xb, false);
        const int c = logits.dim(1);
        for (size_t i = begin; i < end; ++i) {
            const float* row = logits.ptr() + static_cast<int64_t>(i - begin) * c;
            int best = 0;
            for (int j = 1; j < c; ++j)
                if (row[j] > row[best]) best = j;
            preds[i] = best;
        }
    }
    return preds;
}

namespace {

double accuracy_of(const std::vector<int>& preds, const std::vector<ExampleRecord>& recs) {
    int64_t correct = 0;
    for (size_t i = 0; i < preds.size(); ++i) correct += preds[i] == recs[i].label ? 1 : 0;
    return preds.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(preds.size());
}

}  // namespace

MetricsReport build_report(const ModelCheckpoint& probe_checkpoint, const DatasetBundle& bundle) {
    const uint64_t expected = probe_checkpoint.provenance.value("bundle_fingerprint", uint64_t{0});
    if (expected != 0 && expected != bundle_fingerprint(bundle))
        throw CompatibilityError(
            "build_report: probe was trained on a different bundle than the one provided");

    Network probe = probe_checkpoint.rebuild("probe");
    auto train_preds = predict_labels(probe, bundle.train);
    auto test_preds = predict_labels(probe, bundle.test);

    std::vector<int> test_labels(bundle.test.size()), test_groups(bundle.test.size());
    for (size_t i = 0; i < bundle.test.size(); ++i) {
        test_labels[i] = bundle.test[i].label;
        test_groups[i] = bundle.test[i].sensitive;
    }
    auto parity = parity_gap(test_preds, test_labels, test_groups);

    MetricsReport report;
    report.train_accuracy = accuracy_of(train_preds, bundle.train);
    report.test_accuracy = accuracy_of(test_preds, bundle.test);
    report.per_group_test_accuracy = parity.per_group;
    report.parity_gap = parity.gap;
    report.metadata = {{"checkpoint_fingerprint", probe_checkpoint.content_fingerprint()},
                       {"dataset_provenance", bundle.provenance},
                       {"seed", probe_checkpoint.seed},
                       {"method", probe_checkpoint.provenance.value("method", "probe")}};
    return report;
}

// ------------------------------------------------------------------- grids

std::vector<int> grid_selection(size_t available, int n_rows, int n_cols, uint64_t seed) {
    if (n_rows <= 0 || n_cols <= 0) throw InputError("grid: non-positive grid dimensions");
    const size_t need = static_cast<size_t>(n_rows) * static_cast<size_t>(n_cols);
    if (need > available)
        throw InputError("grid: requested " + std::to_string(need) + " cells but only " +
                         std::to_string(available) + " records available");
    std::vector<int> idx(available);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(derive_seed(seed, "grid-selection"));
    rng.shuffle(idx.begin(), idx.end());
    idx.resize(need);
    return idx;
}

RasterImage tile_images(const std::vector<Tensor>& images, const std::vector<int>& selection,
                        int n_rows, int n_cols) {
    if (selection.empty()) throw InputError("grid: empty selection");
    const auto& shape = images[static_cast<size_t>(selection[0])].shape;
    const int c = shape[0], h = shape[1], w = shape[2];
    if (c != 1 && c != 3) throw InputError("grid: images must have 1 or 3 channels");

    RasterImage out;
    out.channels = c;
    out.width = n_cols * w;
    out.height = n_rows * h;
    out.pixels.assign(static_cast<size_t>(out.width) * out.height * c, 0);
    for (int r = 0; r < n_rows; ++r) {
        for (int col = 0; col < n_cols; ++col) {
            const Tensor& img = images[static_cast<size_t>(selection[static_cast<size_t>(r * n_cols + col)])];
            if (img.shape != shape) throw InputError("grid: images differ in shape");
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    for (int ch = 0; ch < c; ++ch) {
                        const float v = img.data[static_cast<size_t>((ch * h + y) * w + x)];
                        const auto byte = static_cast<uint8_t>(
                            std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
                        const size_t py = static_cast<size_t>(r * h + y);
                        const size_t px = static_cast<size_t>(col * w + x);
                        out.pixels[(py * static_cast<size_t>(out.width) + px) * c + static_cast<size_t>(ch)] = byte;
                    }
                }
            }
        }
    }
    return out;
}

void export_grid(const std::vector<Tensor>& images, int n_rows, int n_cols,
                 const std::string& path, uint64_t seed) {
    auto sel = grid_selection(images.size(), n_rows, n_cols, seed);
    auto raster = tile_images(images, sel, n_rows, n_cols);
    io::write_png(path, raster.pixels, raster.width, raster.height, raster.channels);
}

void export_grid(const DatasetBundle& bundle, int n_rows, int n_cols, const std::string& path,
                 uint64_t seed) {
    std::vector<Tensor> imgs;
    imgs.reserve(bundle.test.size());
    for (const auto& r : bundle.test) imgs.push_back(r.image);
    export_grid(imgs, n_rows, n_cols, path, seed);
}

}  // namespace fairprior
