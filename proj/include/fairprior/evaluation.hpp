#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "fairprior/model_zoo.hpp"
#include "fairprior/synthetic_data.hpp"
#include "fairprior/trainer.hpp"

namespace fairprior {

// Accuracy and fairness summary for one (method, dataset, seed) cell.
struct MetricsReport {
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
    std::map<int, double> per_group_test_accuracy;
    double parity_gap = 0.0;
    json metadata;

    json to_json() const;
    static MetricsReport from_json(const json& j);
    void save(const std::string& path) const;
    static MetricsReport load(const std::string& path);
};

struct ParityResult {
    double gap = 0.0;
    std::map<int, double> per_group;
};

// Per-group accuracy plus the largest pairwise accuracy difference. Groups
// absent from the data are omitted, not scored 0.
ParityResult parity_gap(std::span<const int> predictions, std::span<const int> labels,
                        std::span<const int> sensitive);

// Replaces every record's image with the encoder's eval-mode output; labels
// and sensitive ids are preserved, provenance records the encoding.
DatasetBundle encode_dataset(const ModelCheckpoint& encoder_checkpoint,
                             const DatasetBundle& bundle);

// Probe (3 dense layers) trained on the bundle's train split only.
TrainResult train_probe(const DatasetBundle& bundle, const TrainConfig& config);

std::vector<int> predict_labels(Network& probe, const std::vector<ExampleRecord>& records,
                                int batch = 256);

// Fills a MetricsReport from probe predictions on both splits. The probe
// must have been trained on this bundle (fingerprint checked).
MetricsReport build_report(const ModelCheckpoint& probe_checkpoint, const DatasetBundle& bundle);

// Hash tying a probe to the dataset it was trained on.
uint64_t bundle_fingerprint(const DatasetBundle& bundle);

// Tiles a deterministic (seeded) sample of images into one PNG. Throws
// InputError when rows*cols exceeds the record count.
void export_grid(const std::vector<Tensor>& images, int n_rows, int n_cols,
                 const std::string& path, uint64_t seed);
void export_grid(const DatasetBundle& bundle, int n_rows, int n_cols, const std::string& path,
                 uint64_t seed);  // samples the test split

// The seeded selection used by export_grid, exposed so side-by-side method
// comparisons show the same underlying examples.
std::vector<int> grid_selection(size_t available, int n_rows, int n_cols, uint64_t seed);

// Tiling without the file write; {pixels, width, height, channels}.
struct RasterImage {
    std::vector<uint8_t> pixels;
    int width = 0, height = 0, channels = 1;
};
RasterImage tile_images(const std::vector<Tensor>& images, const std::vector<int>& selection,
                        int n_rows, int n_cols);

}  // namespace fairprior
