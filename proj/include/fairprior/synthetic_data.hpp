#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "fairprior/tensor.hpp"

namespace fairprior {

using json = nlohmann::json;

// One image with its task label and sensitive attribute.
struct ExampleRecord {
    Tensor image;   // {C,H,W}, values in [0,1]
    int label = 0;
    int sensitive = 0;
};

// Train split (biased), decorrelated test split, prior-knowledge images and
// the label/group vocabularies, plus generation provenance.
struct DatasetBundle {
    std::vector<ExampleRecord> train;
    std::vector<ExampleRecord> test;
    std::vector<Tensor> prior;
    std::vector<int> group_ids;  // group vocabulary, e.g. {0,1} or {1..6}
    int group_count = 0;
    int class_count = 0;
    json provenance;

    int group_index(int sensitive_id) const;  // dense index into group_ids
    std::vector<int> image_shape() const;     // {C,H,W} of the records
};

void validate_bundle(const DatasetBundle& bundle);

void save_bundle(const std::string& dir, const DatasetBundle& bundle);
DatasetBundle load_bundle(const std::string& dir);

// ------------------------------------------------------------ digit corpus

// 28x28 grayscale digit images with identities 0-9 and a canonical
// train/test partition (first train_count images are the train part).
struct DigitCorpus {
    int side = 28;
    int count = 0;
    int train_count = 0;
    std::vector<float> pixels;  // count * side * side, in [0,1]
    std::vector<uint8_t> digits;

    const float* image(int i) const { return pixels.data() + static_cast<int64_t>(i) * side * side; }
};

// Procedurally rendered corpus (stroke glyphs with per-sample jitter);
// deterministic in (train_n, test_n, seed).
DigitCorpus synth_digit_corpus(int train_n, int test_n, uint64_t seed);

// Standard idx-format corpus files (train-images-idx3-ubyte etc.) from dir.
DigitCorpus load_idx_corpus(const std::string& dir);
void save_idx_corpus(const std::string& dir, const DigitCorpus& corpus);

// --------------------------------------------------------------- colormnist

struct ColorMnistOptions {
    int train_n = -1;  // -1: all corpus train images
    int test_n = -1;
    int prior_n = -1;  // -1: match train size
};

// Label construction: y_tilde = [digit > 4.5], y = y_tilde flipped w.p. 0.25,
// z = y flipped w.p. 0.2 on the train split, z ~ Bernoulli(1/2) on the test
// split. Images are 3x28x28; z=1 paints the digit red, z=0 green.
DatasetBundle generate_colormnist(const DigitCorpus& corpus, uint64_t seed,
                                  const ColorMnistOptions& opts = {});

// Color-free prior: all three channels carry the same grayscale digit.
std::vector<Tensor> generate_colormnist_prior(const DigitCorpus& corpus, int n = -1);

constexpr double kColorMnistLabelFlip = 0.25;
constexpr double kColorMnistColorFlip = 0.2;

// Helpers shared with the evaluation-side interpretability proxy.
Tensor colorize_digit(const float* gray, int side, bool red);
Tensor gray_digit_prior(const float* gray, int side);

// ------------------------------------------------------------------ dsprite

// Distribution parameters for the biased scale sampling (the paper's
// exponent alpha is distinct from the loss weight alpha).
struct DspriteBiasSpec {
    double power_exponent = 3.0;
    double normal_mean = 3.5;
    double normal_std = 1.0;

    void validate() const;
};

inline constexpr int kDspriteShapeHeart = 0;
inline constexpr int kDspriteShapeCircle = 1;
inline constexpr int kDspriteShapeSquare = 2;
inline constexpr int kDspriteScaleCount = 6;
inline constexpr int kDspritePriorScaleIndex = 3;  // nearest index below the mean 3.5

// P(scale | shape) over scale indices 1..6:
// heart ~ s^alpha, circle ~ N(mu, sigma^2) density at s, square ~ (6-s)^alpha.
std::array<double, 6> scale_distribution(int shape, const DspriteBiasSpec& spec);

// Source of 64x64 binary sprites indexed by the published factor grid
// (shape, scale 1..6, orientation, x, y). Counts for orientation/position
// come from the source so subset archives remain usable.
class SpriteSource {
  public:
    virtual ~SpriteSource() = default;
    virtual int orientation_count() const = 0;
    virtual int position_count() const = 0;  // per axis
    virtual Tensor image(int shape, int scale_index, int orientation, int pos_x,
                         int pos_y) const = 0;
};

// Renders the factor grid directly (40 orientations, 32x32 positions).
class ProceduralSprites : public SpriteSource {
  public:
    int orientation_count() const override { return 40; }
    int position_count() const override { return 32; }
    Tensor image(int shape, int scale_index, int orientation, int pos_x,
                 int pos_y) const override;
};

// Backed by an archive in the published array format ('imgs' u8 [N,64,64],
// 'latents_classes' i64 [N,6]).
class ArchiveSprites : public SpriteSource {
  public:
    explicit ArchiveSprites(const std::string& npz_path);
    int orientation_count() const override { return orient_count_; }
    int position_count() const override { return pos_count_; }
    Tensor image(int shape, int scale_index, int orientation, int pos_x,
                 int pos_y) const override;

  private:
    int orient_count_ = 0, pos_count_ = 0;
    std::vector<uint8_t> imgs_;
    std::vector<int32_t> row_of_;  // dense factor-tuple -> archive row
    int64_t tuple_index(int shape, int scale_index, int orientation, int pos_x, int pos_y) const;
};

struct DspriteOptions {
    int test_per_class = -1;  // -1: samples_per_class / 3, at least 500
    int prior_n = -1;         // -1: match train size
};

// Train split: per record, scale drawn from scale_distribution(shape);
// test split: scale uniform and independent of shape. Orientation/position
// strata are disjoint between the splits. label = shape (heart 0, circle 1,
// square 2), sensitive = scale index 1..6.
DatasetBundle generate_biased_dsprite(const SpriteSource& source, int samples_per_class,
                                      const DspriteBiasSpec& spec, uint64_t seed,
                                      const DspriteOptions& opts = {});

std::vector<Tensor> generate_dsprite_prior(const SpriteSource& source, int n, uint64_t seed = 7);

struct DspritePriorSample {
    Tensor image;
    int shape = 0, scale_index = 0, orientation = 0, pos_x = 0, pos_y = 0;
};
std::vector<DspritePriorSample> generate_dsprite_prior_detailed(const SpriteSource& source, int n,
                                                                uint64_t seed = 7);

// Stratum assignment for (orientation, position) tuples: 0 = train, 1 = test.
int dsprite_stratum(int orientation, int pos_x, int pos_y);

}  // namespace fairprior
