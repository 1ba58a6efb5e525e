#include "fairprior/synthetic_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <numeric>

#include "fairprior/errors.hpp"
#include "fairprior/io.hpp"
#include "fairprior/rng.hpp"

namespace fairprior {

namespace fs = std::filesystem;

// ----------------------------------------------------------------- bundles

int DatasetBundle::group_index(int sensitive_id) const {
    for (size_t i = 0; i < group_ids.size(); ++i)
        if (group_ids[i] == sensitive_id) return static_cast<int>(i);
    throw InputError("sensitive id " + std::to_string(sensitive_id) + " not in group vocabulary");
}

std::vector<int> DatasetBundle::image_shape() const {
    if (!train.empty()) return train.front().image.shape;
    if (!test.empty()) return test.front().image.shape;
    throw InputError("bundle has no records");
}

void validate_bundle(const DatasetBundle& bundle) {
    if (bundle.group_count != static_cast<int>(bundle.group_ids.size()))
        throw InputError("bundle: group_count does not match vocabulary");
    auto check_records = [&](const std::vector<ExampleRecord>& recs, const char* split) {
        for (const auto& r : recs) {
            if (r.label < 0 || r.label >= bundle.class_count)
                throw InputError(std::string("bundle: label outside vocabulary in ") + split);
            bundle.group_index(r.sensitive);
            for (float v : r.image.data)
                if (v < 0.0f || v > 1.0f)
                    throw InputError(std::string("bundle: pixel outside [0,1] in ") + split);
        }
    };
    check_records(bundle.train, "train");
    check_records(bundle.test, "test");
    if (!bundle.prior.empty() && !bundle.train.empty()) {
        const auto& shape = bundle.train.front().image.shape;
        for (const auto& p : bundle.prior)
            if (p.shape != shape) throw InputError("bundle: prior image shape mismatch");
    }
}

namespace {

void append_split(std::vector<float>& images, std::vector<int32_t>& labels,
                  std::vector<int32_t>& sensitive, const std::vector<ExampleRecord>& recs) {
    for (const auto& r : recs) {
        images.insert(images.end(), r.image.data.begin(), r.image.data.end());
        labels.push_back(r.label);
        sensitive.push_back(r.sensitive);
    }
}

std::vector<ExampleRecord> read_split(const std::string& dir, const std::string& name) {
    auto imgs = io::load_tensor_file(dir + "/" + name + "_images.bin");
    auto labels = io::load_tensor_file(dir + "/" + name + "_labels.bin");
    auto sens = io::load_tensor_file(dir + "/" + name + "_sensitive.bin");
    if (imgs.shape.size() != 4) throw IntegrityError("bundle: image tensor must be NCHW");
    const int n = static_cast<int>(imgs.shape[0]);
    const int c = static_cast<int>(imgs.shape[1]);
    const int h = static_cast<int>(imgs.shape[2]);
    const int w = static_cast<int>(imgs.shape[3]);
    if (labels.numel() != n || sens.numel() != n)
        throw IntegrityError("bundle: split array lengths disagree");
    std::vector<ExampleRecord> out(static_cast<size_t>(n));
    const int64_t chw = static_cast<int64_t>(c) * h * w;
    for (int i = 0; i < n; ++i) {
        auto& r = out[static_cast<size_t>(i)];
        r.image = Tensor({c, h, w});
        std::memcpy(r.image.ptr(), imgs.f32_ptr() + i * chw, static_cast<size_t>(chw) * 4);
        r.label = labels.i32_ptr()[i];
        r.sensitive = sens.i32_ptr()[i];
    }
    return out;
}

}  // namespace

void save_bundle(const std::string& dir, const DatasetBundle& bundle) {
    fs::create_directories(dir);
    const auto shape = bundle.image_shape();
    auto save_split = [&](const std::vector<ExampleRecord>& recs, const std::string& name) {
        std::vector<float> images;
        images.reserve(recs.size() * static_cast<size_t>(shape[0]) * shape[1] * shape[2]);
        std::vector<int32_t> labels, sens;
        append_split(images, labels, sens, recs);
        io::save_tensor_file(dir + "/" + name + "_images.bin",
                             io::blob_from_floats(images, {static_cast<int64_t>(recs.size()),
                                                           shape[0], shape[1], shape[2]}));
        io::save_tensor_file(dir + "/" + name + "_labels.bin",
                             io::blob_from_ints(labels, {static_cast<int64_t>(recs.size())}));
        io::save_tensor_file(dir + "/" + name + "_sensitive.bin",
                             io::blob_from_ints(sens, {static_cast<int64_t>(recs.size())}));
    };
    save_split(bundle.train, "train");
    save_split(bundle.test, "test");

    std::vector<float> prior;
    prior.reserve(bundle.prior.size() * static_cast<size_t>(shape[0]) * shape[1] * shape[2]);
    for (const auto& p : bundle.prior) prior.insert(prior.end(), p.data.begin(), p.data.end());
    io::save_tensor_file(dir + "/prior_images.bin",
                         io::blob_from_floats(prior, {static_cast<int64_t>(bundle.prior.size()),
                                                      shape[0], shape[1], shape[2]}));

    json manifest;
    manifest["format"] = "fairprior-bundle-v1";
    manifest["class_count"] = bundle.class_count;
    manifest["group_ids"] = bundle.group_ids;
    manifest["counts"] = {{"train", bundle.train.size()},
                          {"test", bundle.test.size()},
                          {"prior", bundle.prior.size()}};
    manifest["image_shape"] = shape;
    manifest["byte_order"] = "little-endian";
    manifest["files"] = {
        {"train_images", "train_images.bin"},   {"train_labels", "train_labels.bin"},
        {"train_sensitive", "train_sensitive.bin"}, {"test_images", "test_images.bin"},
        {"test_labels", "test_labels.bin"},     {"test_sensitive", "test_sensitive.bin"},
        {"prior_images", "prior_images.bin"}};
    manifest["provenance"] = bundle.provenance;
    io::write_text_file(dir + "/manifest.json", manifest.dump(2) + "\n");
}

DatasetBundle load_bundle(const std::string& dir) {
    json manifest;
    try {
        manifest = json::parse(io::read_text_file(dir + "/manifest.json"));
    } catch (const json::exception& e) {
        throw IntegrityError("bundle manifest unreadable: " + std::string(e.what()));
    }
    DatasetBundle bundle;
    bundle.class_count = manifest.at("class_count").get<int>();
    bundle.group_ids = manifest.at("group_ids").get<std::vector<int>>();
    bundle.group_count = static_cast<int>(bundle.group_ids.size());
    bundle.provenance = manifest.at("provenance");
    bundle.train = read_split(dir, "train");
    bundle.test = read_split(dir, "test");

    auto prior = io::load_tensor_file(dir + "/prior_images.bin");
    const int n = static_cast<int>(prior.shape[0]);
    const int c = static_cast<int>(prior.shape[1]);
    const int h = static_cast<int>(prior.shape[2]);
    const int w = static_cast<int>(prior.shape[3]);
    const int64_t chw = static_cast<int64_t>(c) * h * w;
    bundle.prior.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        bundle.prior[static_cast<size_t>(i)] = Tensor({c, h, w});
        std::memcpy(bundle.prior[static_cast<size_t>(i)].ptr(), prior.f32_ptr() + i * chw,
                    static_cast<size_t>(chw) * 4);
    }
    return bundle;
}

// ------------------------------------------------------------ digit glyphs

namespace {

struct Pt {
    double x, y;
};
using Poly = std::vector<Pt>;

void arc_into(Poly& poly, double cx, double cy, double rx, double ry, double deg0, double deg1,
              int segs = 14) {
    for (int i = 0; i <= segs; ++i) {
        const double t = (deg0 + (deg1 - deg0) * i / segs) * M_PI / 180.0;
        poly.push_back({cx + rx * std::cos(t), cy + ry * std::sin(t)});
    }
}

// Stroke skeletons on a unit box, y pointing down.
std::vector<Poly> digit_strokes(int digit) {
    std::vector<Poly> s;
    auto arc = [&](double cx, double cy, double rx, double ry, double a0, double a1) {
        Poly p;
        arc_into(p, cx, cy, rx, ry, a0, a1);
        s.push_back(std::move(p));
    };
    switch (digit) {
        case 0:
            arc(0.50, 0.50, 0.26, 0.37, 0, 360);
            break;
        case 1:
            s.push_back({{0.36, 0.26}, {0.56, 0.12}, {0.56, 0.88}});
            break;
        case 2:
            arc(0.50, 0.32, 0.23, 0.20, 175, 355);
            s.push_back({{0.72, 0.34}, {0.28, 0.88}});
            s.push_back({{0.28, 0.88}, {0.76, 0.88}});
            break;
        case 3:
            arc(0.46, 0.31, 0.22, 0.19, 210, 450);
            arc(0.46, 0.69, 0.23, 0.19, 270, 510);
            break;
        case 4:
            s.push_back({{0.60, 0.10}, {0.22, 0.62}, {0.80, 0.62}});
            s.push_back({{0.63, 0.38}, {0.63, 0.90}});
            break;
        case 5:
            s.push_back({{0.72, 0.12}, {0.31, 0.12}, {0.28, 0.47}});
            arc(0.47, 0.66, 0.25, 0.22, 255, 505);
            break;
        case 6:
            s.push_back({{0.66, 0.10}, {0.44, 0.40}, {0.32, 0.64}});
            arc(0.49, 0.68, 0.20, 0.20, 0, 360);
            break;
        case 7:
            s.push_back({{0.24, 0.13}, {0.76, 0.13}, {0.42, 0.88}});
            break;
        case 8:
            arc(0.50, 0.30, 0.19, 0.17, 0, 360);
            arc(0.50, 0.67, 0.23, 0.21, 0, 360);
            break;
        case 9:
            arc(0.47, 0.33, 0.20, 0.20, 0, 360);
            s.push_back({{0.67, 0.35}, {0.63, 0.60}, {0.50, 0.88}});
            break;
        default:
            throw InputError("digit must be 0-9");
    }
    return s;
}

double dist_to_segment(double px, double py, const Pt& a, const Pt& b) {
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0.0 ? ((px - a.x) * dx + (py - a.y) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double qx = a.x + t * dx, qy = a.y + t * dy;
    return std::hypot(px - qx, py - qy);
}

// Renders one jittered digit into a side*side buffer (values in [0,1]).
void render_digit(int digit, Rng& rng, int side, float* out) {
    auto strokes = digit_strokes(digit);

    // random affine about the glyph center plus small per-point wobble
    const double rot = rng.uniform(-0.22, 0.22);
    const double shear = rng.uniform(-0.22, 0.22);
    const double sx = rng.uniform(0.82, 1.10);
    const double sy = rng.uniform(0.82, 1.10);
    const double tx = rng.uniform(-0.06, 0.06);
    const double ty = rng.uniform(-0.06, 0.06);
    const double cr = std::cos(rot), sr = std::sin(rot);
    for (auto& poly : strokes) {
        for (auto& p : poly) {
            double x = (p.x - 0.5 + rng.uniform(-0.012, 0.012)) * sx;
            double y = (p.y - 0.5 + rng.uniform(-0.012, 0.012)) * sy;
            x += shear * y;
            const double xr = cr * x - sr * y, yr = sr * x + cr * y;
            p.x = xr + 0.5 + tx;
            p.y = yr + 0.5 + ty;
        }
    }

    const double width = rng.uniform(0.035, 0.062);
    const double aa = 0.030;
    const double intensity = rng.uniform(0.80, 1.0);

    std::fill(out, out + static_cast<int64_t>(side) * side, 0.0f);
    const double inv = 1.0 / side;
    for (const auto& poly : strokes) {
        for (size_t k = 0; k + 1 < poly.size(); ++k) {
            const Pt& a = poly[k];
            const Pt& b = poly[k + 1];
            const double reach = width + aa;
            const int x0 = std::max(0, static_cast<int>((std::min(a.x, b.x) - reach) * side));
            const int x1 = std::min(side - 1, static_cast<int>((std::max(a.x, b.x) + reach) * side) + 1);
            const int y0 = std::max(0, static_cast<int>((std::min(a.y, b.y) - reach) * side));
            const int y1 = std::min(side - 1, static_cast<int>((std::max(a.y, b.y) + reach) * side) + 1);
            for (int py = y0; py <= y1; ++py) {
                for (int px = x0; px <= x1; ++px) {
                    const double cx = (px + 0.5) * inv, cy = (py + 0.5) * inv;
                    const double d = dist_to_segment(cx, cy, a, b);
                    const double v = intensity * std::clamp((width - d) / aa + 1.0, 0.0, 1.0);
                    float& cell = out[static_cast<int64_t>(py) * side + px];
                    cell = std::max(cell, static_cast<float>(v));
                }
            }
        }
    }
}

}  // namespace

DigitCorpus synth_digit_corpus(int train_n, int test_n, uint64_t seed) {
    if (train_n <= 0 || test_n < 0) throw InputError("corpus sizes must be positive");
    DigitCorpus corpus;
    corpus.count = train_n + test_n;
    corpus.train_count = train_n;
    corpus.pixels.resize(static_cast<size_t>(corpus.count) * corpus.side * corpus.side);
    corpus.digits.resize(static_cast<size_t>(corpus.count));
    for (int i = 0; i < corpus.count; ++i) {
        Rng rng(derive_seed(seed, "digit-corpus", static_cast<uint64_t>(i)));
        const int digit = static_cast<int>(rng.below(10));
        corpus.digits[static_cast<size_t>(i)] = static_cast<uint8_t>(digit);
        render_digit(digit, rng, corpus.side,
                     corpus.pixels.data() + static_cast<int64_t>(i) * corpus.side * corpus.side);
    }
    return corpus;
}

DigitCorpus load_idx_corpus(const std::string& dir) {
    int n1, r1, c1, n2, r2, c2;
    auto train_imgs = io::read_idx_images(dir + "/train-images-idx3-ubyte", n1, r1, c1);
    auto train_labels = io::read_idx_labels(dir + "/train-labels-idx1-ubyte");
    auto test_imgs = io::read_idx_images(dir + "/t10k-images-idx3-ubyte", n2, r2, c2);
    auto test_labels = io::read_idx_labels(dir + "/t10k-labels-idx1-ubyte");
    if (r1 != r2 || c1 != c2 || r1 != c1) throw IoError("idx corpus: inconsistent image sides");
    if (train_labels.size() != static_cast<size_t>(n1) || test_labels.size() != static_cast<size_t>(n2))
        throw IoError("idx corpus: image/label count mismatch");

    DigitCorpus corpus;
    corpus.side = r1;
    corpus.count = n1 + n2;
    corpus.train_count = n1;
    corpus.pixels.resize(static_cast<size_t>(corpus.count) * r1 * r1);
    corpus.digits.resize(static_cast<size_t>(corpus.count));
    const int64_t px = static_cast<int64_t>(r1) * r1;
    for (int i = 0; i < n1; ++i) {
        for (int64_t j = 0; j < px; ++j)
            corpus.pixels[static_cast<size_t>(i * px + j)] = train_imgs[static_cast<size_t>(i * px + j)] / 255.0f;
        corpus.digits[static_cast<size_t>(i)] = train_labels[static_cast<size_t>(i)];
    }
    for (int i = 0; i < n2; ++i) {
        for (int64_t j = 0; j < px; ++j)
            corpus.pixels[static_cast<size_t>((n1 + i) * px + j)] = test_imgs[static_cast<size_t>(i * px + j)] / 255.0f;
        corpus.digits[static_cast<size_t>(n1 + i)] = test_labels[static_cast<size_t>(i)];
    }
    return corpus;
}

void save_idx_corpus(const std::string& dir, const DigitCorpus& corpus) {
    fs::create_directories(dir);
    const int64_t px = static_cast<int64_t>(corpus.side) * corpus.side;
    auto to_u8 = [&](int begin, int end) {
        std::vector<uint8_t> out(static_cast<size_t>(end - begin) * px);
        for (int64_t i = 0; i < static_cast<int64_t>(end - begin) * px; ++i)
            out[static_cast<size_t>(i)] = static_cast<uint8_t>(
                std::lround(std::clamp(corpus.pixels[static_cast<size_t>(begin * px + i)], 0.0f, 1.0f) * 255.0f));
        return out;
    };
    io::write_idx_images(dir + "/train-images-idx3-ubyte", to_u8(0, corpus.train_count),
                         corpus.train_count, corpus.side, corpus.side);
    io::write_idx_labels(dir + "/train-labels-idx1-ubyte",
                         std::vector<uint8_t>(corpus.digits.begin(),
                                              corpus.digits.begin() + corpus.train_count));
    io::write_idx_images(dir + "/t10k-images-idx3-ubyte", to_u8(corpus.train_count, corpus.count),
                         corpus.count - corpus.train_count, corpus.side, corpus.side);
    io::write_idx_labels(dir + "/t10k-labels-idx1-ubyte",
                         std::vector<uint8_t>(corpus.digits.begin() + corpus.train_count,
                                              corpus.digits.end()));
}

// --------------------------------------------------------------- colormnist

Tensor colorize_digit(const float* gray, int side, bool red) {
    Tensor img({3, side, side});
    const int64_t px = static_cast<int64_t>(side) * side;
    float* ch = img.ptr() + (red ? 0 : 1) * px;
    std::memcpy(ch, gray, static_cast<size_t>(px) * 4);
    return img;
}

Tensor gray_digit_prior(const float* gray, int side) {
    Tensor img({3, side, side});
    const int64_t px = static_cast<int64_t>(side) * side;
    for (int c = 0; c < 3; ++c) std::memcpy(img.ptr() + c * px, gray, static_cast<size_t>(px) * 4);
    return img;
}

DatasetBundle generate_colormnist(const DigitCorpus& corpus, uint64_t seed,
                                  const ColorMnistOptions& opts) {
    if (corpus.count == 0 || corpus.train_count == 0 || corpus.count == corpus.train_count)
        throw GenerationError("colormnist: source corpus is empty on one side of its partition");
    const int corpus_test = corpus.count - corpus.train_count;
    const int train_n = opts.train_n < 0 ? corpus.train_count : opts.train_n;
    const int test_n = opts.test_n < 0 ? corpus_test : opts.test_n;
    const int prior_n = opts.prior_n < 0 ? train_n : opts.prior_n;
    if (train_n <= 0 || test_n <= 0 || prior_n <= 0)
        throw InputError("colormnist: split sizes must be positive");
    if (train_n > corpus.train_count || prior_n > corpus.train_count || test_n > corpus_test)
        throw GenerationError("colormnist: requested more records than the corpus partition holds");

    // seeded subset of the canonical partition; train and prior share it so
    // the prior set is the sans-color rendering of the train inputs
    std::vector<int> train_idx(static_cast<size_t>(corpus.train_count));
    std::iota(train_idx.begin(), train_idx.end(), 0);
    Rng perm_rng(derive_seed(seed, "colormnist/train-subset"));
    perm_rng.shuffle(train_idx.begin(), train_idx.end());
    std::vector<int> test_idx(static_cast<size_t>(corpus_test));
    std::iota(test_idx.begin(), test_idx.end(), corpus.train_count);
    Rng perm_rng2(derive_seed(seed, "colormnist/test-subset"));
    perm_rng2.shuffle(test_idx.begin(), test_idx.end());

    DatasetBundle bundle;
    bundle.class_count = 2;
    bundle.group_ids = {0, 1};  // green=0, red=1
    bundle.group_count = 2;

    bundle.train.resize(static_cast<size_t>(train_n));
    for (int i = 0; i < train_n; ++i) {
        Rng rng(derive_seed(seed, "colormnist/train", static_cast<uint64_t>(i)));
        const int src = train_idx[static_cast<size_t>(i)];
        const int y_tilde = corpus.digits[static_cast<size_t>(src)] > 4.5 ? 1 : 0;
        const int y = rng.bernoulli(kColorMnistLabelFlip) ? 1 - y_tilde : y_tilde;
        const int z = rng.bernoulli(kColorMnistColorFlip) ? 1 - y : y;
        auto& r = bundle.train[static_cast<size_t>(i)];
        r.image = colorize_digit(corpus.image(src), corpus.side, z == 1);
        r.label = y;
        r.sensitive = z;
    }

    bundle.test.resize(static_cast<size_t>(test_n));
    for (int i = 0; i < test_n; ++i) {
        Rng rng(derive_seed(seed, "colormnist/test", static_cast<uint64_t>(i)));
        const int src = test_idx[static_cast<size_t>(i)];
        const int y_tilde = corpus.digits[static_cast<size_t>(src)] > 4.5 ? 1 : 0;
        const int y = rng.bernoulli(kColorMnistLabelFlip) ? 1 - y_tilde : y_tilde;
        const int z = rng.bernoulli(0.5) ? 1 : 0;
        auto& r = bundle.test[static_cast<size_t>(i)];
        r.image = colorize_digit(corpus.image(src), corpus.side, z == 1);
        r.label = y;
        r.sensitive = z;
    }

    bundle.prior.resize(static_cast<size_t>(prior_n));
    for (int i = 0; i < prior_n; ++i)
        bundle.prior[static_cast<size_t>(i)] =
            gray_digit_prior(corpus.image(train_idx[static_cast<size_t>(i)]), corpus.side);

    bundle.provenance = {{"generator", "colormnist"},
                         {"seed", seed},
                         {"label_flip_prob", kColorMnistLabelFlip},
                         {"color_flip_prob", kColorMnistColorFlip},
                         {"counts", {{"train", train_n}, {"test", test_n}, {"prior", prior_n}}}};
    return bundle;
}

std::vector<Tensor> generate_colormnist_prior(const DigitCorpus& corpus, int n) {
    if (corpus.count == 0 || corpus.train_count == 0)
        throw GenerationError("colormnist prior: source corpus is empty");
    const int count = n < 0 ? corpus.train_count : n;
    if (count <= 0 || count > corpus.train_count)
        throw InputError("colormnist prior: bad requested size");
    std::vector<Tensor> out(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) out[static_cast<size_t>(i)] = gray_digit_prior(corpus.image(i), corpus.side);
    return out;
}

// ------------------------------------------------------------------ dsprite

void DspriteBiasSpec::validate() const {
    if (!(power_exponent > 0.0) || !(normal_std > 0.0) || !std::isfinite(normal_mean))
        throw InputError("dsprite bias spec: power_exponent and normal_std must be positive");
}

std::array<double, 6> scale_distribution(int shape, const DspriteBiasSpec& spec) {
    spec.validate();
    std::array<double, 6> p{};
    for (int i = 0; i < 6; ++i) {
        const double s = i + 1;
        switch (shape) {
            case kDspriteShapeHeart:
                p[static_cast<size_t>(i)] = std::pow(s, spec.power_exponent);
                break;
            case kDspriteShapeCircle: {
                const double d = (s - spec.normal_mean) / spec.normal_std;
                p[static_cast<size_t>(i)] = std::exp(-0.5 * d * d);
                break;
            }
            case kDspriteShapeSquare:
                p[static_cast<size_t>(i)] = std::pow(6.0 - s, spec.power_exponent);
                break;
            default:
                throw InputError("unknown shape id " + std::to_string(shape));
        }
    }
    const double z = p[0] + p[1] + p[2] + p[3] + p[4] + p[5];
    for (auto& v : p) v /= z;
    return p;
}

int dsprite_stratum(int orientation, int pos_x, int pos_y) {
    const uint64_t key = static_cast<uint64_t>(orientation) * 1048576ULL +
                         static_cast<uint64_t>(pos_x) * 1024ULL + static_cast<uint64_t>(pos_y);
    return static_cast<int>(splitmix64(key ^ 0x5f3c1a2b9d8e7f01ULL) & 1ULL);
}

// ---------------------------------------------------------- sprite sources

Tensor ProceduralSprites::image(int shape, int scale_index, int orientation, int pos_x,
                                int pos_y) const {
    if (shape < 0 || shape > 2) throw InputError("sprite shape id out of range");
    if (scale_index < 1 || scale_index > 6) throw InputError("sprite scale index out of range");
    if (orientation < 0 || orientation >= orientation_count() || pos_x < 0 ||
        pos_x >= position_count() || pos_y < 0 || pos_y >= position_count())
        throw InputError("sprite factor index out of range");

    const int side = 64;
    const double phys = 0.5 + 0.1 * (scale_index - 1);  // 6 values spaced over [0.5, 1]
    const double radius = phys * 11.0;
    const double theta = 2.0 * M_PI * orientation / orientation_count();
    const double cx = 15.5 + 33.0 * pos_x / (position_count() - 1);
    const double cy = 15.5 + 33.0 * pos_y / (position_count() - 1);
    const double ct = std::cos(theta), st = std::sin(theta);

    Tensor img({1, side, side});
    const double r_lim = radius * 1.45;  // covers the heart's widest extent
    const int x0 = std::max(0, static_cast<int>(cx - r_lim));
    const int x1 = std::min(side - 1, static_cast<int>(cx + r_lim) + 1);
    const int y0 = std::max(0, static_cast<int>(cy - r_lim));
    const int y1 = std::min(side - 1, static_cast<int>(cy + r_lim) + 1);

    for (int py = y0; py <= y1; ++py) {
        for (int px = x0; px <= x1; ++px) {
            const double dx = px + 0.5 - cx, dy = py + 0.5 - cy;
            // rotate into object frame, y up
            const double ux = (ct * dx + st * dy) / radius;
            const double uy = -(-st * dx + ct * dy) / radius;
            bool inside = false;
            switch (shape) {
                case kDspriteShapeSquare:
                    inside = std::max(std::abs(ux), std::abs(uy)) <= 0.82;
                    break;
                case kDspriteShapeCircle: {
                    const double ex = ux / 1.0, ey = uy / 0.76;
                    inside = ex * ex + ey * ey <= 1.0;
                    break;
                }
                case kDspriteShapeHeart: {
                    const double hx = ux / 0.80, hy = uy / 0.80 - 0.18;
                    const double q = hx * hx + hy * hy - 1.0;
                    inside = q * q * q - hx * hx * hy * hy * hy <= 0.0;
                    break;
                }
            }
            if (inside) img.data[static_cast<size_t>(py) * side + px] = 1.0f;
        }
    }
    return img;
}

ArchiveSprites::ArchiveSprites(const std::string& npz_path) {
    auto arrays = io::load_npz(npz_path);
    auto imgs_it = arrays.find("imgs");
    auto lat_it = arrays.find("latents_classes");
    if (imgs_it == arrays.end() || lat_it == arrays.end())
        throw IoError("dsprites archive: missing 'imgs' or 'latents_classes'");
    const auto& imgs = imgs_it->second;
    const auto lat = lat_it->second.as_i64();
    if (imgs.shape.size() != 3 || imgs.shape[1] != 64 || imgs.shape[2] != 64)
        throw IoError("dsprites archive: imgs must be [N,64,64]");
    const int64_t n = imgs.shape[0];
    if (static_cast<int64_t>(lat.size()) != n * 6)
        throw IoError("dsprites archive: latents_classes must be [N,6]");

    int shape_count = 0, scale_count = 0;
    for (int64_t i = 0; i < n; ++i) {
        shape_count = std::max(shape_count, static_cast<int>(lat[static_cast<size_t>(i * 6 + 1)]) + 1);
        scale_count = std::max(scale_count, static_cast<int>(lat[static_cast<size_t>(i * 6 + 2)]) + 1);
        orient_count_ = std::max(orient_count_, static_cast<int>(lat[static_cast<size_t>(i * 6 + 3)]) + 1);
        pos_count_ = std::max(pos_count_, static_cast<int>(lat[static_cast<size_t>(i * 6 + 4)]) + 1);
        pos_count_ = std::max(pos_count_, static_cast<int>(lat[static_cast<size_t>(i * 6 + 5)]) + 1);
    }
    if (shape_count != 3 || scale_count != 6)
        throw GenerationError("dsprites archive: need 3 shapes and 6 scales, found " +
                              std::to_string(shape_count) + "/" + std::to_string(scale_count));

    imgs_ = imgs.raw;
    const int64_t tuples = static_cast<int64_t>(3) * 6 * orient_count_ * pos_count_ * pos_count_;
    row_of_.assign(static_cast<size_t>(tuples), -1);
    for (int64_t i = 0; i < n; ++i) {
        const int sh = static_cast<int>(lat[static_cast<size_t>(i * 6 + 1)]);
        const int sc = static_cast<int>(lat[static_cast<size_t>(i * 6 + 2)]);
        const int ori = static_cast<int>(lat[static_cast<size_t>(i * 6 + 3)]);
        const int px = static_cast<int>(lat[static_cast<size_t>(i * 6 + 4)]);
        const int py = static_cast<int>(lat[static_cast<size_t>(i * 6 + 5)]);
        row_of_[static_cast<size_t>(tuple_index(sh, sc + 1, ori, px, py))] = static_cast<int32_t>(i);
    }
}

int64_t ArchiveSprites::tuple_index(int shape, int scale_index, int orientation, int pos_x,
                                    int pos_y) const {
    return ((((static_cast<int64_t>(shape) * 6 + (scale_index - 1)) * orient_count_ + orientation) *
                 pos_count_ +
             pos_x) *
                pos_count_ +
            pos_y);
}

Tensor ArchiveSprites::image(int shape, int scale_index, int orientation, int pos_x,
                             int pos_y) const {
    if (shape < 0 || shape > 2 || scale_index < 1 || scale_index > 6 || orientation < 0 ||
        orientation >= orient_count_ || pos_x < 0 || pos_x >= pos_count_ || pos_y < 0 ||
        pos_y >= pos_count_)
        throw InputError("sprite factor index out of range");
    const int32_t row = row_of_[static_cast<size_t>(tuple_index(shape, scale_index, orientation, pos_x, pos_y))];
    if (row < 0) throw GenerationError("dsprites archive: factor tuple missing from archive");
    Tensor img({1, 64, 64});
    const uint8_t* src = imgs_.data() + static_cast<int64_t>(row) * 64 * 64;
    for (int i = 0; i < 64 * 64; ++i) img.data[static_cast<size_t>(i)] = src[i] ? 1.0f : 0.0f;
    return img;
}

// ------------------------------------------------------------- generation

namespace {

int sample_scale(const std::array<double, 6>& dist, double u) {
    double acc = 0.0;
    for (int i = 0; i < 6; ++i) {
        acc += dist[static_cast<size_t>(i)];
        if (u < acc) return i + 1;
    }
    return 6;
}

struct FactorDraw {
    int orientation, pos_x, pos_y;
};

FactorDraw draw_factors_in_stratum(const SpriteSource& source, Rng& rng, int stratum) {
    for (;;) {
        const int ori = static_cast<int>(rng.below(static_cast<uint64_t>(source.orientation_count())));
        const int px = static_cast<int>(rng.below(static_cast<uint64_t>(source.position_count())));
        const int py = static_cast<int>(rng.below(static_cast<uint64_t>(source.position_count())));
        if (dsprite_stratum(ori, px, py) == stratum) return {ori, px, py};
    }
}

}  // namespace

DatasetBundle generate_biased_dsprite(const SpriteSource& source, int samples_per_class,
                                      const DspriteBiasSpec& spec, uint64_t seed,
                                      const DspriteOptions& opts) {
    if (samples_per_class <= 0) throw InputError("samples_per_class must be positive");
    spec.validate();
    const int test_per_class =
        opts.test_per_class < 0 ? std::max(500, samples_per_class / 3) : opts.test_per_class;
    if (test_per_class <= 0) throw InputError("test_per_class must be positive");
    const int train_n = samples_per_class * 3;
    const int prior_n = opts.prior_n < 0 ? train_n : opts.prior_n;
    if (prior_n <= 0) throw InputError("prior size must be positive");

    std::array<std::array<double, 6>, 3> dists;
    for (int s = 0; s < 3; ++s) dists[static_cast<size_t>(s)] = scale_distribution(s, spec);

    DatasetBundle bundle;
    bundle.class_count = 3;
    bundle.group_ids = {1, 2, 3, 4, 5, 6};
    bundle.group_count = 6;

    bundle.train.reserve(static_cast<size_t>(train_n));
    for (int shape = 0; shape < 3; ++shape) {
        for (int i = 0; i < samples_per_class; ++i) {
            Rng rng(derive_seed(seed, "dsprite/train",
                                static_cast<uint64_t>(shape) * 1000003ULL + static_cast<uint64_t>(i)));
            const int scale = sample_scale(dists[static_cast<size_t>(shape)], rng.uniform());
            const auto f = draw_factors_in_stratum(source, rng, 0);
            ExampleRecord r;
            r.image = source.image(shape, scale, f.orientation, f.pos_x, f.pos_y);
            r.label = shape;
            r.sensitive = scale;
            bundle.train.push_back(std::move(r));
        }
    }
    // deterministic interleave so batches are shape-mixed
    Rng shuffle_rng(derive_seed(seed, "dsprite/train-shuffle"));
    shuffle_rng.shuffle(bundle.train.begin(), bundle.train.end());

    bundle.test.reserve(static_cast<size_t>(test_per_class) * 3);
    for (int shape = 0; shape < 3; ++shape) {
        for (int i = 0; i < test_per_class; ++i) {
            Rng rng(derive_seed(seed, "dsprite/test",
                                static_cast<uint64_t>(shape) * 1000003ULL + static_cast<uint64_t>(i)));
            const int scale = static_cast<int>(rng.below(6)) + 1;  // uniform, shape-independent
            const auto f = draw_factors_in_stratum(source, rng, 1);
            ExampleRecord r;
            r.image = source.image(shape, scale, f.orientation, f.pos_x, f.pos_y);
            r.label = shape;
            r.sensitive = scale;
            bundle.test.push_back(std::move(r));
        }
    }
    Rng shuffle_rng2(derive_seed(seed, "dsprite/test-shuffle"));
    shuffle_rng2.shuffle(bundle.test.begin(), bundle.test.end());

    auto prior = generate_dsprite_prior(source, prior_n, derive_seed(seed, "dsprite/prior"));
    bundle.prior = std::move(prior);

    bundle.provenance = {{"generator", "dsprite"},
                         {"seed", seed},
                         {"samples_per_class", samples_per_class},
                         {"test_per_class", test_per_class},
                         {"power_exponent", spec.power_exponent},
                         {"normal_mean", spec.normal_mean},
                         {"normal_std", spec.normal_std},
                         {"prior_scale_index", kDspritePriorScaleIndex},
                         {"counts",
                          {{"train", train_n}, {"test", test_per_class * 3}, {"prior", prior_n}}}};
    return bundle;
}

std::vector<DspritePriorSample> generate_dsprite_prior_detailed(const SpriteSource& source, int n,
                                                                uint64_t seed) {
    if (n <= 0) throw InputError("dsprite prior: n must be positive");
    std::vector<DspritePriorSample> out;
    out.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, "dsprite/prior-sample", static_cast<uint64_t>(i)));
        DspritePriorSample s;
        s.shape = static_cast<int>(rng.below(3));
        s.scale_index = kDspritePriorScaleIndex;
        const auto f = draw_factors_in_stratum(source, rng, 0);
        s.orientation = f.orientation;
        s.pos_x = f.pos_x;
        s.pos_y = f.pos_y;
        s.image = source.image(s.shape, s.scale_index, s.orientation, s.pos_x, s.pos_y);
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<Tensor> generate_dsprite_prior(const SpriteSource& source, int n, uint64_t seed) {
    auto detailed = generate_dsprite_prior_detailed(source, n, seed);
    std::vector<Tensor> out;
    out.reserve(detailed.size());
    for (auto& d : detailed) out.push_back(std::move(d.image));
    return out;
}

}  // namespace fairprior
