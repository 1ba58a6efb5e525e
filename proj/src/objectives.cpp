#include "fairprior/objectives.hpp"

#include <algorithm>
#include <cmath>

#include "fairprior/errors.hpp"

namespace fairprior {

namespace {

void check_finite(std::span<const float> v, const char* what) {
    for (float x : v)
        if (!std::isfinite(x)) throw NumericError(std::string(what) + ": non-finite value");
}

}  // namespace

void LossWeights::validate() const {
    const double vals[] = {lambda_div, alpha_clf, beta_adv, gamma_prior};
    for (double v : vals)
        if (!std::isfinite(v) || v < 0.0)
            throw InputError("loss weights must be finite and nonnegative");
}

double prior_loss(std::span<const float> critic_scores_on_prior,
                  std::span<const float> critic_scores_on_encoded) {
    if (critic_scores_on_prior.empty() || critic_scores_on_encoded.empty())
        throw InputError("prior_loss: empty score batch");
    check_finite(critic_scores_on_prior, "prior_loss(prior scores)");
    check_finite(critic_scores_on_encoded, "prior_loss(encoded scores)");
    double a = 0.0, b = 0.0;
    for (float v : critic_scores_on_prior) a += v;
    for (float v : critic_scores_on_encoded) b += v;
    return a / static_cast<double>(critic_scores_on_prior.size()) -
           b / static_cast<double>(critic_scores_on_encoded.size());
}

double prior_loss_grad_wrt_encoded(size_t n_encoded) {
    if (n_encoded == 0) throw InputError("prior_loss: empty score batch");
    return -1.0 / static_cast<double>(n_encoded);
}

double diversity_loss(const Tensor& inputs, const Tensor& encodings) {
    Tensor unused;
    return diversity_loss_backward(inputs, encodings, 0.0, unused);
}

double diversity_loss_backward(const Tensor& inputs, const Tensor& encodings, double weight,
                               Tensor& grad) {
    if (inputs.rank() < 1 || encodings.rank() < 1 || inputs.dim(0) != encodings.dim(0))
        throw InputError("diversity_loss: misaligned batches");
    const int n = inputs.dim(0);
    if (n < 2) throw InputError("diversity_loss: batch size must be >= 2");
    const int64_t din = inputs.numel() / n;
    const int64_t denc = encodings.numel() / n;
    const bool want_grad = weight != 0.0;
    if (want_grad && !grad.same_shape(encodings))
        throw InputError("diversity_loss: gradient tensor shape mismatch");

    // first pass: pair ratios
    struct Pair {
        int i, j;
        double enc_dist, ratio_denom;
    };
    std::vector<Pair> pairs;
    pairs.reserve(static_cast<size_t>(n) * (n - 1) / 2);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const double dx = l2_distance(inputs.ptr() + i * din, inputs.ptr() + j * din, din);
            if (dx == 0.0) continue;  // identical inputs carry no diversity signal
            const double df =
                l2_distance(encodings.ptr() + i * denc, encodings.ptr() + j * denc, denc);
            const double denom = dx + kDiversityEps;
            total += df / denom;
            pairs.push_back({i, j, df, denom});
        }
    }
    if (pairs.empty()) return 0.0;
    const double value = total / static_cast<double>(pairs.size());
    if (!std::isfinite(value)) throw NumericError("diversity_loss: non-finite value");

    if (want_grad) {
        const double inv_count = 1.0 / static_cast<double>(pairs.size());
        for (const auto& p : pairs) {
            if (p.enc_dist == 0.0) continue;  // subgradient 0 at coincident encodings
            const double c = weight * inv_count / (p.enc_dist * p.ratio_denom);
            const float* fi = encodings.ptr() + p.i * denc;
            const float* fj = encodings.ptr() + p.j * denc;
            float* gi = grad.ptr() + p.i * denc;
            float* gj = grad.ptr() + p.j * denc;
            for (int64_t k = 0; k < denc; ++k) {
                const double d = c * (static_cast<double>(fi[k]) - fj[k]);
                gi[k] += static_cast<float>(d);
                gj[k] -= static_cast<float>(d);
            }
        }
    }
    return value;
}

Tensor softmax_rows(const Tensor& logits) {
    if (logits.rank() != 2) throw InputError("softmax: expected [N,C] logits");
    const int n = logits.dim(0), c = logits.dim(1);
    Tensor p(logits.shape);
    for (int i = 0; i < n; ++i) {
        const float* l = logits.ptr() + static_cast<int64_t>(i) * c;
        float* q = p.ptr() + static_cast<int64_t>(i) * c;
        float mx = l[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, l[j]);
        double z = 0.0;
        for (int j = 0; j < c; ++j) z += std::exp(static_cast<double>(l[j]) - mx);
        for (int j = 0; j < c; ++j)
            q[j] = static_cast<float>(std::exp(static_cast<double>(l[j]) - mx) / z);
    }
    return p;
}

double classification_loss(const Tensor& logits, std::span<const int> labels) {
    Tensor unused;
    return classification_loss_backward(logits, labels, 0.0, unused);
}

double classification_loss_backward(const Tensor& logits, std::span<const int> labels,
                                    double weight, Tensor& grad) {
    if (logits.rank() != 2) throw InputError("classification_loss: expected [N,C] logits");
    const int n = logits.dim(0), c = logits.dim(1);
    if (static_cast<size_t>(n) != labels.size())
        throw InputError("classification_loss: labels/logits length mismatch");
    const bool want_grad = weight != 0.0;
    if (want_grad && !grad.same_shape(logits))
        throw InputError("classification_loss: gradient tensor shape mismatch");

    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        const int y = labels[static_cast<size_t>(i)];
        if (y < 0 || y >= c)
            throw InputError("classification_loss: label " + std::to_string(y) +
                             " outside vocabulary of size " + std::to_string(c));
        const float* l = logits.ptr() + static_cast<int64_t>(i) * c;
        float mx = l[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, l[j]);
        double z = 0.0;
        for (int j = 0; j < c; ++j) z += std::exp(static_cast<double>(l[j]) - mx);
        const double logz = std::log(z) + mx;
        total += logz - l[y];
        if (want_grad) {
            float* g = grad.ptr() + static_cast<int64_t>(i) * c;
            for (int j = 0; j < c; ++j) {
                const double p = std::exp(static_cast<double>(l[j]) - logz);
                g[j] += static_cast<float>(weight * (p - (j == y ? 1.0 : 0.0)) / n);
            }
        }
    }
    const double value = total / n;
    if (!std::isfinite(value)) throw NumericError("classification_loss: non-finite value");
    return value;
}

double adversary_loss(const Tensor& adv_logits, std::span<const int> sensitive, int group_count) {
    Tensor unused;
    return adversary_loss_backward(adv_logits, sensitive, group_count, 0.0, unused);
}

double adversary_loss_backward(const Tensor& adv_logits, std::span<const int> sensitive,
                               int group_count, double weight, Tensor& grad) {
    if (adv_logits.rank() != 2 || adv_logits.dim(1) != group_count)
        throw InputError("adversary_loss: expected [N,group_count] outputs");
    const int n = adv_logits.dim(0);
    if (static_cast<size_t>(n) != sensitive.size() || n == 0)
        throw InputError("adversary_loss: sensitive/outputs length mismatch");
    const bool want_grad = weight != 0.0;
    if (want_grad && !grad.same_shape(adv_logits))
        throw InputError("adversary_loss: gradient tensor shape mismatch");

    std::vector<int> group_sizes(static_cast<size_t>(group_count), 0);
    for (int i = 0; i < n; ++i) {
        const int a = sensitive[static_cast<size_t>(i)];
        if (a < 0 || a >= group_count)
            throw InputError("adversary_loss: group id " + std::to_string(a) +
                             " outside vocabulary of size " + std::to_string(group_count));
        ++group_sizes[static_cast<size_t>(a)];
    }
    int present = 0;
    for (int g : group_sizes) present += g > 0 ? 1 : 0;

    Tensor probs = softmax_rows(adv_logits);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        const int a = sensitive[static_cast<size_t>(i)];
        total += probs.data[static_cast<size_t>(i) * group_count + static_cast<size_t>(a)] /
                 group_sizes[static_cast<size_t>(a)];
    }
    const double value = total / present;
    if (!std::isfinite(value)) throw NumericError("adversary_loss: non-finite value");

    if (want_grad) {
        for (int i = 0; i < n; ++i) {
            const int a = sensitive[static_cast<size_t>(i)];
            const double w = weight / (static_cast<double>(present) * group_sizes[static_cast<size_t>(a)]);
            const float* p = probs.ptr() + static_cast<int64_t>(i) * group_count;
            float* g = grad.ptr() + static_cast<int64_t>(i) * group_count;
            const double pa = p[a];
            for (int j = 0; j < group_count; ++j) {
                const double dpa_dlj = pa * ((j == a ? 1.0 : 0.0) - p[j]);
                g[j] += static_cast<float>(w * dpa_dlj);
            }
        }
    }
    return value;
}

double stage1_total(double prior_loss_value, double diversity_value, const LossWeights& weights) {
    weights.validate();
    return prior_loss_value - weights.lambda_div * diversity_value;
}

double stage2_total(double clf_value, double adv_value, double prior_value,
                    const LossWeights& weights) {
    weights.validate();
    return weights.alpha_clf * clf_value + weights.beta_adv * adv_value +
           weights.gamma_prior * prior_value;
}

}  // namespace fairprior
