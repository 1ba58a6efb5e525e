#pragma once

#include <span>
#include <vector>

#include "fairprior/tensor.hpp"

namespace fairprior {

// Loss-term weights for the two training stages. All must be finite and
// nonnegative; gamma_prior keeps the representation close to the prior
// distribution during fairness fine-tuning.
struct LossWeights {
    double lambda_div = 1.0;
    double alpha_clf = 1.0;
    double beta_adv = 1.0;
    double gamma_prior = 0.1;

    void validate() const;
};

// Wasserstein objective: mean critic score on prior images minus mean score
// on encoded images. The critic ascends this, the encoder descends it.
double prior_loss(std::span<const float> critic_scores_on_prior,
                  std::span<const float> critic_scores_on_encoded);

// d prior_loss / d encoded_score_i = -1/n_encoded (constant); exposed for the
// trainer so the sign convention lives in one place.
double prior_loss_grad_wrt_encoded(size_t n_encoded);

// Pairwise output-spread over input-spread ratio; the mode-collapse
// regularizer. Mean over unordered distinct pairs of
// ||f(u)-f(v)|| / (||u-v|| + eps); pairs with identical inputs are skipped.
double diversity_loss(const Tensor& inputs, const Tensor& encodings);

// Accumulates d diversity / d encodings, scaled by `weight`, into grad
// (grad must have the encodings' shape). Returns the loss value.
double diversity_loss_backward(const Tensor& inputs, const Tensor& encodings, double weight,
                               Tensor& grad);

// Mean cross-entropy over softmax logits [N, class_count].
double classification_loss(const Tensor& logits, std::span<const int> labels);

// Accumulates weight * dL/dlogits into grad; returns the loss.
double classification_loss_backward(const Tensor& logits, std::span<const int> labels,
                                    double weight, Tensor& grad);

// Group-normalized softmax agreement: mean over groups present in the batch
// of the within-group mean probability assigned to the true group. The
// adversary ascends this; the encoder descends it. Value lies in (0,1).
double adversary_loss(const Tensor& adv_logits, std::span<const int> sensitive, int group_count);

double adversary_loss_backward(const Tensor& adv_logits, std::span<const int> sensitive,
                               int group_count, double weight, Tensor& grad);

// Stage-1 scalar the encoder minimizes: prior - lambda * diversity.
double stage1_total(double prior_loss_value, double diversity_value, const LossWeights& weights);

// Stage-2 scalar the encoder/classifier side minimizes:
// alpha*clf + beta*adv + gamma*prior.
double stage2_total(double clf_value, double adv_value, double prior_value,
                    const LossWeights& weights);

// Softmax over the last dimension of [N, C]; shared by losses and probes.
Tensor softmax_rows(const Tensor& logits);

constexpr double kDiversityEps = 1e-8;

}  // namespace fairprior
