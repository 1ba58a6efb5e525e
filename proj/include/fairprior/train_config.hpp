#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fairprior/objectives.hpp"

namespace fairprior {

// Every knob of a training run. Serialized as a flat key=value document;
// unknown keys are a validation error so typos cannot silently fall back to
// defaults.
struct TrainConfig {
    std::string dataset = "colormnist";  // must match the bundle's generator
    uint64_t seed = 1;

    LossWeights weights;  // lambda_div / alpha_clf / beta_adv / gamma_prior

    int stage1_epochs = 5;
    int stage2_epochs = 5;
    int batch_size = 64;
    int critic_steps = 5;       // critic updates per encoder update
    double critic_clip = 0.01;  // Wasserstein critic weight bound

    double lr_encoder = 1e-3;
    double lr_critic = 5e-5;
    double lr_adversary = 1e-3;
    double lr_classifier = 1e-3;
    double lr_probe = 1e-3;

    int probe_epochs = 30;
    int probe_batch = 128;
    int probe_hidden1 = 256;
    int probe_hidden2 = 128;

    int encoder_hidden = 32;
    int encoder_kernel = 3;
    int head_hidden = 32;

    // Desk-scale subsampling of the bundle (0 = use everything).
    int train_subset = 0;
    int prior_subset = 0;
};

// All violations in the text, empty when valid. Never throws on content
// problems; file-level I/O failures surface as IoError elsewhere.
std::vector<std::string> validate_train_config_text(const std::string& text);

TrainConfig parse_train_config_text(const std::string& text);  // throws ConfigError
TrainConfig load_train_config(const std::string& path);

// Canonical listing of every field; fingerprints and shipped config files
// are derived from it.
std::string train_config_text(const TrainConfig& config);
uint64_t train_config_fingerprint(const TrainConfig& config);

}  // namespace fairprior
