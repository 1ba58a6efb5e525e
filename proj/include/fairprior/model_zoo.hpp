#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fairprior/nn.hpp"
#include "fairprior/tensor.hpp"

namespace fairprior {

using json = nlohmann::json;

// Encoder: conv(in->hidden, preserve dims) -> batchnorm -> relu ->
// conv(hidden->in, preserve dims) -> sigmoid. The representation keeps the
// input's image shape so it stays inspectable.
struct EncoderSpec {
    int in_channels = 3;
    int image_side = 28;
    int hidden_channels = 32;
    int kernel = 3;  // odd, dimension-preserving with pad = kernel/2
};

enum class HeadKind { critic, adversary, classifier, probe };

std::string head_kind_name(HeadKind k);
HeadKind head_kind_from_name(const std::string& name);

// critic/adversary/classifier: two strided conv layers + dense output over
// the image-shaped representation. The critic's output is a raw score.
// probe: 3 dense layers over the flattened representation.
struct HeadSpec {
    HeadKind kind = HeadKind::critic;
    int out_dim = 1;
    int hidden_channels = 32;  // conv heads
    int probe_hidden1 = 256;   // probe only
    int probe_hidden2 = 128;
};

// A built network plus everything needed to rebuild it deterministically.
struct Network {
    json spec;  // {"arch": "encoder"|"head", ...fields..., "init_seed": N}
    nn::Sequential net;

    Tensor forward(const Tensor& x, bool train) { return net.forward(x, train); }
};

Network build_encoder(const EncoderSpec& spec, uint64_t seed);
Network build_head(const HeadSpec& spec, const std::vector<int>& input_shape, uint64_t seed);
Network build_network_from_spec(const json& spec);

// ------------------------------------------------------------- checkpoints

struct NetEntry {
    std::string name;
    json spec;
    std::vector<float> params;
    std::vector<float> buffers;
};

struct OptEntry {
    std::string name;  // network the state belongs to
    std::string kind;  // adam | rmsprop
    std::vector<float> state;
};

struct RunProgress {
    int64_t step = 0;
    int64_t total_steps = 0;
    bool completed = true;
};

// Serialized parameters of every network in a training run plus provenance.
// stage is one of {prior, fair, baseline}.
struct ModelCheckpoint {
    std::string stage;
    uint64_t seed = 0;
    uint64_t config_fingerprint = 0;
    std::vector<NetEntry> nets;
    std::vector<OptEntry> opts;
    RunProgress progress;
    json provenance;

    const NetEntry* find_net(const std::string& name) const;
    const OptEntry* find_opt(const std::string& name) const;
    Network rebuild(const std::string& name) const;  // spec + params + buffers
    uint64_t content_fingerprint() const;            // hash over the manifest + blobs
};

void save_checkpoint(const std::string& path, const ModelCheckpoint& ckpt);
ModelCheckpoint load_checkpoint(const std::string& path);

NetEntry snapshot_net(const std::string& name, Network& network);

}  // namespace fairprior
