#include "fairprior/model_zoo.hpp"

#include <zlib.h>

#include <cstring>

#include "fairprior/errors.hpp"
#include "fairprior/io.hpp"
#include "fairprior/rng.hpp"

namespace fairprior {

std::string head_kind_name(HeadKind k) {
    switch (k) {
        case HeadKind::critic: return "critic";
        case HeadKind::adversary: return "adversary";
        case HeadKind::classifier: return "classifier";
        case HeadKind::probe: return "probe";
    }
    throw ConfigError("unknown head kind");
}

HeadKind head_kind_from_name(const std::string& name) {
    if (name == "critic") return HeadKind::critic;
    if (name == "adversary") return HeadKind::adversary;
    if (name == "classifier") return HeadKind::classifier;
    if (name == "probe") return HeadKind::probe;
    throw ConfigError("unknown head kind: " + name);
}

Network build_encoder(const EncoderSpec& spec, uint64_t seed) {
    if (spec.in_channels <= 0 || spec.image_side <= 0 || spec.hidden_channels <= 0)
        throw ConfigError("encoder spec: non-positive dimension");
    if (spec.kernel <= 0 || spec.kernel % 2 == 0)
        throw ConfigError("encoder spec: kernel must be odd to preserve dimensions");

    Rng rng(derive_seed(seed, "encoder-init"));
    const int pad = spec.kernel / 2;
    Network out;
    out.net.add(std::make_unique<nn::Conv2d>(spec.in_channels, spec.hidden_channels, spec.kernel,
                                             1, pad, rng));
    out.net.add(std::make_unique<nn::BatchNorm2d>(spec.hidden_channels));
    out.net.add(std::make_unique<nn::ReLU>());
    out.net.add(std::make_unique<nn::Conv2d>(spec.hidden_channels, spec.in_channels, spec.kernel,
                                             1, pad, rng));
    out.net.add(std::make_unique<nn::Sigmoid>());
    out.spec = {{"arch", "encoder"},
                {"in_channels", spec.in_channels},
                {"image_side", spec.image_side},
                {"hidden_channels", spec.hidden_channels},
                {"kernel", spec.kernel},
                {"init_seed", seed}};
    return out;
}

Network build_head(const HeadSpec& spec, const std::vector<int>& input_shape, uint64_t seed) {
    if (spec.out_dim <= 0) throw ConfigError("head spec: out_dim must be positive");
    if (input_shape.size() != 3) throw ConfigError("head spec: input shape must be {C,H,W}");
    const int c = input_shape[0], h = input_shape[1], w = input_shape[2];
    if (c <= 0 || h <= 0 || w <= 0) throw ConfigError("head spec: non-positive input shape");

    Rng rng(derive_seed(seed, "head-init/" + head_kind_name(spec.kind)));
    Network out;
    if (spec.kind == HeadKind::probe) {
        const int in_dim = c * h * w;
        out.net.add(std::make_unique<nn::Flatten>());
        out.net.add(std::make_unique<nn::Dense>(in_dim, spec.probe_hidden1, rng));
        out.net.add(std::make_unique<nn::ReLU>());
        out.net.add(std::make_unique<nn::Dense>(spec.probe_hidden1, spec.probe_hidden2, rng));
        out.net.add(std::make_unique<nn::ReLU>());
        out.net.add(std::make_unique<nn::Dense>(spec.probe_hidden2, spec.out_dim, rng));
    } else {
        if (spec.hidden_channels <= 0) throw ConfigError("head spec: non-positive hidden channels");
        const int c1 = spec.hidden_channels, c2 = 2 * spec.hidden_channels;
        auto down = [](int side) { return (side + 2 - 3) / 2 + 1; };
        const int h2 = down(down(h)), w2 = down(down(w));
        out.net.add(std::make_unique<nn::Conv2d>(c, c1, 3, 2, 1, rng));
        out.net.add(std::make_unique<nn::LeakyReLU>(0.2f));
        out.net.add(std::make_unique<nn::Conv2d>(c1, c2, 3, 2, 1, rng));
        out.net.add(std::make_unique<nn::LeakyReLU>(0.2f));
        out.net.add(std::make_unique<nn::Flatten>());
        // final dense layer is linear: the critic emits an unbounded score,
        // the others emit logits
        out.net.add(std::make_unique<nn::Dense>(c2 * h2 * w2, spec.out_dim, rng));
    }
    out.spec = {{"arch", "head"},
                {"kind", head_kind_name(spec.kind)},
                {"out_dim", spec.out_dim},
                {"hidden_channels", spec.hidden_channels},
                {"probe_hidden1", spec.probe_hidden1},
                {"probe_hidden2", spec.probe_hidden2},
                {"input_shape", input_shape},
                {"init_seed", seed}};
    return out;
}

Network build_network_from_spec(const json& spec) {
    const std::string arch = spec.at("arch").get<std::string>();
    const uint64_t seed = spec.at("init_seed").get<uint64_t>();
    if (arch == "encoder") {
        EncoderSpec e;
        e.in_channels = spec.at("in_channels").get<int>();
        e.image_side = spec.at("image_side").get<int>();
        e.hidden_channels = spec.at("hidden_channels").get<int>();
        e.kernel = spec.at("kernel").get<int>();
        return build_encoder(e, seed);
    }
    if (arch == "head") {
        HeadSpec h;
        h.kind = head_kind_from_name(spec.at("kind").get<std::string>());
        h.out_dim = spec.at("out_dim").get<int>();
        h.hidden_channels = spec.at("hidden_channels").get<int>();
        h.probe_hidden1 = spec.at("probe_hidden1").get<int>();
        h.probe_hidden2 = spec.at("probe_hidden2").get<int>();
        return build_head(h, spec.at("input_shape").get<std::vector<int>>(), seed);
    }
    throw CompatibilityError("unknown network arch in checkpoint: " + arch);
}

// ------------------------------------------------------------- checkpoints

const NetEntry* ModelCheckpoint::find_net(const std::string& name) const {
    for (const auto& n : nets)
        if (n.name == name) return &n;
    return nullptr;
}

const OptEntry* ModelCheckpoint::find_opt(const std::string& name) const {
    for (const auto& o : opts)
        if (o.name == name) return &o;
    return nullptr;
}

Network ModelCheckpoint::rebuild(const std::string& name) const {
    const NetEntry* entry = find_net(name);
    if (!entry) throw CompatibilityError("checkpoint has no network named '" + name + "'");
    Network net = build_network_from_spec(entry->spec);
    net.net.set_flat_params(entry->params);
    net.net.set_flat_buffers(entry->buffers);
    return net;
}

NetEntry snapshot_net(const std::string& name, Network& network) {
    NetEntry e;
    e.name = name;
    e.spec = network.spec;
    e.params = network.net.flat_params();
    e.buffers = network.net.flat_buffers();
    return e;
}

namespace {

constexpr char kCkptMagic[8] = {'F', 'P', 'C', 'K', 'P', 'T', '1', '\0'};

void append_u64(std::vector<uint8_t>& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

uint64_t take_u64(const uint8_t* p) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
    return v;
}

void append_floats(std::vector<uint8_t>& out, const std::vector<float>& v) {
    const size_t off = out.size();
    out.resize(off + v.size() * 4);
    std::memcpy(out.data() + off, v.data(), v.size() * 4);
}

}  // namespace

uint64_t ModelCheckpoint::content_fingerprint() const {
    uint64_t h = hash_str(stage);
    h = hash_combine(h, seed);
    h = hash_combine(h, config_fingerprint);
    for (const auto& n : nets) {
        h = hash_combine(h, hash_str(n.name));
        for (float f : n.params) {
            uint32_t bits;
            std::memcpy(&bits, &f, 4);
            h = hash_combine(h, bits);
        }
    }
    return h;
}

void save_checkpoint(const std::string& path, const ModelCheckpoint& ckpt) {
    json manifest;
    manifest["format"] = "fairprior-checkpoint-v1";
    manifest["stage"] = ckpt.stage;
    manifest["seed"] = ckpt.seed;
    manifest["config_fingerprint"] = ckpt.config_fingerprint;
    manifest["progress"] = {{"step", ckpt.progress.step},
                            {"total_steps", ckpt.progress.total_steps},
                            {"completed", ckpt.progress.completed}};
    manifest["provenance"] = ckpt.provenance;
    json nets = json::array();
    for (const auto& n : ckpt.nets)
        nets.push_back({{"name", n.name},
                        {"spec", n.spec},
                        {"param_count", n.params.size()},
                        {"buffer_count", n.buffers.size()}});
    manifest["networks"] = nets;
    json opts = json::array();
    for (const auto& o : ckpt.opts)
        opts.push_back({{"name", o.name}, {"kind", o.kind}, {"state_count", o.state.size()}});
    manifest["optimizers"] = opts;

    const std::string mtext = manifest.dump();
    std::vector<uint8_t> out;
    out.insert(out.end(), kCkptMagic, kCkptMagic + 8);
    append_u64(out, mtext.size());
    out.insert(out.end(), mtext.begin(), mtext.end());
    for (const auto& n : ckpt.nets) {
        append_floats(out, n.params);
        append_floats(out, n.buffers);
    }
    for (const auto& o : ckpt.opts) append_floats(out, o.state);

    const uint32_t crc = static_cast<uint32_t>(crc32(0, out.data(), static_cast<uInt>(out.size())));
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((crc >> (8 * i)) & 0xff));
    io::write_file(path, out);
}

ModelCheckpoint load_checkpoint(const std::string& path) {
    auto bytes = io::read_file(path);
    if (bytes.size() < 8 + 8 + 4 || std::memcmp(bytes.data(), kCkptMagic, 8) != 0)
        throw IntegrityError("checkpoint: bad magic in " + path);

    uint32_t stored_crc = 0;
    for (int i = 0; i < 4; ++i)
        stored_crc |= static_cast<uint32_t>(bytes[bytes.size() - 4 + static_cast<size_t>(i)]) << (8 * i);
    const uint32_t actual_crc =
        static_cast<uint32_t>(crc32(0, bytes.data(), static_cast<uInt>(bytes.size() - 4)));
    if (stored_crc != actual_crc) throw IntegrityError("checkpoint: checksum mismatch in " + path);

    const uint64_t mlen = take_u64(bytes.data() + 8);
    if (16 + mlen > bytes.size() - 4) throw IntegrityError("checkpoint: manifest truncated");
    json manifest;
    try {
        manifest = json::parse(std::string(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(mlen)));
    } catch (const json::exception& e) {
        throw IntegrityError("checkpoint: manifest corrupt: " + std::string(e.what()));
    }

    ModelCheckpoint ckpt;
    ckpt.stage = manifest.at("stage").get<std::string>();
    ckpt.seed = manifest.at("seed").get<uint64_t>();
    ckpt.config_fingerprint = manifest.at("config_fingerprint").get<uint64_t>();
    ckpt.progress.step = manifest.at("progress").at("step").get<int64_t>();
    ckpt.progress.total_steps = manifest.at("progress").at("total_steps").get<int64_t>();
    ckpt.progress.completed = manifest.at("progress").at("completed").get<bool>();
    ckpt.provenance = manifest.at("provenance");

    size_t off = 16 + mlen;
    const size_t end = bytes.size() - 4;
    auto take_floats = [&](size_t count) {
        if (off + count * 4 > end) throw IntegrityError("checkpoint: data section truncated");
        std::vector<float> v(count);
        std::memcpy(v.data(), bytes.data() + off, count * 4);
        off += count * 4;
        return v;
    };
    for (const auto& n : manifest.at("networks")) {
        NetEntry e;
        e.name = n.at("name").get<std::string>();
        e.spec = n.at("spec");
        e.params = take_floats(n.at("param_count").get<size_t>());
        e.buffers = take_floats(n.at("buffer_count").get<size_t>());
        ckpt.nets.push_back(std::move(e));
    }
    for (const auto& o : manifest.at("optimizers")) {
        OptEntry e;
        e.name = o.at("name").get<std::string>();
        e.kind = o.at("kind").get<std::string>();
        e.state = take_floats(o.at("state_count").get<size_t>());
        ckpt.opts.push_back(std::move(e));
    }
    if (off != end) throw IntegrityError("checkpoint: trailing bytes");
    return ckpt;
}

}  // namespace fairprior
