#include "fairprior/train_config.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <sstream>

#include "fairprior/errors.hpp"
#include "fairprior/io.hpp"
#include "fairprior/rng.hpp"

namespace fairprior {

namespace {

struct FieldSpec {
    std::function<std::string(const TrainConfig&)> get;
    // returns an error message or empty on success
    std::function<std::string(TrainConfig&, const std::string&)> set;
};

std::string parse_double(const std::string& key, const std::string& value, double& out,
                         double min_allowed) {
    try {
        size_t pos = 0;
        out = std::stod(value, &pos);
        if (pos != value.size()) return key + ": trailing characters in '" + value + "'";
    } catch (...) {
        return key + ": cannot parse '" + value + "' as a number";
    }
    if (!std::isfinite(out)) return key + ": must be finite";
    if (out < min_allowed)
        return key + ": value " + value + " below minimum " + std::to_string(min_allowed);
    return {};
}

std::string parse_int(const std::string& key, const std::string& value, int& out, int min_allowed) {
    try {
        size_t pos = 0;
        const long v = std::stol(value, &pos);
        if (pos != value.size()) return key + ": trailing characters in '" + value + "'";
        out = static_cast<int>(v);
    } catch (...) {
        return key + ": cannot parse '" + value + "' as an integer";
    }
    if (out < min_allowed)
        return key + ": value " + value + " below minimum " + std::to_string(min_allowed);
    return {};
}

std::string parse_u64(const std::string& key, const std::string& value, uint64_t& out) {
    try {
        size_t pos = 0;
        out = std::stoull(value, &pos);
        if (pos != value.size()) return key + ": trailing characters in '" + value + "'";
    } catch (...) {
        return key + ": cannot parse '" + value + "' as an unsigned integer";
    }
    return {};
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

const std::map<std::string, FieldSpec>& field_table() {
    static const std::map<std::string, FieldSpec> table = [] {
        std::map<std::string, FieldSpec> t;
        auto dbl = [&](const std::string& key, double TrainConfig::*member, double min_allowed) {
            t[key] = {[member](const TrainConfig& c) { return fmt(c.*member); },
                      [key, member, min_allowed](TrainConfig& c, const std::string& v) {
                          return parse_double(key, v, c.*member, min_allowed);
                      }};
        };
        auto weight = [&](const std::string& key, double LossWeights::*member) {
            t[key] = {[member](const TrainConfig& c) { return fmt(c.weights.*member); },
                      [key, member](TrainConfig& c, const std::string& v) {
                          return parse_double(key, v, c.weights.*member, 0.0);
                      }};
        };
        auto integer = [&](const std::string& key, int TrainConfig::*member, int min_allowed) {
            t[key] = {[member](const TrainConfig& c) { return std::to_string(c.*member); },
                      [key, member, min_allowed](TrainConfig& c, const std::string& v) {
                          return parse_int(key, v, c.*member, min_allowed);
                      }};
        };

        t["dataset"] = {[](const TrainConfig& c) { return c.dataset; },
                        [](TrainConfig& c, const std::string& v) -> std::string {
                            if (v != "colormnist" && v != "dsprite")
                                return "dataset: must be 'colormnist' or 'dsprite', got '" + v + "'";
                            c.dataset = v;
                            return {};
                        }};
        t["seed"] = {[](const TrainConfig& c) { return std::to_string(c.seed); },
                     [](TrainConfig& c, const std::string& v) { return parse_u64("seed", v, c.seed); }};

        weight("lambda_div", &LossWeights::lambda_div);
        weight("alpha_clf", &LossWeights::alpha_clf);
        weight("beta_adv", &LossWeights::beta_adv);
        weight("gamma_prior", &LossWeights::gamma_prior);

        // epochs may be 0: a degenerate schedule returns the initialized nets
        integer("stage1_epochs", &TrainConfig::stage1_epochs, 0);
        integer("stage2_epochs", &TrainConfig::stage2_epochs, 0);
        integer("batch_size", &TrainConfig::batch_size, 1);
        integer("critic_steps", &TrainConfig::critic_steps, 1);
        dbl("critic_clip", &TrainConfig::critic_clip, 1e-12);

        dbl("lr_encoder", &TrainConfig::lr_encoder, 0.0);
        dbl("lr_critic", &TrainConfig::lr_critic, 0.0);
        dbl("lr_adversary", &TrainConfig::lr_adversary, 0.0);
        dbl("lr_classifier", &TrainConfig::lr_classifier, 0.0);
        dbl("lr_probe", &TrainConfig::lr_probe, 0.0);

        integer("probe_epochs", &TrainConfig::probe_epochs, 0);
        integer("probe_batch", &TrainConfig::probe_batch, 1);
        integer("probe_hidden1", &TrainConfig::probe_hidden1, 1);
        integer("probe_hidden2", &TrainConfig::probe_hidden2, 1);

        integer("encoder_hidden", &TrainConfig::encoder_hidden, 1);
        integer("encoder_kernel", &TrainConfig::encoder_kernel, 1);
        integer("head_hidden", &TrainConfig::head_hidden, 1);

        integer("train_subset", &TrainConfig::train_subset, 0);
        integer("prior_subset", &TrainConfig::prior_subset, 0);
        return t;
    }();
    return table;
}

// key = value lines; '#' starts a comment; blank lines ignored.
std::vector<std::pair<std::string, std::string>> tokenize(const std::string& text,
                                                          std::vector<std::string>& errors) {
    std::vector<std::pair<std::string, std::string>> pairs;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            errors.push_back("line " + std::to_string(lineno) + ": expected 'key = value'");
            continue;
        }
        pairs.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return pairs;
}

std::vector<std::string> apply_text(const std::string& text, TrainConfig& config) {
    std::vector<std::string> errors;
    auto pairs = tokenize(text, errors);
    const auto& table = field_table();
    for (const auto& [key, value] : pairs) {
        auto it = table.find(key);
        if (it == table.end()) {
            errors.push_back("unknown key '" + key + "'");
            continue;
        }
        const std::string err = it->second.set(config, value);
        if (!err.empty()) errors.push_back(err);
    }
    if (config.encoder_kernel % 2 == 0)
        errors.push_back("encoder_kernel: must be odd to preserve image dimensions");
    return errors;
}

}  // namespace

std::vector<std::string> validate_train_config_text(const std::string& text) {
    TrainConfig scratch;
    return apply_text(text, scratch);
}

TrainConfig parse_train_config_text(const std::string& text) {
    TrainConfig config;
    auto errors = apply_text(text, config);
    if (!errors.empty()) {
        std::string msg = "invalid training config:";
        for (const auto& e : errors) msg += "\n  - " + e;
        throw ConfigError(msg);
    }
    return config;
}

TrainConfig load_train_config(const std::string& path) {
    return parse_train_config_text(io::read_text_file(path));
}

std::string train_config_text(const TrainConfig& config) {
    std::string out;
    for (const auto& [key, field] : field_table()) out += key + " = " + field.get(config) + "\n";
    return out;
}

uint64_t train_config_fingerprint(const TrainConfig& config) {
    return hash_str(train_config_text(config));
}

}  // namespace fairprior
