#include "config.hpp"

#include <fstream>

#include "scbridge/errors.hpp"

namespace scbridge::cli {

using nlohmann::json;

namespace {

const std::map<std::string, json>& schema() {
    static const std::map<std::string, json> defaults = {
        {"seed", nullptr},
        {"out", nullptr},

        {"synth.n_genes", 200},
        {"synth.n_cells_per_condition", 125},
        {"synth.n_conditions", 4},
        {"synth.n_cell_types", 4},
        {"synth.cluster_count", 3},
        {"synth.shift_magnitude", 2.0},
        {"synth.sparsity", 0.1},
        {"synth.dosages", json::array()},

        {"data.path", nullptr},
        {"data.provenance", "detect"},
        {"data.hvg", 0},

        {"split.mode", "by_condition_group"},
        {"split.fraction", 0.3},
        {"split.keep_vocabulary_seen", true},
        {"split.seed", nullptr},

        {"train.epochs", 200},
        {"train.batch_size", 64},
        {"train.use_activation_model", true},
        {"train.ema_decay", 0.999},
        {"train.checkpoint_every", 0},

        {"optimizer.learning_rate", 1e-3},
        {"optimizer.beta1", 0.9},
        {"optimizer.beta2", 0.999},
        {"optimizer.epsilon", 1e-8},
        {"optimizer.weight_decay", 1e-2},

        {"bridge.horizon", 1.0},
        {"bridge.sigma", 0.2},
        {"bridge.steps", 50},

        {"arch.hidden_width", 256},
        {"arch.hidden_layers", 3},
        {"arch.residual_endpoint", true},
        {"arch.activation_skip", 3.0},

        {"pairing.mode", "ot"},
        {"pairing.extraction", "sample"},
        {"pairing.max_batch", 0},

        {"sinkhorn.epsilon", 0.05},
        {"sinkhorn.epsilon_mode", "relative"},
        {"sinkhorn.max_iters", 1000},
        {"sinkhorn.tolerance", 1e-6},
        {"sinkhorn.metric", "squared_euclidean"},

        {"model.path", nullptr},
        {"generate.controls", nullptr},
        {"generate.test", nullptr},
        {"generate.condition", nullptr},
        {"generate.count", 0},
        {"evaluate.test", nullptr},
        {"evaluate.train", nullptr},
        {"evaluate.self_test", false},
    };
    return defaults;
}

bool is_number(const json& v) { return v.is_number(); }

bool compatible(const json& expected, const json& value) {
    if (expected.is_null()) {
        return value.is_string() || value.is_number_unsigned() ||
               (value.is_number_integer() && value.get<std::int64_t>() >= 0);
    }
    if (expected.is_boolean()) {
        return value.is_boolean();
    }
    if (expected.is_number_float()) {
        return is_number(value);
    }
    if (expected.is_number()) {
        return value.is_number_unsigned() || (value.is_number_integer() && value.get<std::int64_t>() >= 0);
    }
    if (expected.is_string()) {
        return value.is_string();
    }
    if (expected.is_array()) {
        if (!value.is_array()) {
            return false;
        }
        for (const auto& item : value) {
            if (!is_number(item)) {
                return false;
            }
        }
        return true;
    }
    return false;
}

}  // namespace

Config::Config() : values_(schema()) {}

void Config::set(const std::string& key, json value) {
    const auto it = schema().find(key);
    if (it == schema().end()) {
        throw UsageError("unknown configuration key '" + key + "'");
    }
    if (!compatible(it->second, value)) {
        throw UsageError("configuration key '" + key + "' has the wrong type: " + value.dump());
    }
    values_[key] = std::move(value);
}

void Config::set(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw UsageError("expected key=value, got '" + assignment + "'");
    }
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) {
        value = text;
    }
    // Allow seed=123 and path=42 style values to stay textual where a string is expected.
    const auto it = schema().find(key);
    if (it != schema().end() && it->second.is_string() && !value.is_string()) {
        value = text;
    }
    set(key, std::move(value));
}

void Config::merge_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open config '" + path.string() + "'");
    }
    const json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
        throw UsageError("config '" + path.string() + "' must be a JSON object of dotted keys");
    }
    for (const auto& [key, value] : doc.items()) {
        if (value.is_object()) {
            throw UsageError("config '" + path.string() + "': nested object under '" + key +
                             "', use dotted keys instead");
        }
        set(key, value);
    }
}

bool Config::has(const std::string& key) const {
    const auto it = values_.find(key);
    return it != values_.end() && !it->second.is_null();
}

const json& Config::require(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) {
        throw UsageError("unknown configuration key '" + key + "'");
    }
    if (it->second.is_null()) {
        throw UsageError("missing required setting '" + key + "'");
    }
    return it->second;
}

std::string Config::get_string(const std::string& key) const {
    const json& v = require(key);
    return v.is_string() ? v.get<std::string>() : v.dump();
}

double Config::get_double(const std::string& key) const { return require(key).get<double>(); }

std::uint64_t Config::get_uint(const std::string& key) const {
    const json& v = require(key);
    if (v.is_string()) {
        const std::string text = v.get<std::string>();
        std::size_t used = 0;
        std::uint64_t out = 0;
        try {
            out = std::stoull(text, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != text.size() || text.front() == '-') {
            throw UsageError("setting '" + key + "' must be a non-negative integer, got '" + text + "'");
        }
        return out;
    }
    return v.get<std::uint64_t>();
}

bool Config::get_bool(const std::string& key) const { return require(key).get<bool>(); }

std::vector<double> Config::get_doubles(const std::string& key) const {
    return require(key).get<std::vector<double>>();
}

nlohmann::ordered_json Config::dump() const {
    nlohmann::ordered_json out = nlohmann::ordered_json::object();
    for (const auto& [key, value] : values_) {
        out[key] = value;
    }
    return out;
}

}  // namespace scbridge::cli
