// config.hpp - flat key-value config files.
//
// Format: one `key = value` per line, '#' starts a comment, blank lines
// ignored. Values keep their raw text; typed accessors parse on demand.
// Every file must carry `config_version = 1`. Reads are tracked so callers
// can reject misspelled keys after pulling everything they understand.
#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lesionuq/errors.hpp"
#include "lesionuq/phantom.hpp"
#include "lesionuq/toynet.hpp"
#include "lesionuq/uvol.hpp"

namespace lesionuq {

inline constexpr int kConfigVersion = 1;

class Config {
public:
    static Config parse(const std::string& text, const std::string& context = "config") {
        Config cfg;
        cfg.context_ = context;
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const std::string trimmed = trim(line);
            if (trimmed.empty()) continue;
            const auto eq = trimmed.find('=');
            if (eq == std::string::npos) {
                throw format_error(context + ":" + std::to_string(lineno) +
                                   ": expected `key = value`, got \"" + trimmed + "\"");
            }
            const std::string key = trim(trimmed.substr(0, eq));
            const std::string value = trim(trimmed.substr(eq + 1));
            if (key.empty()) {
                throw format_error(context + ":" + std::to_string(lineno) + ": empty key");
            }
            if (cfg.entries_.count(key) != 0) {
                throw format_error(context + ":" + std::to_string(lineno) + ": duplicate key \"" +
                                   key + "\"");
            }
            cfg.entries_[key] = value;
        }
        if (cfg.get_int("config_version", -1) != kConfigVersion) {
            throw format_error(context + ": missing or unsupported config_version (expected " +
                               std::to_string(kConfigVersion) + ")");
        }
        return cfg;
    }

    static Config load(const std::filesystem::path& path) {
        return parse(read_file_bytes(path), path.string());
    }

    bool has(const std::string& key) const { return entries_.count(key) != 0; }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        touched_.insert(key);
        const auto it = entries_.find(key);
        return it == entries_.end() ? fallback : it->second;
    }

    std::int64_t get_int(const std::string& key, std::int64_t fallback) const {
        touched_.insert(key);
        const auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        try {
            std::size_t used = 0;
            const std::int64_t v = std::stoll(it->second, &used);
            if (used != it->second.size()) throw std::invalid_argument("trailing junk");
            return v;
        } catch (const std::exception&) {
            throw format_error(context_ + ": key \"" + key + "\" is not an integer: \"" +
                               it->second + "\"");
        }
    }

    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
        touched_.insert(key);
        const auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        try {
            std::size_t used = 0;
            const std::uint64_t v = std::stoull(it->second, &used);
            if (used != it->second.size()) throw std::invalid_argument("trailing junk");
            return v;
        } catch (const std::exception&) {
            throw format_error(context_ + ": key \"" + key + "\" is not an unsigned integer: \"" +
                               it->second + "\"");
        }
    }

    double get_double(const std::string& key, double fallback) const {
        touched_.insert(key);
        const auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        try {
            std::size_t used = 0;
            const double v = std::stod(it->second, &used);
            if (used != it->second.size()) throw std::invalid_argument("trailing junk");
            return v;
        } catch (const std::exception&) {
            throw format_error(context_ + ": key \"" + key + "\" is not a number: \"" +
                               it->second + "\"");
        }
    }

    bool get_bool(const std::string& key, bool fallback) const {
        touched_.insert(key);
        const auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        if (it->second == "1" || it->second == "true") return true;
        if (it->second == "0" || it->second == "false") return false;
        throw format_error(context_ + ": key \"" + key + "\" is not a boolean: \"" + it->second +
                           "\"");
    }

    std::vector<double> get_doubles(const std::string& key,
                                    const std::vector<double>& fallback) const {
        touched_.insert(key);
        const auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        std::istringstream in(it->second);
        std::vector<double> out;
        std::string tok;
        while (in >> tok) {
            try {
                std::size_t used = 0;
                out.push_back(std::stod(tok, &used));
                if (used != tok.size()) throw std::invalid_argument("trailing junk");
            } catch (const std::exception&) {
                throw format_error(context_ + ": key \"" + key + "\" has a non-numeric entry \"" +
                                   tok + "\"");
            }
        }
        if (out.empty()) {
            throw format_error(context_ + ": key \"" + key + "\" is empty");
        }
        return out;
    }

    // Call after every known key has been read.
    void reject_unknown_keys() const {
        for (const auto& [key, value] : entries_) {
            if (key == "config_version") continue;
            if (touched_.count(key) == 0) {
                throw argument_error(context_ + ": unknown key \"" + key + "\"");
            }
        }
    }

    const std::map<std::string, std::string>& entries() const { return entries_; }

private:
    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return "";
        const auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

    std::string context_;
    std::map<std::string, std::string> entries_;
    mutable std::set<std::string> touched_;
};

namespace detail {

inline CountRange count_range_from(const Config& cfg, const std::string& key, CountRange fallback) {
    if (!cfg.has(key)) {
        (void)cfg.get_string(key, ""); // mark touched
        return fallback;
    }
    const std::vector<double> vals = cfg.get_doubles(key, {});
    if (vals.size() == 1) {
        return CountRange{static_cast<int>(vals[0]), static_cast<int>(vals[0])};
    }
    if (vals.size() != 2) {
        throw format_error("config key \"" + key + "\" wants one or two integers");
    }
    return CountRange{static_cast<int>(vals[0]), static_cast<int>(vals[1])};
}

inline BinNoiseProfile noise_from(const Config& cfg, const std::string& key,
                                  BinNoiseProfile fallback) {
    if (!cfg.has(key)) {
        (void)cfg.get_string(key, "");
        return fallback;
    }
    const std::vector<double> vals = cfg.get_doubles(key, {});
    if (vals.size() != 4) {
        throw format_error("config key \"" + key +
                           "\" wants four numbers: miss fp jitter disagreement");
    }
    return BinNoiseProfile{vals[0], vals[1], vals[2], vals[3]};
}

} // namespace detail

inline PhantomConfig phantom_config_from(const Config& cfg) {
    PhantomConfig p;
    const std::vector<double> dims =
        cfg.get_doubles("dims", {static_cast<double>(p.dims.nx), static_cast<double>(p.dims.ny),
                                 static_cast<double>(p.dims.nz)});
    if (dims.size() != 3) throw format_error("config key \"dims\" wants three integers");
    p.dims = Dims{static_cast<std::uint32_t>(dims[0]), static_cast<std::uint32_t>(dims[1]),
                  static_cast<std::uint32_t>(dims[2])};
    p.t_samples = static_cast<int>(cfg.get_int("t_samples", p.t_samples));
    p.with_variance = cfg.get_bool("with_variance", p.with_variance);
    p.seed = cfg.get_u64("seed", p.seed);
    p.small_fraction = cfg.get_double("small_fraction", p.small_fraction);
    p.small_count = detail::count_range_from(cfg, "small_count", p.small_count);
    p.medium_count = detail::count_range_from(cfg, "medium_count", p.medium_count);
    p.large_count = detail::count_range_from(cfg, "large_count", p.large_count);
    p.small = detail::noise_from(cfg, "small_noise", p.small);
    p.medium = detail::noise_from(cfg, "medium_noise", p.medium);
    p.large = detail::noise_from(cfg, "large_noise", p.large);
    p.validate();
    return p;
}

// Everything the toy-net pipeline needs in one bundle. The training
// defaults run longer and draw more MC samples than bare TrainConfig:
// the regional variance contrast emerges from slow second-order forces,
// so the full pipeline gives them room to act.
struct ToyRunConfig {
    int grid_n = 16;
    int patch_dim = 7;
    double flip_rate = 0.30;
    int hidden_dim = 16;
    double dropout_p = 0.5;
    std::uint64_t data_seed = 7;
    TrainConfig train{.t_train = 20, .steps = 2000};
    int t_predict = 10;
    std::uint64_t predict_seed = 11;
};

inline nlohmann::json to_json(const ToyRunConfig& t) {
    nlohmann::json j;
    j["grid_n"] = t.grid_n;
    j["patch_dim"] = t.patch_dim;
    j["flip_rate"] = t.flip_rate;
    j["hidden_dim"] = t.hidden_dim;
    j["dropout_p"] = t.dropout_p;
    j["data_seed"] = t.data_seed;
    j["t_train"] = t.train.t_train;
    j["learning_rate"] = t.train.learning_rate;
    j["steps"] = t.train.steps;
    j["class_weight"] = t.train.class_weight;
    j["seed"] = t.train.seed;
    j["t_predict"] = t.t_predict;
    j["predict_seed"] = t.predict_seed;
    return j;
}

inline ToyRunConfig toy_config_from(const Config& cfg) {
    ToyRunConfig t;
    t.grid_n = static_cast<int>(cfg.get_int("grid_n", t.grid_n));
    t.patch_dim = static_cast<int>(cfg.get_int("patch_dim", t.patch_dim));
    t.flip_rate = cfg.get_double("flip_rate", t.flip_rate);
    t.hidden_dim = static_cast<int>(cfg.get_int("hidden_dim", t.hidden_dim));
    t.dropout_p = cfg.get_double("dropout_p", t.dropout_p);
    t.data_seed = cfg.get_u64("data_seed", t.data_seed);
    t.train.t_train = static_cast<int>(cfg.get_int("t_train", t.train.t_train));
    t.train.learning_rate = cfg.get_double("learning_rate", t.train.learning_rate);
    t.train.steps = static_cast<int>(cfg.get_int("steps", t.train.steps));
    t.train.class_weight = cfg.get_double("class_weight", t.train.class_weight);
    t.train.seed = cfg.get_u64("seed", t.train.seed);
    t.t_predict = static_cast<int>(cfg.get_int("t_predict", t.t_predict));
    t.predict_seed = cfg.get_u64("predict_seed", t.predict_seed);
    return t;
}

} // namespace lesionuq
