#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "curvinit/errors.hpp"
#include "curvinit/format.hpp"

namespace curvinit {

/// Experiment configuration: `key=value` lines, `#` starts a comment, blank
/// lines ignored. Keys outside the known set are rejected.
class Config {
private:
    template <class F>
    static auto convert_item(const std::string& key, const std::string& item, F f) {
        try {
            return f(item);
        } catch (const InvalidInput&) {
            throw ConfigError("key '" + key + "': cannot parse '" + item + "'");
        }
    }

    template <class F>
    auto convert(const std::string& key, F f) const {
        return convert_item(key, str(key, ""), f);
    }

public:
    static const std::set<std::string>& known_keys() {
        static const std::set<std::string> keys = {
            "seed",          "dataset",       "mnist_images",  "mnist_labels",   "mnist_limit",
            "input_scale",   "samples",       "classes",       "layers",         "act",
            "output_act",    "loss",          "scheme",        "relu_correct",   "dropout_correct",
            "probes",        "batch_size",    "epochs",        "lr",             "stds",
            "scales",        "target",        "tol",           "max_bisect",     "layer",
            "seeds",         "inits",         "permutations",  "statistic",      "output_component",
            "second_output_component",        "jacobian_layer", "jacobian_row",  "jacobian_col",
            "weight_jacobian", "point",       "point_target",  "point_index",  "eigen_layers",   "eigen_samples",
        };
        return keys;
    }

    Config() = default;

    static Config parse(std::istream& is, std::filesystem::path base_dir = {}) {
        Config c;
        c.base_dir_ = std::move(base_dir);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(is, line)) {
            ++line_no;
            if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            line = trim(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key=value");
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (!known_keys().count(key)) throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
            if (c.values_.count(key)) throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
            c.values_[key] = value;
        }
        return c;
    }

    static Config parse_string(const std::string& text) {
        std::istringstream is(text);
        return parse(is);
    }

    static Config load(const std::filesystem::path& path) {
        std::ifstream is(path);
        if (!is) throw ConfigError("cannot open config file " + path.string());
        return parse(is, path.parent_path());
    }

    void set(const std::string& key, const std::string& value) {
        if (!known_keys().count(key)) throw ConfigError("unknown key '" + key + "'");
        values_[key] = value;
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string str(const std::string& key, const std::string& fallback) const {
        const auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    /// A path value, resolved against the config file's directory when relative.
    std::string path(const std::string& key, const std::string& fallback) const {
        std::filesystem::path p = str(key, fallback);
        if (p.is_relative() && !base_dir_.empty()) p = base_dir_ / p;
        return p.string();
    }

    double real(const std::string& key, double fallback) const {
        return has(key) ? convert(key, [](const std::string& s) { return parse_double(s); }) : fallback;
    }

    std::uint64_t integer(const std::string& key, std::uint64_t fallback) const {
        return has(key) ? convert(key, [](const std::string& s) { return parse_uint(s); }) : fallback;
    }

    bool flag(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        const std::string v = str(key, "");
        if (v == "true" || v == "1" || v == "yes") return true;
        if (v == "false" || v == "0" || v == "no") return false;
        throw ConfigError("key '" + key + "': expected a boolean, got '" + v + "'");
    }

    std::vector<double> reals(const std::string& key, const std::vector<double>& fallback) const {
        if (!has(key)) return fallback;
        std::vector<double> out;
        for (const auto& item : split(str(key, ""))) out.push_back(convert_item(key, item, [](const std::string& s) { return parse_double(s); }));
        return out;
    }

    std::vector<std::size_t> integers(const std::string& key, const std::vector<std::size_t>& fallback) const {
        if (!has(key)) return fallback;
        std::vector<std::size_t> out;
        for (const auto& item : split(str(key, "")))
            out.push_back(static_cast<std::size_t>(convert_item(key, item, [](const std::string& s) { return parse_uint(s); })));
        return out;
    }

    static std::vector<std::string> split(const std::string& text, char sep = ',') {
        std::vector<std::string> out;
        std::stringstream ss(text);
        std::string item;
        while (std::getline(ss, item, sep)) {
            item = trim(item);
            if (!item.empty()) out.push_back(item);
        }
        return out;
    }

private:
    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return {};
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    }

    std::map<std::string, std::string> values_;
    std::filesystem::path base_dir_;
};

}  // namespace curvinit
