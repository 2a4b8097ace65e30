#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "turbid/common.hpp"

namespace turbid {

/// Flat `key = value` configuration. `#` starts a comment; later
/// duplicates override earlier ones.
class Config {
public:
    Config() = default;

    static Config parse(std::istream& in) {
        Config cfg;
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            const std::string t = trim(line);
            if (t.empty()) continue;
            const auto eq = t.find('=');
            if (eq == std::string::npos)
                throw DataError("config line " + std::to_string(lineno) + ": expected key = value");
            cfg.values_[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
        }
        return cfg;
    }

    static Config load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw DataError("cannot open config file: " + path.string());
        Config cfg = parse(in);
        cfg.base_dir_ = path.parent_path();
        return cfg;
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw DataError("missing config key: " + key);
        return it->second;
    }
    std::string get(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    long get_int(const std::string& key, long fallback) const {
        if (!has(key)) return fallback;
        try {
            return std::stol(get(key));
        } catch (const std::exception&) {
            throw DataError("config key " + key + " is not an integer: " + get(key));
        }
    }
    double get_real(const std::string& key, double fallback) const {
        if (!has(key)) return fallback;
        try {
            return std::stod(get(key));
        } catch (const std::exception&) {
            throw DataError("config key " + key + " is not a number: " + get(key));
        }
    }
    bool get_bool(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        const std::string v = get(key);
        if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
        if (v == "0" || v == "false" || v == "no" || v == "off") return false;
        throw DataError("config key " + key + " is not a boolean: " + v);
    }

    /// Comma-separated list value.
    std::vector<std::string> get_list(const std::string& key) const {
        std::vector<std::string> out;
        if (!has(key)) return out;
        std::stringstream ss(get(key));
        std::string item;
        while (std::getline(ss, item, ','))
            if (auto t = trim(item); !t.empty()) out.push_back(t);
        return out;
    }

    /// Resolves a path-valued key relative to the config file's directory.
    std::filesystem::path get_path(const std::string& key) const { return resolve(get(key)); }
    std::filesystem::path get_path(const std::string& key, const std::string& fallback) const {
        return resolve(get(key, fallback));
    }
    std::filesystem::path resolve(const std::filesystem::path& p) const {
        return p.is_absolute() ? p : base_dir_ / p;
    }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    const std::map<std::string, std::string>& values() const { return values_; }
    const std::filesystem::path& base_dir() const { return base_dir_; }

    void set_base_dir(std::filesystem::path dir) { base_dir_ = std::move(dir); }
    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return {};
        const auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

private:
    std::map<std::string, std::string> values_;
    std::filesystem::path base_dir_;
};

} // namespace turbid
