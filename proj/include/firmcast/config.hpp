#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "firmcast/error.hpp"
#include "firmcast/util.hpp"

namespace firmcast {

/// Plain-text key=value configuration with '#' comments. CLI flags override
/// file entries; the resolved map is written back into every run directory.
class KeyValueConfig {
public:
    KeyValueConfig() = default;

    static KeyValueConfig from_stream(std::istream& in) {
        KeyValueConfig cfg;
        std::string line;
        while (std::getline(in, line)) {
            const std::string_view sv = trim(line);
            if (sv.empty() || sv.front() == '#') continue;
            const auto eq = sv.find('=');
            if (eq == std::string_view::npos) throw ConfigError("config line without '=': " + std::string(sv));
            cfg.values_[std::string(trim(sv.substr(0, eq)))] = std::string(trim(sv.substr(eq + 1)));
        }
        return cfg;
    }

    static KeyValueConfig from_file(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file: " + path.string());
        return from_stream(in);
    }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double get_double(const std::string& key, double fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        const auto v = parse_double(it->second);
        if (!v) throw ConfigError("config value for " + key + " is not a number: " + it->second);
        return *v;
    }

    long long get_int(const std::string& key, long long fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        const auto v = parse_int(it->second);
        if (!v) throw ConfigError("config value for " + key + " is not an integer: " + it->second);
        return *v;
    }

    const std::map<std::string, std::string>& values() const { return values_; }

    void save(const std::filesystem::path& path) const {
        std::ofstream out(path);
        if (!out) throw DataError("cannot write config file: " + path.string());
        for (const auto& [k, v] : values_) out << k << " = " << v << "\n";
    }

private:
    std::map<std::string, std::string> values_;
};

} // namespace firmcast
