// Plain-text run configuration: UTF-8 `key = value` lines, `#` comments.
// Commands declare their allowed keys; anything else is rejected so a typo
// cannot silently fall back to a default.
#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <set>
#include <stdexcept>
#include <string>

#include "ssr/ssr1.hpp"

namespace ssr {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && (s[a] == ' ' || s[a] == '\t' || s[a] == '\r')) ++a;
    while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r')) --b;
    return s.substr(a, b - a);
}

}  // namespace detail

struct RunConfig {
    std::map<std::string, std::string> values;
    std::string source;  // path, for error messages

    bool has(const std::string& key) const { return values.count(key) != 0; }

    std::string get_str(const std::string& key) const {
        const auto it = values.find(key);
        if (it == values.end()) throw ConfigError(source + ": missing key '" + key + "'");
        return it->second;
    }

    std::string get_str_or(const std::string& key, const std::string& dflt) const {
        const auto it = values.find(key);
        return it == values.end() ? dflt : it->second;
    }

    double get_double(const std::string& key) const { return parse_double(key, get_str(key)); }

    double get_double_or(const std::string& key, double dflt) const {
        return has(key) ? get_double(key) : dflt;
    }

    std::size_t get_size(const std::string& key) const {
        return static_cast<std::size_t>(parse_u64(key, get_str(key)));
    }

    std::size_t get_size_or(const std::string& key, std::size_t dflt) const {
        return has(key) ? get_size(key) : dflt;
    }

    std::uint64_t get_u64_or(const std::string& key, std::uint64_t dflt) const {
        return has(key) ? parse_u64(key, get_str(key)) : dflt;
    }

    bool get_bool_or(const std::string& key, bool dflt) const {
        if (!has(key)) return dflt;
        const std::string v = get_str(key);
        if (v == "true" || v == "1") return true;
        if (v == "false" || v == "0") return false;
        throw ConfigError(source + ": key '" + key + "' must be true/false/1/0, got '" + v + "'");
    }

    // Unknown keys are configuration errors.
    void require_known(const std::set<std::string>& allowed) const {
        for (const auto& [k, v] : values)
            if (!allowed.count(k))
                throw ConfigError(source + ": unknown key '" + k + "'");
    }

  private:
    double parse_double(const std::string& key, const std::string& v) const {
        const char* c = v.c_str();
        char* end = nullptr;
        const double x = std::strtod(c, &end);
        if (end == c || *end != '\0')
            throw ConfigError(source + ": key '" + key + "' is not a number: '" + v + "'");
        return x;
    }

    std::uint64_t parse_u64(const std::string& key, const std::string& v) const {
        const char* c = v.c_str();
        char* end = nullptr;
        const unsigned long long x = std::strtoull(c, &end, 10);
        if (end == c || *end != '\0' || v[0] == '-')
            throw ConfigError(source + ": key '" + key + "' is not a nonnegative integer: '" +
                              v + "'");
        return x;
    }
};

inline RunConfig parse_config(const std::filesystem::path& path) {
    std::string bytes;
    try {
        bytes = read_file(path);
    } catch (const IoError& e) {
        throw ConfigError(e.what());
    }
    RunConfig cfg;
    cfg.source = path.string();
    std::size_t pos = 0, line_no = 0;
    while (pos <= bytes.size()) {
        const std::size_t eol = bytes.find('\n', pos);
        std::string line = bytes.substr(pos, eol == std::string::npos ? std::string::npos
                                                                      : eol - pos);
        pos = eol == std::string::npos ? bytes.size() + 1 : eol + 1;
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(cfg.source + ":" + std::to_string(line_no) +
                              ": expected 'key = value'");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError(cfg.source + ":" + std::to_string(line_no) + ": empty key");
        if (cfg.values.count(key))
            throw ConfigError(cfg.source + ":" + std::to_string(line_no) + ": duplicate key '" +
                              key + "'");
        cfg.values[key] = value;
    }
    return cfg;
}

}  // namespace ssr
