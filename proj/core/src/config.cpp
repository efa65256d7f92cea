#include "lutq/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace lutq {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

} // namespace

Config Config::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    return parse(in, path);
}

Config Config::parse(std::istream& in, const std::string& origin) {
    Config cfg;
    cfg.origin_ = origin;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string body = trim(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + ":" + std::to_string(lineno) +
                              ": expected key = value, got '" + body + "'");
        }
        const std::string key = trim(body.substr(0, eq));
        const std::string value = trim(body.substr(eq + 1));
        if (key.empty()) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
        }
        if (cfg.values_.count(key)) {
            throw ConfigError(origin + ": duplicate field '" + key + "'");
        }
        cfg.values_[key] = value;
    }
    return cfg;
}

bool Config::has(const std::string& key) const { return values_.count(key) != 0; }

std::string Config::get_string(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) {
        throw ConfigError(origin_ + ": missing required field '" + key + "'");
    }
    return it->second;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

std::uint64_t Config::get_u64(const std::string& key) const {
    const std::string v = get_string(key);
    try {
        std::size_t used = 0;
        const std::uint64_t n = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return n;
    } catch (const std::exception&) {
        throw ConfigError(origin_ + ": field '" + key + "' must be a non-negative integer, got '" +
                          v + "'");
    }
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
    return has(key) ? get_u64(key) : fallback;
}

double Config::get_double(const std::string& key) const {
    const std::string v = get_string(key);
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError(origin_ + ": field '" + key + "' must be a number, got '" + v + "'");
    }
}

double Config::get_double(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
}

std::vector<std::size_t> Config::get_size_list(const std::string& key) const {
    const std::string v = get_string(key);
    std::vector<std::size_t> out;
    std::istringstream stream(v);
    std::string item;
    while (std::getline(stream, item, ',')) {
        const std::string t = trim(item);
        try {
            std::size_t used = 0;
            const std::uint64_t n = std::stoull(t, &used);
            if (used != t.size() || n == 0) throw std::invalid_argument(t);
            out.push_back(static_cast<std::size_t>(n));
        } catch (const std::exception&) {
            throw ConfigError(origin_ + ": field '" + key +
                              "' must be a comma-separated list of positive integers");
        }
    }
    if (out.empty()) {
        throw ConfigError(origin_ + ": field '" + key + "' must not be empty");
    }
    return out;
}

void Config::require_known(const std::vector<std::string>& allowed) const {
    for (const auto& [key, value] : values_) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw ConfigError(origin_ + ": unknown field '" + key + "'");
        }
    }
}

} // namespace lutq
