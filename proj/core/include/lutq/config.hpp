#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "lutq/errors.hpp"

namespace lutq {

/**
 * Flat key = value configuration. '#' starts a comment, blank lines are
 * skipped, duplicate and unknown keys are errors (not warnings); the
 * diagnostics name the offending field.
 */
class Config {
public:
    static Config parse_file(const std::string& path);
    static Config parse(std::istream& in, const std::string& origin);

    bool has(const std::string& key) const;

    std::string get_string(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    std::uint64_t get_u64(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    double get_double(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;

    // Comma-separated positive integers, e.g. hidden_units = 32,32
    std::vector<std::size_t> get_size_list(const std::string& key) const;

    // Throws ConfigError naming the first key not in `allowed`.
    void require_known(const std::vector<std::string>& allowed) const;

private:
    std::map<std::string, std::string> values_;
    std::string origin_;
};

} // namespace lutq
