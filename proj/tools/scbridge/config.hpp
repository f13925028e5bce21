#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace scbridge::cli {

/// Bad command line or configuration; maps to exit code 1.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/**
 * @brief Flat dotted-key settings, e.g. `bridge.sigma`.
 *
 * Every key has a default whose JSON type fixes the accepted type. Keys without a usable default
 * (paths, seed) default to null and must be supplied when a command reads them.
 */
class Config {
public:
    Config();

    /// Merges a JSON object of dotted keys; nested objects are rejected.
    void merge_file(const std::filesystem::path& path);
    /// `key=value`; the value is parsed as JSON when possible, otherwise kept as a string.
    void set(const std::string& assignment);
    void set(const std::string& key, nlohmann::json value);

    bool has(const std::string& key) const;
    std::string get_string(const std::string& key) const;
    double get_double(const std::string& key) const;
    std::uint64_t get_uint(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::vector<double> get_doubles(const std::string& key) const;

    /// All settings as one flat JSON object in key order.
    nlohmann::ordered_json dump() const;

private:
    const nlohmann::json& require(const std::string& key) const;

    std::map<std::string, nlohmann::json> values_;
};

}  // namespace scbridge::cli
