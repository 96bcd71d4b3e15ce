#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace ulre {

// Flat `key = value` configuration. Blank lines and lines starting with '#'
// are ignored. Unknown and duplicate keys are rejected with ConfigError, as
// are values that fail to parse when read.
class ExperimentConfig {
public:
    ExperimentConfig() = default;
    explicit ExperimentConfig(std::set<std::string> allowed_keys) : allowed_(std::move(allowed_keys)) {}

    static ExperimentConfig parse(std::string_view text, std::set<std::string> allowed_keys);
    static ExperimentConfig load(const std::filesystem::path& path, std::set<std::string> allowed_keys);

    bool has(const std::string& key) const { return values_.contains(key); }
    void set(const std::string& key, std::string value);

    std::string get_string(const std::string& key, const std::string& fallback) const;
    std::string require_string(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    // Comma-separated list; empty when the key is absent.
    std::vector<std::string> get_list(const std::string& key) const;
    std::vector<std::size_t> get_sizes(const std::string& key, std::vector<std::size_t> fallback) const;

    // Sorted `key=value` lines; the hashed form recorded in manifests.
    std::string canonical() const;
    const std::map<std::string, std::string>& values() const noexcept { return values_; }

private:
    std::set<std::string> allowed_;
    std::map<std::string, std::string> values_;
};

// Lower-case hex SHA-256 digests.
std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace ulre
