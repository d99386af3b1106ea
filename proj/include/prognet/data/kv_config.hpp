#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace prognet::data {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Flat `key = value` text. Lines starting with '#' are comments; later keys
// override earlier ones. Lists are comma separated.
class KeyValues {
public:
    KeyValues() = default;
    static KeyValues parse(const std::string& text);
    static KeyValues load(const std::filesystem::path& path);

    void set(const std::string& key, std::string value) { entries_[key] = std::move(value); }
    [[nodiscard]] bool has(const std::string& key) const { return entries_.count(key) != 0; }
    [[nodiscard]] std::optional<std::string> find(const std::string& key) const;

    [[nodiscard]] std::string get_string(const std::string& key) const;
    [[nodiscard]] std::string get_string(const std::string& key, const std::string& fallback) const;
    [[nodiscard]] long get_int(const std::string& key) const;
    [[nodiscard]] long get_int(const std::string& key, long fallback) const;
    [[nodiscard]] double get_double(const std::string& key) const;
    [[nodiscard]] double get_double(const std::string& key, double fallback) const;
    [[nodiscard]] std::vector<double> get_doubles(const std::string& key) const;
    [[nodiscard]] std::vector<long> get_ints(const std::string& key) const;

    // Canonical text: sorted keys, one `key = value` per line.
    [[nodiscard]] std::string str() const;
    [[nodiscard]] const std::map<std::string, std::string>& entries() const { return entries_; }

private:
    std::map<std::string, std::string> entries_;
};

std::vector<std::string> split(const std::string& s, char sep);
std::string trim(const std::string& s);

}  // namespace prognet::data
