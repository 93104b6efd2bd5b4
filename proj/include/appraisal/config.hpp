#pragma once

#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace appraisal {

/// Flat `[section]` / `key = value` settings. Only keys from the built-in
/// schema are accepted; every key has a default, so the resolved view is
/// always complete. Lines starting with '#' or ';' are comments.
class RunConfig {
public:
    RunConfig();

    static RunConfig load(const std::filesystem::path& path);
    static RunConfig parse(std::istream& in, const std::string& source_name = "<config>");

    /// Keys are "section.key". Unknown keys throw ConfigError.
    void set(const std::string& key, const std::string& value);
    const std::string& get(const std::string& key) const;
    bool is_set(const std::string& key) const { return !get(key).empty(); }

    long long get_int(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::optional<std::string> get_optional(const std::string& key) const;

    /// Every schema key in schema order, grouped by section, with a
    /// version comment on the first line.
    void write(std::ostream& out) const;
    void write(const std::filesystem::path& path) const;

    /// (key, default) pairs in schema order.
    static const std::vector<std::pair<std::string, std::string>>& schema();

private:
    std::map<std::string, std::string> values_;
};

}  // namespace appraisal
