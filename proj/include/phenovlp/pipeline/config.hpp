#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace phenovlp::pipeline {

enum class ValueType { integer, real, boolean, text, path, int_list };

struct ConfigKey {
    std::string name;  // "section.key", or "key" for top-level entries
    ValueType type;
    std::string default_value;
};

// Every accepted key in canonical order.
const std::vector<ConfigKey>& config_schema();

// INI-style run configuration:
//
//   seed = 0
//   [vlp]
//   alpha = 0.3
//
// '#' and ';' start comment lines. Keys outside the schema, duplicate keys and
// values that do not parse as the key's type are InputErrors. Relative paths
// resolve against the directory of the config file.
class RunConfig {
public:
    // Every key at its default.
    RunConfig();

    static RunConfig parse(std::istream& in, const std::filesystem::path& base_dir = {});
    static RunConfig parse_string(const std::string& text, const std::filesystem::path& base_dir = {});
    static RunConfig load(const std::filesystem::path& path);

    // Validated assignment of one "section.key" to a raw value.
    void set(std::string_view name, std::string_view value);
    // "section.key=value"; relative paths resolve against the working directory.
    void apply_override(std::string_view assignment);

    // All keys in schema order, one section per block, values in canonical
    // spelling. parse(serialize()) reproduces the same config.
    std::string serialize() const;
    // Hash of the canonical text of one section ("" for top-level keys).
    std::string section_hash(std::string_view section) const;

    long get_int(std::string_view name) const;
    double get_real(std::string_view name) const;
    bool get_bool(std::string_view name) const;
    const std::string& get_text(std::string_view name) const;
    // Empty when unset; otherwise absolute or relative to base_dir.
    std::filesystem::path get_path(std::string_view name) const;
    std::vector<int> get_int_list(std::string_view name) const;

    std::uint64_t seed() const { return static_cast<std::uint64_t>(get_int("seed")); }
    std::filesystem::path output_root() const { return get_path("output_root"); }
    const std::filesystem::path& base_dir() const { return base_dir_; }
    void set_base_dir(std::filesystem::path dir) { base_dir_ = std::move(dir); }

    bool operator==(const RunConfig& other) const { return values_ == other.values_; }

private:
    const std::string& raw(std::string_view name, ValueType expected) const;
    std::map<std::string, std::string, std::less<>> values_;  // canonical spellings
    std::filesystem::path base_dir_;
};

}  // namespace phenovlp::pipeline
