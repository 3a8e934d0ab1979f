#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "eta/data.hpp"
#include "eta/model.hpp"

namespace eta {

/// Line-oriented "key = value" text. "[name]" starts a section, '#' starts a
/// comment. Keys are stored as "section.key" ("key" before any section).
class ConfigFile {
 public:
  static ConfigFile parse(std::istream& in, const std::string& source = "config");
  static ConfigFile parse(const std::string& text, const std::string& source = "config");
  static ConfigFile load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.contains(key); }
  const std::string& raw(const std::string& key) const;
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::size_t get_count(const std::string& key, std::size_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  /// Comma-separated counts, e.g. "64, 32".
  std::vector<std::size_t> get_counts(const std::string& key, std::vector<std::size_t> fallback) const;
  std::vector<std::string> get_strings(const std::string& key, std::vector<std::string> fallback) const;

  /// Keys under `section.` that are not in `known`. Used to reject typos.
  std::vector<std::string> unknown_keys(const std::string& section, const std::vector<std::string>& known) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
  std::string source_;
};

/// Reads the [model] section on top of `base`. Throws InvalidArgument on
/// unknown keys or unparsable values.
ModelConfig model_config_from(const ConfigFile& file, ModelConfig base = {});
/// The [model] section text that model_config_from reads back unchanged.
std::string model_config_text(const ModelConfig& config);

/// Reads the [synthetic] section.
SyntheticSpec synthetic_spec_from(const ConfigFile& file, SyntheticSpec base = {});

/// Dataset building knobs, [data] section.
struct DataConfig {
  std::size_t short_len = 16;
  std::size_t long_len = 256;
  std::size_t negatives_per_positive = 1;
  std::uint64_t seed = 7;
};
DataConfig data_config_from(const ConfigFile& file, DataConfig base = {});

}  // namespace eta
