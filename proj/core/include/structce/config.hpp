#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

namespace structce::config {

/// Flat `key = value` text config. Lines starting with '#' (or blank) are
/// skipped; keys are dotted paths; list values are comma or whitespace
/// separated. Lookups record the touched keys so unknown keys can be
/// rejected after parsing.
class KeyValueConfig {
 public:
  static KeyValueConfig from_string(const std::string& text);
  static KeyValueConfig from_file(const std::string& path);

  /// Later assignments win (used for command-line overrides).
  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  std::vector<double> get_double_list(const std::string& key,
                                      const std::vector<double>& fallback) const;
  std::vector<std::string> get_string_list(const std::string& key,
                                           const std::vector<std::string>& fallback) const;

  /// Keys present in the config but never looked up.
  std::vector<std::string> untouched_keys() const;

 private:
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> touched_;
};

}  // namespace structce::config
