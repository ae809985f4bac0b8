#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace torclass {

/// Flat key-value configuration with optional `[section]` headers.
///
/// Keys inside a section are stored as `section.key`. Lines starting with `#`
/// or `;` are comments; values are trimmed. Later assignments win.
class KvConfig {
 public:
  static KvConfig parse(std::istream& in, const std::string& source_name = "<config>");
  static KvConfig load(const std::string& path);

  bool contains(const std::string& key) const { return values_.count(key) != 0; }
  std::optional<std::string> get(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  /// Every key that starts with `prefix` (e.g. "synth.").
  std::vector<std::string> keys_with_prefix(const std::string& prefix) const;

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

/// Splits `text` on any character in `delims`, trimming and dropping empties.
std::vector<std::string> split_list(const std::string& text, const std::string& delims = ",");

/// Parses a double, throwing UsageError mentioning `what` on failure.
double parse_double(const std::string& text, const std::string& what);

std::string trim(const std::string& s);
std::string to_lower(std::string s);

}  // namespace torclass
