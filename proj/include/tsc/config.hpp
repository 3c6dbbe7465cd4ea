#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tsc {

/// Flat `key = value` configuration, one entry per line. Blank lines and
/// lines starting with '#' are ignored; later entries override earlier ones.
class Config {
 public:
  Config() = default;

  static Config parse(const std::string& text);
  static Config load(const std::filesystem::path& path);

  /// Keys in sorted order, one `key = value` line each.
  std::string to_string() const;

  bool contains(const std::string& key) const { return entries_.count(key) != 0; }
  void set(const std::string& key, std::string value) { entries_[key] = std::move(value); }
  void merge(const Config& overrides);
  const std::map<std::string, std::string>& entries() const noexcept { return entries_; }

  std::optional<std::string> get(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const;

 private:
  std::map<std::string, std::string> entries_;
};

std::vector<std::string> split(const std::string& text, char delimiter);
std::string trim(const std::string& text);
double parse_double(const std::string& text, const std::string& context);
long long parse_int(const std::string& text, const std::string& context);
/// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);

}  // namespace tsc
