#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "rdbn/model.hpp"

namespace rdbn::cli {

/// Bad configuration or flag value; maps to the usage exit code.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Flat `key = value` settings. `#` starts a comment. Values set from the
/// command line replace file values.
class RunConfig {
public:
  static RunConfig parse(std::istream& in, const std::string& source_name);
  static RunConfig load(const std::filesystem::path& path);
  static const std::vector<std::string>& known_keys();

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return entries_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  double get_real(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  /// One value (broadcast by the caller) or a comma-separated list.
  std::vector<double> get_reals(const std::string& key) const;

  /// Hyperparams from the hyperparameter keys; unset keys keep defaults.
  Hyperparams hyperparams() const;

private:
  struct Entry {
    std::string value;
    std::int64_t line = 0;  // 0: command line
  };
  [[noreturn]] void fail(const std::string& key, const std::string& what) const;

  std::map<std::string, Entry> entries_;
  std::string source_;
};

} // namespace rdbn::cli
