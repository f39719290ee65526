#pragma once

// The `appnet` command line: validate, stats, train, predict, experiment, synth.

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace appnet::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;

inline constexpr const char* kVersion = "1.0.0";

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Flat `key = value` configuration. Relative paths resolve against base_dir.
class RunConfig {
 public:
  static RunConfig parse(const std::string& text, std::filesystem::path base_dir);
  static RunConfig load(const std::filesystem::path& file);

  // `key=value`; overrides any earlier value.
  void set(const std::string& assignment);

  // Rejects unknown keys (with a nearest-key suggestion) and malformed values.
  void check() const;

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  std::string text(const std::string& key, const std::string& fallback) const;
  std::string required(const std::string& key) const;
  std::optional<long long> integer(const std::string& key) const;
  std::optional<double> real(const std::string& key) const;
  std::optional<bool> boolean(const std::string& key) const;
  std::vector<std::string> list(const std::string& key) const;
  std::vector<double> reals(const std::string& key) const;
  std::filesystem::path path(const std::string& key) const;

  const std::map<std::string, std::string>& values() const { return values_; }
  // Canonical `key = value` lines, sorted by key.
  std::string canonical() const;

 private:
  std::map<std::string, std::string> values_;
  std::filesystem::path base_dir_;
};

// Closest known key to `key` by edit distance, if any is reasonably close.
std::optional<std::string> suggest_key(const std::string& key,
                                       const std::vector<std::string>& known);
std::size_t edit_distance(const std::string& a, const std::string& b);

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace appnet::cli
