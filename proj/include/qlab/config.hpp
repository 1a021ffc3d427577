#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

// Flat key-value configuration: one `dotted.key = value` per line, UTF-8,
// `#` starts a comment (full line or trailing). Values keep their raw text;
// typed access happens through the getters, which throw ConfigError with the
// offending key on malformed input.

namespace qlab {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Config {
 public:
  static Config from_file(const std::string& path);
  static Config from_string(const std::string& text,
                            const std::string& origin = "<string>");

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key,
                         const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  // Comma-separated list of reals, e.g. "0.1, 0.02, 0.004".
  std::vector<double> get_double_list(const std::string& key,
                                      const std::vector<double>& fallback) const;

  void set(const std::string& key, const std::string& value);
  const std::map<std::string, std::string>& entries() const { return kv_; }
  const std::string& origin() const { return origin_; }

 private:
  std::map<std::string, std::string> kv_;
  std::string origin_;
};

// The model-level keys shared by every experiment, with the invariant checks
// N >= 1, M >= 2N, dt > 0, r > 0, eps >= 0 applied in from_config.
struct ModelConfig {
  int N = 8;
  int M = 0;  // 0 means the default 4N
  double mu = 1.0;
  double eps = 0.01;
  double rho = 0.0;
  std::string potential_family = "zero";
  double potential_strength = 1.0;
  double dt = 1e-3;
  double T = 1.0;
  std::uint64_t seed = 12345;
  std::size_t paths = 100;
  double domain_radius = 1.0;
  std::string output_dir = "out";

  static ModelConfig from_config(const Config& cfg);
  std::size_t steps() const;  // round(T/dt), at least 1
};

}  // namespace qlab
