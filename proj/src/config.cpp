#include "qlab/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace qlab {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const char* want) {
  throw ConfigError("config key '" + key + "': cannot parse '" + value +
                    "' as " + want);
}

}  // namespace

Config Config::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_string(buf.str(), path);
}

Config Config::from_string(const std::string& text, const std::string& origin) {
  Config cfg;
  cfg.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) +
                        ": expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    cfg.kv_[key] = value;
  }
  return cfg;
}

bool Config::has(const std::string& key) const { return kv_.count(key) > 0; }

void Config::set(const std::string& key, const std::string& value) {
  kv_[key] = value;
}

std::string Config::get_string(const std::string& key,
                               const std::string& fallback) const {
  const auto it = kv_.find(key);
  return it == kv_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
  const auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  const char* s = it->second.c_str();
  char* end = nullptr;
  const double v = std::strtod(s, &end);
  if (end == s || *end != '\0' || !std::isfinite(v))
    bad_value(key, it->second, "a real number");
  return v;
}

std::int64_t Config::get_int(const std::string& key,
                             std::int64_t fallback) const {
  const auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  const char* s = it->second.c_str();
  char* end = nullptr;
  const long long v = std::strtoll(s, &end, 10);
  if (end == s || *end != '\0') bad_value(key, it->second, "an integer");
  return static_cast<std::int64_t>(v);
}

std::uint64_t Config::get_uint(const std::string& key,
                               std::uint64_t fallback) const {
  const auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  const char* s = it->second.c_str();
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s, &end, 10);
  if (end == s || *end != '\0' || it->second.find('-') != std::string::npos)
    bad_value(key, it->second, "a nonnegative integer");
  return static_cast<std::uint64_t>(v);
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  std::string v = it->second;
  std::transform(v.begin(), v.end(), v.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, it->second, "a boolean");
}

std::vector<double> Config::get_double_list(
    const std::string& key, const std::vector<double>& fallback) const {
  const auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  std::vector<double> out;
  std::string token;
  std::istringstream in(it->second);
  while (std::getline(in, token, ',')) {
    const std::string t = trim(token);
    if (t.empty()) bad_value(key, it->second, "a comma-separated list of reals");
    const char* s = t.c_str();
    char* end = nullptr;
    const double v = std::strtod(s, &end);
    if (end == s || *end != '\0' || !std::isfinite(v))
      bad_value(key, it->second, "a comma-separated list of reals");
    out.push_back(v);
  }
  if (out.empty()) bad_value(key, it->second, "a comma-separated list of reals");
  return out;
}

ModelConfig ModelConfig::from_config(const Config& cfg) {
  ModelConfig m;
  m.N = static_cast<int>(cfg.get_int("model.N", m.N));
  m.M = static_cast<int>(cfg.get_int("model.M", 0));
  m.mu = cfg.get_double("model.mu", m.mu);
  m.eps = cfg.get_double("model.eps", m.eps);
  m.rho = cfg.get_double("model.rho", m.rho);
  m.potential_family = cfg.get_string("potential.family", m.potential_family);
  m.potential_strength =
      cfg.get_double("potential.strength", m.potential_strength);
  m.dt = cfg.get_double("time.dt", m.dt);
  m.T = cfg.get_double("time.T", m.T);
  m.seed = cfg.get_uint("rng.seed", m.seed);
  const std::int64_t paths = cfg.get_int("mc.paths", static_cast<std::int64_t>(m.paths));
  m.domain_radius = cfg.get_double("exit.radius", m.domain_radius);
  m.output_dir = cfg.get_string("output.dir", m.output_dir);

  if (m.N < 1) throw ConfigError("model.N must be >= 1");
  if (m.M == 0) m.M = 4 * m.N;
  if (m.M < 2 * m.N) throw ConfigError("model.M must be >= 2*model.N");
  if (!(m.mu > 0.0)) throw ConfigError("model.mu must be positive");
  if (m.eps < 0.0) throw ConfigError("model.eps must be >= 0");
  if (!(m.dt > 0.0)) throw ConfigError("time.dt must be positive");
  if (!(m.T > 0.0)) throw ConfigError("time.T must be positive");
  if (paths < 1) throw ConfigError("mc.paths must be >= 1");
  m.paths = static_cast<std::size_t>(paths);
  if (!(m.domain_radius > 0.0)) throw ConfigError("exit.radius must be positive");
  return m;
}

std::size_t ModelConfig::steps() const {
  const double s = std::llround(T / dt);
  return static_cast<std::size_t>(std::max(1.0, s));
}

}  // namespace qlab
