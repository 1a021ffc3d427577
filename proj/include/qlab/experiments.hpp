#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qlab/config.hpp"

// Experiment orchestration: the exit-time Monte Carlo study and the CLI
// suite runner (sk-compare | action-check | minact | quasipotential-sweep |
// exit-mc), including persistence of summary.json / CSV artifacts.

namespace qlab {

enum class Equation { Heat, Wave };

struct ExitRecord {
  double eps = 0.0;
  std::size_t n_paths = 0;    // attempted paths
  std::size_t n_censored = 0;  // hit the time cap without exiting
  double mean_tau = 0.0;       // over exited paths
  double std_error = 0.0;
  double eps_log_mean_tau = 0.0;
  double hit_mean_mode1 = 0.0;      // mean first-mode coordinate at exit
  double hit_frac_positive = 0.0;   // fraction of exits with mode_1 > 0
  bool valid = false;               // false when every path was censored
};

struct ExitOptions {
  // Decreasing schedule; empty means {0.5, 0.25, 0.125} * alpha_1 r^2.
  std::vector<double> eps_schedule;
  double max_time = 0.0;  // 0 means the default cap 1e3 * exp(alpha_1 r^2 / eps_max)
  int n_threads = 1;
};

// Mean-exit-time study for G = {x : |x|_H < r}, started at 0. Exit times are
// detected by linear interpolation of |u(t)|_H between grid nodes; paths that
// reach the cap are censored and counted separately. Noise streams are keyed
// by (seed, eps_index * paths + path, mode).
std::vector<ExitRecord> run_exit_mc(const ModelConfig& mc, Equation eq,
                                    const ExitOptions& opts);
std::vector<ExitRecord> run_exit_mc(const ModelConfig& mc, Equation eq);

// ---------------------------------------------------------------------------
// Suite runner

struct SuiteOptions {
  std::string subcommand;  // sk-compare | action-check | minact |
                           // quasipotential-sweep | exit-mc
  std::string config_path;
  std::string out_dir;     // overrides output.dir when nonempty
  std::optional<std::uint64_t> seed_override;
  int n_threads = 1;
};

// Executes the named experiment and writes summary.json (plus per-experiment
// CSV artifacts) under the output directory. Returns 0 on success, 2 on
// configuration errors (message names the config path), 3 on numerical
// failure (exception or non-finite results), with a diagnostic record when
// the output directory is reachable.
int run_suite(const SuiteOptions& opts);

}  // namespace qlab
