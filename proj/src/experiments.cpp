#include "qlab/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "qlab/action.hpp"
#include "qlab/dynamics.hpp"
#include "qlab/parallel.hpp"
#include "qlab/potential.hpp"
#include "qlab/spectral.hpp"
#include "qlab/stats.hpp"

namespace qlab {

namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

bool all_finite(const std::vector<double>& xs) {
  for (double x : xs)
    if (!std::isfinite(x)) return false;
  return true;
}

// Trajectory dump per the external-interface contract:
// header t,mode_1,...,mode_N[,vmode_1,...]
std::string trajectory_csv(const TrajectorySample& t) {
  const std::size_t N = t.u.front().size();
  std::string s = "t";
  for (std::size_t k = 1; k <= N; ++k) s += ",mode_" + std::to_string(k);
  if (t.has_velocity())
    for (std::size_t k = 1; k <= N; ++k) s += ",vmode_" + std::to_string(k);
  s += "\n";
  for (std::size_t n = 0; n < t.u.size(); ++n) {
    s += fmt_double(t.grid.node(n));
    for (std::size_t k = 0; k < N; ++k) s += "," + fmt_double(t.u[n][k]);
    if (t.has_velocity())
      for (std::size_t k = 0; k < N; ++k) s += "," + fmt_double(t.v[n][k]);
    s += "\n";
  }
  return s;
}

std::string path_csv(const DiscretePath& p) {
  const std::size_t N = p.phi.front().size();
  std::string s = "t";
  for (std::size_t k = 1; k <= N; ++k) s += ",mode_" + std::to_string(k);
  s += "\n";
  for (std::size_t n = 0; n < p.nodes(); ++n) {
    s += fmt_double(p.grid.node(n));
    for (std::size_t k = 0; k < N; ++k) s += "," + fmt_double(p.phi[n][k]);
    s += "\n";
  }
  return s;
}

struct Workbench {
  ModelConfig mc;
  SpectralBasis basis;
  NoiseSpec noise;
  PotentialSpec pot;
};

Workbench make_bench(const Config& cfg) {
  Workbench b;
  b.mc = ModelConfig::from_config(cfg);
  b.basis = SpectralBasis::dirichlet_unit_interval(b.mc.N, b.mc.M);
  b.noise = NoiseSpec::power_law(b.basis, b.mc.rho);
  try {
    b.pot = PotentialSpec::make(
        potential_family_from_string(b.mc.potential_family),
        b.mc.potential_strength);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("potential.family: ") + e.what());
  }
  return b;
}

ModeVector mode_vector_from_list(const std::vector<double>& coeffs,
                                 std::size_t N) {
  ModeVector x(N);
  for (std::size_t k = 0; k < N && k < coeffs.size(); ++k) x[k] = coeffs[k];
  return x;
}

// ---------------------------------------------------------------------------
// sk-compare

int cmd_sk_compare(const Config& cfg, const Workbench& b, const fs::path& out,
                   int threads, ordered_json& summary) {
  const std::vector<double> mu_list =
      cfg.get_double_list("sk.mu_list", {0.1, 0.02, 0.004});
  const std::size_t N = static_cast<std::size_t>(b.mc.N);
  std::size_t u0_mode =
      static_cast<std::size_t>(std::max<std::int64_t>(1, cfg.get_int("sk.u0_mode", 1)));
  u0_mode = std::min(u0_mode, N);
  const double u0_amp = cfg.get_double("sk.u0_amp", 1.0);
  const double v0_amp = cfg.get_double("sk.v0_amp", 0.0);

  SkConfig sc;
  sc.steps = b.mc.steps();
  sc.z0 = PhaseState(scale(ModeVector::unit(N, u0_mode), u0_amp),
                     scale(ModeVector::unit(N, u0_mode), v0_amp));
  sc.potential = b.pot;
  sc.seed = b.mc.seed;
  sc.n_threads = threads;

  const SkTable table =
      sk_compare(mu_list, b.mc.eps, b.mc.T, b.mc.paths, sc, b.basis, b.noise);

  std::string csv = "mu,mean_deviation,stderr\n";
  ordered_json rows = ordered_json::array();
  bool monotone = true;
  double max_p = 0.0;
  std::vector<double> finite_probe;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const SkRow& r = table.rows[i];
    csv += fmt_double(r.mu) + "," + fmt_double(r.mean_deviation) + "," +
           fmt_double(r.std_error) + "\n";
    ordered_json jr;
    jr["mu"] = r.mu;
    jr["mean_deviation"] = r.mean_deviation;
    jr["std_error"] = r.std_error;
    jr["p_value_decrease"] = r.p_value_decrease;
    rows.push_back(jr);
    if (i > 0) {
      monotone = monotone &&
                 (r.mean_deviation < table.rows[i - 1].mean_deviation);
      max_p = std::max(max_p, r.p_value_decrease);
    }
    finite_probe.push_back(r.mean_deviation);
    finite_probe.push_back(r.std_error);
  }
  write_text(out / "sk_deviations.csv", csv);

  summary["rows"] = rows;
  summary["mean_deviation_monotone_decreasing"] = monotone;
  summary["max_p_value_decrease"] = max_p;

  // One sample coupled path per mu for inspection.
  fs::create_directories(out / "trajectories");
  const TimeGrid grid(0.0, b.mc.T, sc.steps);
  const TrajectorySample heat = integrate_heat(
      sc.z0.u, sc.potential, b.noise, grid, nullptr, b.mc.eps, sc.seed, b.basis, 0);
  write_text(out / "trajectories" / "heat_path0.csv", trajectory_csv(heat));
  for (std::size_t i = 0; i < mu_list.size(); ++i) {
    const TrajectorySample wave =
        integrate_wave(sc.z0, mu_list[i], sc.potential, b.noise, grid, nullptr,
                       b.mc.eps, sc.seed, b.basis, 0);
    write_text(out / "trajectories" /
                   ("wave_mu" + std::to_string(i) + "_path0.csv"),
               trajectory_csv(wave));
  }

  return all_finite(finite_probe) ? 0 : 3;
}

// ---------------------------------------------------------------------------
// action-check

int cmd_action_check(const Config& cfg, const Workbench& b, const fs::path& out,
                     int /*threads*/, ordered_json& summary) {
  const std::size_t N = static_cast<std::size_t>(b.mc.N);
  ordered_json checks = ordered_json::array();
  bool all_passed = true;
  std::vector<double> finite_probe;

  auto push_check = [&](const char* name, ordered_json detail, bool passed) {
    detail["name"] = name;
    detail["passed"] = passed;
    // keep name first for readability
    ordered_json front;
    front["name"] = name;
    for (auto& [k, v] : detail.items())
      if (k != "name") front[k] = v;
    checks.push_back(front);
    all_passed = all_passed && passed;
  };

  // 1. Gramian identity across mu and Delta.
  {
    PhaseState z{ModeVector(N), ModeVector(N)};
    for (std::size_t k = 0; k < N; ++k) {
      z.u[k] = 1.0 / static_cast<double>(k + 1);
      z.v[k] = (k % 2 == 0 ? 1.0 : -1.0) / std::sqrt(static_cast<double>(k + 1));
    }
    double max_rel = 0.0;
    for (double mu : {0.25, 1.0, 4.0}) {
      for (double Delta : {0.1, 1.0}) {
        const int panels = std::max(8, static_cast<int>(std::ceil(Delta * 16)));
        const double quad = gramian_integral(z, mu, Delta, panels, b.basis, b.noise);
        const double closed = gramian_closed_form(z, mu, Delta, b.basis, b.noise);
        max_rel = std::max(max_rel, std::abs(quad - closed) / std::abs(closed));
      }
    }
    ordered_json d;
    d["max_relative_error"] = max_rel;
    d["tolerance"] = 1e-6;
    finite_probe.push_back(max_rel);
    push_check("gramian_identity", d, max_rel <= 1e-6);
  }

  // 2. Energy dissipation along the deterministic wave flow.
  const double diss_dt = cfg.get_double("action.dt", 1e-4);
  const double diss_T = cfg.get_double("action.T", 1.0);
  {
    ModeVector x(N);
    for (std::size_t k = 0; k < N; ++k)
      x[k] = 0.5 / static_cast<double>((k + 1) * (k + 1));
    const PhaseState z0(x, ModeVector(N));
    const TimeGrid grid(0.0, diss_T,
                        static_cast<std::size_t>(std::llround(diss_T / diss_dt)));
    const TrajectorySample traj = integrate_wave(z0, b.mc.mu, b.pot, b.noise,
                                                 grid, nullptr, 0.0, 0, b.basis);
    const double phi_start = energy_phi(z0, b.mc.mu, b.pot, b.basis, b.noise);
    const double phi_end =
        energy_phi(PhaseState(traj.u.back(), traj.v.back()), b.mc.mu, b.pot,
                   b.basis, b.noise);
    // -2 Int |Q^{-1} phi'|^2 dt by trapezoid over the stored velocities.
    double quad = 0.0;
    for (std::size_t n = 0; n < traj.u.size(); ++n) {
      const double w = (n == 0 || n + 1 == traj.u.size()) ? 0.5 : 1.0;
      double s = 0.0;
      for (std::size_t k = 0; k < N; ++k) {
        const double q = traj.v[n][k] / b.noise.lambda[k];
        s += q * q;
      }
      quad += w * s;
    }
    quad *= grid.dt();
    const double lhs = phi_end - phi_start;
    const double rel = std::abs(lhs + 2.0 * quad) / std::abs(lhs);
    bool monotone = true;
    double prev = phi_start;
    for (std::size_t n = 10; n < traj.u.size(); n += 10) {
      const double cur = energy_phi(PhaseState(traj.u[n], traj.v[n]), b.mc.mu,
                                    b.pot, b.basis, b.noise);
      monotone = monotone && (cur <= prev * (1.0 + 1e-12));
      prev = cur;
    }
    ordered_json d;
    d["relative_error"] = rel;
    d["tolerance"] = 1e-3;
    d["energy_monotone"] = monotone;
    finite_probe.push_back(rel);
    push_check("energy_dissipation_identity", d, rel <= 1e-3 && monotone);
  }

  // 3. L2 bound with the decay-estimate tail.
  {
    ModeVector x(N), y(N);
    for (std::size_t k = 0; k < N; ++k) {
      x[k] = 0.4 / static_cast<double>(k + 1);
      y[k] = 0.2 * (k % 2 == 0 ? 1.0 : -1.0);
    }
    const double horizon = std::max(4.0, 8.0 * b.mc.mu);
    const TimeGrid grid(0.0, horizon,
                        static_cast<std::size_t>(std::llround(horizon / 1e-3)));
    const TrajectorySample traj = integrate_wave(
        PhaseState(x, y), b.mc.mu, b.pot, b.noise, grid, nullptr, 0.0, 0, b.basis);
    double lhs = 0.0;
    for (std::size_t n = 0; n < traj.u.size(); ++n) {
      const double w = (n == 0 || n + 1 == traj.u.size()) ? 0.5 : 1.0;
      double s = 0.0;
      for (std::size_t k = 0; k < N; ++k) {
        const double q = traj.u[n][k] * std::sqrt(b.basis.alpha[k]) /
                         b.noise.lambda[k];
        s += q * q;
      }
      lhs += w * s;
    }
    lhs *= 2.0 * grid.dt();
    // Tail: |Q^{-1}(-A)^{1/2} phi(t)|^2 <= max_k(alpha_k/lambda_k^2)
    // * M^2 e^{-2 omega (t-T)} |z(T)|^2.
    const SemigroupDecayEstimate dec = estimate_decay(b.mc.mu, b.basis);
    double weight = 0.0;
    for (std::size_t k = 0; k < N; ++k)
      weight = std::max(weight,
                        b.basis.alpha[k] / (b.noise.lambda[k] * b.noise.lambda[k]));
    const double zT = phase_norm_sq(
        PhaseState(traj.u.back(), traj.v.back()), b.basis);
    const double tail =
        2.0 * weight * dec.M_mu * dec.M_mu * zT / (2.0 * dec.omega_mu);
    double rhs = 0.0;
    for (std::size_t k = 0; k < N; ++k) {
      const double a = (b.mc.mu * y[k] + x[k]) / b.noise.lambda[k];
      rhs += a * a;
      const double c = std::sqrt(b.basis.alpha[k]) * x[k] / b.noise.lambda[k];
      rhs += b.mc.mu * c * c;
    }
    rhs += 2.0 * b.mc.mu * eval_F(x, b.pot, b.basis);
    ordered_json d;
    d["lhs_truncated"] = lhs;
    d["tail_bound"] = tail;
    d["rhs"] = rhs;
    finite_probe.push_back(lhs);
    finite_probe.push_back(rhs);
    push_check("l2_velocity_bound", d, lhs + tail <= rhs * (1.0 + 1e-9));
  }

  // 4. Completing-the-square decomposition on the reversed decaying path.
  {
    ModeVector x(N), y(N);
    for (std::size_t k = 0; k < N; ++k) x[k] = 0.6 / static_cast<double>(k + 1);
    const DiscretePath path = reversed_optimal_path_auto(
        x, y, b.mc.mu, b.pot, b.noise, 1000.0, b.basis, 1e-6);
    const ActionDecomposition dec =
        action_decomposition(path, b.mc.mu, b.pot, b.noise, b.basis);
    const double phi_end = energy_phi(PhaseState(x, y), b.mc.mu, b.pot,
                                      b.basis, b.noise);
    const double cross_err = std::abs(dec.cross_quadrature - phi_end);
    const double res = std::abs(dec.residual());
    ordered_json d;
    d["residual"] = res;
    d["cross_vs_energy_error"] = cross_err;
    d["tolerance"] = 1e-3 * (1.0 + phi_end);
    finite_probe.push_back(res);
    finite_probe.push_back(cross_err);
    push_check("action_decomposition", d,
               res <= 1e-3 * (1.0 + phi_end) &&
                   cross_err <= 1e-3 * (1.0 + phi_end));
  }

  // 5. Forward deterministic trajectory carries (numerically) zero action.
  {
    ModeVector x(N);
    for (std::size_t k = 0; k < N; ++k)
      x[k] = 0.5 / static_cast<double>((k + 1) * (k + 1));
    const TimeGrid grid(0.0, 1.0, 1000);
    const TrajectorySample traj = integrate_wave(
        PhaseState(x, ModeVector(N)), b.mc.mu, b.pot, b.noise, grid, nullptr,
        0.0, 0, b.basis);
    const DiscretePath path =
        DiscretePath::from_positions(grid, traj.u);
    const ActionValue av = action_wave(path, b.mc.mu, b.pot, b.noise, b.basis);
    ordered_json d;
    d["action"] = av.value;
    d["tolerance"] = 1e-4;
    finite_probe.push_back(av.value);
    push_check("forward_trajectory_action", d, av.value <= 1e-4);
  }

  summary["checks"] = checks;
  summary["all_passed"] = all_passed;
  write_text(out / "action_checks.csv", [&] {
    std::string csv = "check,passed\n";
    for (const auto& c : checks)
      csv += c["name"].get<std::string>() + "," +
             (c["passed"].get<bool>() ? "1" : "0") + "\n";
    return csv;
  }());
  return all_finite(finite_probe) ? 0 : 3;
}

// ---------------------------------------------------------------------------
// minact

int cmd_minact(const Config& cfg, const Workbench& b, const fs::path& out,
               int /*threads*/, ordered_json& summary) {
  const std::size_t N = static_cast<std::size_t>(b.mc.N);
  const std::string kind = cfg.get_string("minact.case", "wave");
  if (kind != "wave" && kind != "heat")
    throw ConfigError("minact.case must be 'wave' or 'heat'");
  const bool wave = kind == "wave";

  const ModeVector x =
      mode_vector_from_list(cfg.get_double_list("minact.target", {0.4}), N);
  const double T = cfg.get_double("minact.T", wave ? 10.0 : 6.0);
  const std::size_t steps = static_cast<std::size_t>(
      std::max<std::int64_t>(4, cfg.get_int("minact.steps", 800)));
  const std::string init_kind =
      cfg.get_string("minact.init", wave ? "reversed" : "linear");
  const double perturb = cfg.get_double("minact.perturb", 0.1);
  MinActionOptions opts;
  opts.max_iters = static_cast<std::size_t>(
      std::max<std::int64_t>(1, cfg.get_int("minact.max_iters", 5000)));

  std::optional<double> mu;
  if (wave) mu = b.mc.mu;

  DiscretePath init = linear_ramp_path(x, T, steps);
  if (init_kind == "reversed") {
    if (!wave) throw ConfigError("minact.init=reversed needs the wave case");
    init = perturbed_reversed_init(x, ModeVector(N), *mu, b.pot, b.noise, T,
                                   steps, b.basis, perturb);
  } else if (init_kind != "linear") {
    throw ConfigError("minact.init must be 'linear' or 'reversed'");
  }

  const QuasiPotentialReport rep = min_action_solve(
      x, nullptr, mu, T, steps, b.pot, b.noise, b.basis, init, opts);

  summary["case"] = kind;
  summary["closed_form"] = rep.closed_form;
  summary["numeric_min"] = rep.numeric_min;
  summary["gap"] = rep.gap;
  summary["gap_relative"] = rep.gap / std::max(1e-300, rep.closed_form);
  summary["iterations"] = rep.iterations;
  summary["converged"] = rep.converged;
  summary["terminal_velocity_norm"] = rep.terminal_velocity_norm;
  summary["min_iterate_action"] = rep.min_iterate_action;

  fs::create_directories(out / "trajectories");
  write_text(out / "trajectories" / "minact_path.csv", path_csv(rep.path));

  return all_finite({rep.numeric_min, rep.closed_form, rep.gap}) ? 0 : 3;
}

// ---------------------------------------------------------------------------
// quasipotential-sweep

int cmd_sweep(const Config& cfg, const Workbench& b, const fs::path& out,
              int /*threads*/, ordered_json& summary) {
  const std::size_t N = static_cast<std::size_t>(b.mc.N);
  const std::vector<double> mu_list =
      cfg.get_double_list("sweep.mu_list", {0.25, 1.0, 4.0});
  const ModeVector x =
      mode_vector_from_list(cfg.get_double_list("sweep.target", {0.4}), N);
  const double dt = cfg.get_double("sweep.dt", 0.01);
  const double T_min = cfg.get_double("sweep.T_min", 8.0);
  const double T_factor = cfg.get_double("sweep.T_factor", 7.0);
  const double perturb = cfg.get_double("sweep.perturb", 0.1);
  const bool include_heat = cfg.get_bool("sweep.include_heat", true);
  MinActionOptions opts;
  opts.max_iters = static_cast<std::size_t>(
      std::max<std::int64_t>(1, cfg.get_int("sweep.max_iters", 5000)));

  const double v_of_x =
      quasipotential_closed_form(x, nullptr, std::nullopt, b.pot, b.noise,
                                 b.basis);

  ordered_json rows = ordered_json::array();
  double max_gap_rel = 0.0;
  bool all_converged = true;
  std::vector<double> finite_probe{v_of_x};

  auto run_case = [&](const char* label, std::optional<double> mu) {
    const double T = mu ? std::max(T_min, T_factor * *mu) : T_min;
    const std::size_t steps =
        static_cast<std::size_t>(std::max(4.0, std::llround(T / dt) * 1.0));
    DiscretePath init =
        mu ? perturbed_reversed_init(x, ModeVector(N), *mu, b.pot, b.noise, T,
                                     steps, b.basis, perturb)
           : linear_ramp_path(x, T, steps);
    const QuasiPotentialReport rep = min_action_solve(
        x, nullptr, mu, T, steps, b.pot, b.noise, b.basis, init, opts);
    const double gap_rel = rep.gap / std::max(1e-300, rep.closed_form);
    ordered_json jr;
    jr["case"] = label;
    if (mu) jr["mu"] = *mu;
    jr["T"] = T;
    jr["steps"] = steps;
    jr["closed_form"] = rep.closed_form;
    jr["numeric_min"] = rep.numeric_min;
    jr["gap"] = rep.gap;
    jr["gap_relative"] = gap_rel;
    jr["iterations"] = rep.iterations;
    jr["converged"] = rep.converged;
    jr["terminal_velocity_norm"] = rep.terminal_velocity_norm;
    jr["min_iterate_action"] = rep.min_iterate_action;
    rows.push_back(jr);
    max_gap_rel = std::max(max_gap_rel, std::abs(gap_rel));
    all_converged = all_converged && rep.converged;
    finite_probe.push_back(rep.numeric_min);
  };

  for (double mu : mu_list) run_case("wave", mu);
  if (include_heat) run_case("heat", std::nullopt);

  summary["target_V"] = v_of_x;
  summary["rows"] = rows;
  summary["max_gap_relative"] = max_gap_rel;
  summary["all_converged"] = all_converged;

  std::string csv = "case,mu,closed_form,numeric_min,gap_relative\n";
  for (const auto& r : rows)
    csv += r["case"].get<std::string>() + "," +
           (r.contains("mu") ? fmt_double(r["mu"].get<double>()) : "") + "," +
           fmt_double(r["closed_form"].get<double>()) + "," +
           fmt_double(r["numeric_min"].get<double>()) + "," +
           fmt_double(r["gap_relative"].get<double>()) + "\n";
  write_text(out / "quasipotential_sweep.csv", csv);

  return all_finite(finite_probe) ? 0 : 3;
}

// ---------------------------------------------------------------------------
// exit-mc

int cmd_exit_mc(const Config& cfg, const Workbench& b, const fs::path& out,
                int threads, ordered_json& summary) {
  const std::string eq_name = cfg.get_string("exit.equation", "heat");
  Equation eq;
  if (eq_name == "heat")
    eq = Equation::Heat;
  else if (eq_name == "wave")
    eq = Equation::Wave;
  else
    throw ConfigError("exit.equation must be 'heat' or 'wave'");

  ExitOptions opts;
  opts.eps_schedule = cfg.get_double_list("exit.eps_list", {});
  opts.max_time = cfg.get_double("exit.max_time", 0.0);
  opts.n_threads = threads;

  const std::vector<ExitRecord> records = run_exit_mc(b.mc, eq, opts);

  std::string csv = "eps,n_paths,n_censored,mean_tau,stderr,eps_log_mean_tau\n";
  ordered_json rows = ordered_json::array();
  std::vector<double> finite_probe;
  for (const ExitRecord& r : records) {
    csv += fmt_double(r.eps) + "," + std::to_string(r.n_paths) + "," +
           std::to_string(r.n_censored) + "," + fmt_double(r.mean_tau) + "," +
           fmt_double(r.std_error) + "," + fmt_double(r.eps_log_mean_tau) +
           "\n";
    ordered_json jr;
    jr["eps"] = r.eps;
    jr["n_paths"] = r.n_paths;
    jr["n_censored"] = r.n_censored;
    jr["mean_tau"] = r.mean_tau;
    jr["std_error"] = r.std_error;
    jr["eps_log_mean_tau"] = r.eps_log_mean_tau;
    jr["hit_mean_mode1"] = r.hit_mean_mode1;
    jr["hit_frac_positive"] = r.hit_frac_positive;
    jr["valid"] = r.valid;
    rows.push_back(jr);
    if (r.valid) {
      finite_probe.push_back(r.mean_tau);
      finite_probe.push_back(r.eps_log_mean_tau);
    }
  }
  write_text(out / "exit_records.csv", csv);
  summary["equation"] = eq_name;
  summary["records"] = rows;

  return all_finite(finite_probe) ? 0 : 3;
}

}  // namespace

// ---------------------------------------------------------------------------
// Exit-time Monte Carlo (library entry point)

std::vector<ExitRecord> run_exit_mc(const ModelConfig& mc, Equation eq,
                                    const ExitOptions& opts) {
  const SpectralBasis basis =
      SpectralBasis::dirichlet_unit_interval(mc.N, mc.M);
  const NoiseSpec noise = NoiseSpec::power_law(basis, mc.rho);
  const PotentialSpec pot = PotentialSpec::make(
      potential_family_from_string(mc.potential_family), mc.potential_strength);
  const std::size_t N = static_cast<std::size_t>(mc.N);
  const double r = mc.domain_radius;
  const double barrier = basis.alpha[0] * r * r;

  std::vector<double> schedule = opts.eps_schedule;
  if (schedule.empty()) schedule = {0.5 * barrier, 0.25 * barrier, 0.125 * barrier};
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    if (!(schedule[i] > 0.0))
      throw std::invalid_argument("run_exit_mc: eps schedule must be positive");
    if (i > 0 && !(schedule[i] < schedule[i - 1]))
      throw std::invalid_argument("run_exit_mc: eps schedule must decrease");
  }

  double max_time = opts.max_time;
  if (!(max_time > 0.0)) {
    // Default cap: 1e3 * (expected barrier time at the largest eps), clamped
    // so hostile configs cannot request unbounded work.
    max_time = 1e3 * std::exp(std::min(700.0, barrier / schedule.front()));
    max_time = std::min(max_time, 1e7);
  }

  const double dt = mc.dt;
  struct PathOutcome {
    double tau = 0.0;
    double hit_mode1 = 0.0;
    bool exited = false;
  };

  std::vector<ExitRecord> records;
  records.reserve(schedule.size());

  for (std::size_t ei = 0; ei < schedule.size(); ++ei) {
    const double eps = schedule[ei];
    std::vector<PathOutcome> outcomes(mc.paths);

    parallel_for(mc.paths, opts.n_threads, [&](std::size_t p) {
      const std::uint64_t path_index =
          static_cast<std::uint64_t>(ei) * mc.paths + p;
      PathOutcome& o = outcomes[p];
      ModeVector prev(N), cur(N);
      double prev_norm = 0.0;
      double t = 0.0;

      auto scan = [&](const ModeVector& state) -> bool {
        cur = state;
        double s = 0.0;
        for (std::size_t k = 0; k < N; ++k) s += cur[k] * cur[k];
        const double cur_norm = std::sqrt(s);
        t += dt;
        if (cur_norm >= r) {
          const double theta = (r - prev_norm) / (cur_norm - prev_norm);
          o.tau = t - dt + theta * dt;
          o.hit_mode1 = prev[0] + theta * (cur[0] - prev[0]);
          o.exited = true;
          return true;
        }
        prev = cur;
        prev_norm = cur_norm;
        return false;
      };

      if (eq == Equation::Heat) {
        HeatStepper stepper(ModeVector(N), pot, noise, dt, eps, mc.seed, basis,
                            path_index);
        while (t < max_time) {
          stepper.step();
          if (scan(stepper.state())) break;
        }
      } else {
        WaveStepper stepper(PhaseState::zeros(N), mc.mu, pot, noise, dt, eps,
                            mc.seed, basis, path_index);
        while (t < max_time) {
          stepper.step();
          if (scan(stepper.state().u)) break;
        }
      }
    });

    ExitRecord rec;
    rec.eps = eps;
    rec.n_paths = mc.paths;
    std::vector<double> taus;
    taus.reserve(mc.paths);
    double hit_sum = 0.0;
    std::size_t hit_pos = 0;
    for (const PathOutcome& o : outcomes) {
      if (!o.exited) {
        ++rec.n_censored;
        continue;
      }
      taus.push_back(o.tau);
      hit_sum += o.hit_mode1;
      if (o.hit_mode1 > 0.0) ++hit_pos;
    }
    rec.valid = !taus.empty();
    if (rec.valid) {
      const auto ms = stats::mean_stderr(taus);
      rec.mean_tau = ms.mean;
      rec.std_error = ms.std_error;
      rec.eps_log_mean_tau = eps * std::log(ms.mean);
      rec.hit_mean_mode1 = hit_sum / static_cast<double>(taus.size());
      rec.hit_frac_positive =
          static_cast<double>(hit_pos) / static_cast<double>(taus.size());
    }
    records.push_back(rec);
  }
  return records;
}

std::vector<ExitRecord> run_exit_mc(const ModelConfig& mc, Equation eq) {
  return run_exit_mc(mc, eq, ExitOptions{});
}

// ---------------------------------------------------------------------------
// Suite runner

int run_suite(const SuiteOptions& opts) {
  try {
    Config cfg = Config::from_file(opts.config_path);
    if (opts.seed_override)
      cfg.set("rng.seed", std::to_string(*opts.seed_override));
    const Workbench bench = make_bench(cfg);
    const fs::path out =
        opts.out_dir.empty() ? fs::path(bench.mc.output_dir) : fs::path(opts.out_dir);
    fs::create_directories(out);

    ordered_json summary;
    summary["command"] = opts.subcommand;
    ordered_json echo;
    for (const auto& [k, v] : cfg.entries()) echo[k] = v;
    summary["config"] = echo;
    summary["seed"] = bench.mc.seed;

    int rc = 0;
    try {
      if (opts.subcommand == "sk-compare")
        rc = cmd_sk_compare(cfg, bench, out, opts.n_threads, summary);
      else if (opts.subcommand == "action-check")
        rc = cmd_action_check(cfg, bench, out, opts.n_threads, summary);
      else if (opts.subcommand == "minact")
        rc = cmd_minact(cfg, bench, out, opts.n_threads, summary);
      else if (opts.subcommand == "quasipotential-sweep")
        rc = cmd_sweep(cfg, bench, out, opts.n_threads, summary);
      else if (opts.subcommand == "exit-mc")
        rc = cmd_exit_mc(cfg, bench, out, opts.n_threads, summary);
      else
        throw ConfigError("unknown subcommand: " + opts.subcommand);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      summary["error"] = e.what();
      write_text(out / "summary.json", summary.dump(2) + "\n");
      std::fprintf(stderr, "numerical failure: %s\n", e.what());
      return 3;
    }

    write_text(out / "summary.json", summary.dump(2) + "\n");
    if (rc == 3)
      std::fprintf(stderr, "numerical failure: non-finite results (see %s)\n",
                   (out / "summary.json").string().c_str());
    return rc;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  }
}

}  // namespace qlab
