// Acceptance harness: one spec criterion per invocation (--criterion N) or
// all criteria in sequence. Each criterion prints exactly one line
//   criterion N: PASS — detail
//   criterion N: FAIL — detail
// and the process exits 0 iff every requested criterion passed.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "qlab/action.hpp"
#include "qlab/dynamics.hpp"
#include "qlab/experiments.hpp"
#include "qlab/potential.hpp"
#include "qlab/rng.hpp"
#include "qlab/spectral.hpp"
#include "qlab/stats.hpp"

using namespace qlab;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return std::string(buf);
}

ModeVector random_modes(std::size_t n, CounterRng& rng, double scale = 1.0) {
  ModeVector v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = scale * rng.next_normal();
  return v;
}

PhaseState random_state(std::size_t n, CounterRng& rng, double scale = 1.0) {
  return PhaseState{random_modes(n, rng, scale), random_modes(n, rng, scale)};
}

// --------------------------------------------------------------------------
// 1. Gramian identity: quadrature vs spectral closed form, rel err <= 1e-6,
//    N = 8, mu in {0.25, 1, 4}, Delta in {0.1, 1}.

Outcome criterion1() {
  SpectralBasis basis = SpectralBasis::dirichlet_unit_interval(8, 0);
  CounterRng rng(10001, 0, 0);
  double worst = 0.0;
  for (double rho : {0.0, 1.0}) {
    NoiseSpec noise = NoiseSpec::power_law(basis, rho);
    for (double mu : {0.25, 1.0, 4.0}) {
      for (double Delta : {0.1, 1.0}) {
        PhaseState z = random_state(8, rng);
        const double quad = gramian_integral(z, mu, Delta, 64, basis, noise);
        const double closed = gramian_closed_form(z, mu, Delta, basis, noise);
        worst = std::max(worst, std::fabs(quad - closed) / std::fabs(closed));
      }
    }
  }
  return {worst <= 1e-6,
          fmt("max relative error %.3e over mu in {0.25,1,4}, Delta in {0.1,1}, "
              "rho in {0,1} (tol 1e-6)", worst)};
}

// --------------------------------------------------------------------------
// 2. Energy dissipation identity at dt = 1e-4, N = 8, nonlinear potential.

Outcome criterion2() {
  SpectralBasis basis = SpectralBasis::dirichlet_unit_interval(8, 0);
  NoiseSpec noise = NoiseSpec::power_law(basis, 0.0);
  PotentialSpec pot = PotentialSpec::make(PotentialFamily::DecreasingB, 1.0);
  CounterRng rng(10002, 0, 0);
  PhaseState z0 = random_state(8, rng, 0.5);
  const double mu = 1.0, T = 1.0, dt = 1e-4;
  const std::size_t steps = static_cast<std::size_t>(T / dt);
  TimeGrid grid(0.0, T, steps);
  TrajectorySample s =
      integrate_wave(z0, mu, pot, noise, grid, nullptr, 0.0, 1, basis);
  auto q_inv_sq = [&](const ModeVector& v) {
    double acc = 0.0;
    for (int k = 0; k < 8; ++k)
      acc += v[k] * v[k] / (noise.lambda[k] * noise.lambda[k]);
    return acc;
  };
  double integral = 0.0;
  bool monotone = true;
  double phi_prev = energy_phi({s.u[0], s.v[0]}, mu, pot, basis, noise);
  const double phi0 = phi_prev;
  for (std::size_t i = 1; i <= steps; ++i) {
    integral += 0.5 * dt * (q_inv_sq(s.v[i - 1]) + q_inv_sq(s.v[i]));
    const double phi_i = energy_phi({s.u[i], s.v[i]}, mu, pot, basis, noise);
    if (phi_i > phi_prev + 1e-12 * (1.0 + phi_prev)) monotone = false;
    phi_prev = phi_i;
  }
  const double drop = phi0 - phi_prev;
  const double rel = std::fabs(drop - 2.0 * integral) / drop;
  return {rel <= 1e-3 && monotone,
          fmt("relative identity error %.3e (tol 1e-3), energy monotone: %s",
              rel, monotone ? "yes" : "no")};
}

// --------------------------------------------------------------------------
// Shared test set for criteria 3 and 4: both potential families, N in {1,8},
// mu in {0.5, 2}.

struct ReversedCase {
  PotentialFamily family;
  double strength;
  int N;
  double mu;
};

const std::vector<ReversedCase>& reversed_cases() {
  static const std::vector<ReversedCase> cases = [] {
    std::vector<ReversedCase> cs;
    for (auto fam : {PotentialFamily::DecreasingB, PotentialFamily::NonnegativeB})
      for (int N : {1, 8})
        for (double mu : {0.5, 2.0})
          cs.push_back({fam, fam == PotentialFamily::DecreasingB ? 1.0 : 0.5,
                        N, mu});
    return cs;
  }();
  return cases;
}

// 3. Reversed-flow optimality: action of the reversed deterministic path
//    within 1% of V^mu(x, y).

Outcome criterion3() {
  CounterRng rng(10003, 0, 0);
  double worst = 0.0;
  for (const auto& c : reversed_cases()) {
    SpectralBasis basis = SpectralBasis::dirichlet_unit_interval(c.N, 0);
    NoiseSpec noise = NoiseSpec::power_law(basis, 0.0);
    PotentialSpec pot = PotentialSpec::make(c.family, c.strength);
    ModeVector x = random_modes(c.N, rng, 0.4);
    ModeVector y = random_modes(c.N, rng, 0.2);
    DiscretePath path =
        reversed_optimal_path_auto(x, y, c.mu, pot, noise, 1000.0, basis, 1e-6);
    const double J = action_wave(path, c.mu, pot, noise, basis).value;
    const double v = quasipotential_closed_form(x, &y, c.mu, pot, noise, basis);
    worst = std::max(worst, std::fabs(J - v) / v);
  }
  return {worst <= 0.01,
          fmt("max |action - V^mu|/V^mu = %.3e over 8 family/N/mu cases "
              "(tol 1e-2)", worst)};
}

// 4. Lower-bound property: no optimizer iterate falls below closed form - 1%
//    on the reversed-flow test set (pinned terminal velocity).

Outcome criterion4() {
  CounterRng rng(10004, 0, 0);
  double worst_margin = 1e300;
  bool ok = true;
  for (const auto& c : reversed_cases()) {
    SpectralBasis basis = SpectralBasis::dirichlet_unit_interval(c.N, 0);
    NoiseSpec noise = NoiseSpec::power_law(basis, 0.0);
    PotentialSpec pot = PotentialSpec::make(c.family, c.strength);
    ModeVector x = random_modes(c.N, rng, 0.4);
    ModeVector y = random_modes(c.N, rng, 0.2);
    const double T = std::max(8.0, 7.0 * c.mu);
    // dt small enough that the FD bias on the stiffest mode (alpha_8) stays
    // well inside the 1% floor slack.
    const std::size_t steps = static_cast<std::size_t>(T / 0.005);
    DiscretePath init = perturbed_reversed_init(x, y, c.mu, pot, noise, T,
                                                steps, basis, 0.1);
    QuasiPotentialReport rep =
        min_action_solve(x, &y, c.mu, T, steps, pot, noise, basis, init);
    const double floor = rep.closed_form - 0.01 * (1.0 + rep.closed_form);
    const double margin = rep.min_iterate_action - floor;
    worst_margin = std::min(worst_margin, margin);
    if (margin < 0.0) ok = false;
  }
  return {ok, fmt("min iterate-action margin above (V^mu - 1%%) floor: %.3e "
                  "over 8 minimization runs", worst_margin)};
}

// --------------------------------------------------------------------------
// 5. mu-independence of V_mu: free-terminal-velocity minima across
//    mu in {0.25, 1, 4} within 3% of V(x), |y*| <= 0.05 |x|; N = 4 nonlinear.

Outcome criterion5() {
  SpectralBasis basis = SpectralBasis::dirichlet_unit_interval(4, 0);
  NoiseSpec noise = NoiseSpec::power_law(basis, 0.0);
  PotentialSpec pot = PotentialSpec::make(PotentialFamily::DecreasingB, 0.5);
  ModeVector x = scale(ModeVector::unit(4, 1), 0.4);
  x[1] = -0.15;
  x[2] = 0.1;
  const double v = quasipotential_closed_form(x, nullptr, std::nullopt, pot,
                                              noise, basis);
  const ModeVector y0 = ModeVector::zeros(4);
  double worst_gap = 0.0, worst_y = 0.0;
  std::vector<double> minima;
  bool conv = true;
  for (double mu : {0.25, 1.0, 4.0}) {
    const double T = std::max(8.0, 7.0 * mu);
    const std::size_t steps = static_cast<std::size_t>(T / 0.005);
    DiscretePath init =
        perturbed_reversed_init(x, y0, mu, pot, noise, T, steps, basis, 0.1);
    QuasiPotentialReport rep =
        min_action_solve(x, nullptr, mu, T, steps, pot, noise, basis, init);
    conv = conv && rep.converged;
    minima.push_back(rep.numeric_min);
    worst_gap = std::max(worst_gap, std::fabs(rep.numeric_min - v) / v);
    worst_y = std::max(worst_y, rep.terminal_velocity_norm / h_norm(x));
  }
  double spread = 0.0;
  for (double a : minima)
    for (double b : minima)
      spread = std::max(spread, std::fabs(a - b) / v);
  const bool ok = conv && worst_gap <= 0.03 && spread <= 0.03 && worst_y <= 0.05;
  return {ok, fmt("max gap to V(x) %.3e, pairwise spread %.3e (tol 3e-2), "
                  "max |y*|/|x| %.3e (tol 5e-2)", worst_gap, spread, worst_y)};
}

// --------------------------------------------------------------------------
// 6. Gradient consistency: DF vs central differences of F on 50 random
//    fields per family, rel err <= 1e-5.

Outcome criterion6() {
  SpectralBasis basis = SpectralBasis::dirichlet_unit_interval(8, 0);
  CounterRng rng(10006, 0, 0);
  const double tau = 1e-5;
  double worst = 0.0;
  for (auto fam : {PotentialFamily::DecreasingB, PotentialFamily::NonnegativeB}) {
    PotentialSpec spec = PotentialSpec::make(fam, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
      ModeVector x = random_modes(8, rng), h = random_modes(8, rng);
      double lhs = 0.0;
      ModeVector df = eval_DF(x, spec, basis);
      for (int k = 0; k < 8; ++k) lhs += df[k] * h[k];
      const double fp = eval_F(add(x, scale(h, tau)), spec, basis);
      const double fm = eval_F(add(x, scale(h, -tau)), spec, basis);
      const double rhs = (fp - fm) / (2.0 * tau);
      worst = std::max(worst, std::fabs(lhs - rhs) / (1.0 + std::fabs(lhs)));
    }
  }
  return {worst <= 1e-5,
          fmt("max relative gradient error %.3e over 100 fields (tol 1e-5)",
              worst)};
}

// --------------------------------------------------------------------------
// 7. Semigroup exactness vs the RK4 oracle, including a critically damped
//    synthetic mode.

Outcome criterion7() {
  CounterRng rng(10007, 0, 0);
  double worst = 0.0;
  SpectralBasis basis = SpectralBasis::dirichlet_unit_interval(8, 0);
  for (double mu : {0.5, 1.0}) {
    PhaseState z0 = random_state(8, rng);
    for (double t : {0.1, 0.5}) {
      PhaseState zf = semigroup_step(z0, mu, t, false, basis);
      PhaseState za = semigroup_step(z0, mu, t, true, basis);
      for (int k = 0; k < 8; ++k) {
        oracle::ModeState rf =
            oracle::rk4_wave_mode(mu, basis.alpha[k], {z0.u[k], z0.v[k]}, t);
        oracle::ModeState ra = oracle::rk4_wave_mode_adjoint(
            mu, basis.alpha[k], {z0.u[k], z0.v[k]}, t);
        worst = std::max({worst, std::fabs(zf.u[k] - rf.u),
                          std::fabs(zf.v[k] - rf.v), std::fabs(za.u[k] - ra.u),
                          std::fabs(za.v[k] - ra.v)});
      }
    }
  }
  // Synthetic critical and near-critical modes at 4 mu alpha = 1.
  for (double mu : {0.5, 1.0}) {
    SpectralBasis crit = SpectralBasis::dirichlet_unit_interval(1, 0);
    for (double wobble : {0.0, 5e-9}) {
      crit.alpha[0] = (1.0 + wobble) / (4.0 * mu);
      PhaseState z0{ModeVector::unit(1, 1), ModeVector::unit(1, 1)};
      z0.v[0] = -0.4;
      for (double t : {0.5, 2.0}) {
        PhaseState zt = semigroup_step(z0, mu, t, false, crit);
        oracle::ModeState ref =
            oracle::rk4_wave_mode(mu, crit.alpha[0], {z0.u[0], z0.v[0]}, t);
        worst = std::max({worst, std::fabs(zt.u[0] - ref.u),
                          std::fabs(zt.v[0] - ref.v)});
      }
    }
  }
  return {worst <= 1e-8,
          fmt("max |semigroup - RK4| component error %.3e incl. critical "
              "branch (tol 1e-8)", worst)};
}

// --------------------------------------------------------------------------
// 8. Action decomposition: residual O(dt^2) under refinement; cross term
//    within 1e-3 of Phi_mu(z(0)) on decaying paths.

Outcome criterion8() {
  SpectralBasis basis = SpectralBasis::dirichlet_unit_interval(4, 0);
  NoiseSpec noise = NoiseSpec::power_law(basis, 0.0);
  PotentialSpec pot = PotentialSpec::make(PotentialFamily::DecreasingB, 0.5);
  const double mu = 1.0;

  auto smooth_path = [&](std::size_t steps) {
    TimeGrid grid(-1.0, 0.0, steps);
    std::vector<ModeVector> phi(grid.nodes(), ModeVector(4));
    for (std::size_t i = 0; i < grid.nodes(); ++i) {
      const double t = grid.node(i);
      phi[i][0] = 0.4 * std::sin(1.3 * t + 0.2);
      phi[i][1] = 0.3 * std::cos(0.8 * t) - 0.3;
      phi[i][2] = 0.2 * t * t;
      phi[i][3] = 0.15 * std::sin(2.1 * t);
    }
    return DiscretePath::from_positions(grid, std::move(phi));
  };
  const double r1 = std::fabs(
      action_decomposition_residual(smooth_path(100), mu, pot, noise, basis));
  const double r2 = std::fabs(
      action_decomposition_residual(smooth_path(200), mu, pot, noise, basis));
  const double r4 = std::fabs(
      action_decomposition_residual(smooth_path(400), mu, pot, noise, basis));
  const double o1 = oracle::order_from_errors(r1, r2);
  const double o2 = oracle::order_from_errors(r2, r4);

  CounterRng rng(10008, 0, 0);
  ModeVector x = random_modes(4, rng, 0.4), y = random_modes(4, rng, 0.2);
  DiscretePath rev =
      reversed_optimal_path_auto(x, y, mu, pot, noise, 1000.0, basis, 1e-8);
  ActionDecomposition dec = action_decomposition(rev, mu, pot, noise, basis);
  const double phi_end = energy_phi({x, y}, mu, pot, basis, noise);
  const double cross_err =
      std::fabs(dec.cross_quadrature - phi_end) / (1.0 + phi_end);

  const bool ok = o1 >= 1.7 && o2 >= 1.7 && cross_err <= 1e-3;
  return {ok, fmt("residual refinement orders %.2f, %.2f (need >= 1.7); "
                  "cross-term error %.3e vs Phi_mu(z(0)) (tol 1e-3)",
                  o1, o2, cross_err)};
}

// --------------------------------------------------------------------------
// 9. SK comparison: mean sup-deviation strictly decreasing across
//    mu in {0.1, 0.02, 0.004} with >= 95% one-sided confidence; 200 coupled
//    paths, eps = 0.01, N = 8, T = 2.

Outcome criterion9() {
  SpectralBasis basis = SpectralBasis::dirichlet_unit_interval(8, 0);
  NoiseSpec noise = NoiseSpec::power_law(basis, 0.0);
  SkConfig cfg;
  cfg.steps = 2000;  // dt = 1e-3 on [0, 2]
  cfg.z0 = PhaseState::zeros(8);
  cfg.z0.u = scale(ModeVector::unit(8, 1), 0.25);
  cfg.potential = PotentialSpec::make(PotentialFamily::DecreasingB, 1.0);
  cfg.seed = 20240601;
  cfg.n_threads = 1;
  SkTable tab = sk_compare({0.1, 0.02, 0.004}, 0.01, 2.0, 200, cfg, basis, noise);
  bool decreasing = true, confident = true;
  for (std::size_t i = 1; i < tab.rows.size(); ++i) {
    if (!(tab.rows[i].mean_deviation < tab.rows[i - 1].mean_deviation))
      decreasing = false;
    if (!(tab.rows[i].p_value_decrease <= 0.05)) confident = false;
  }
  return {decreasing && confident,
          fmt("mean deviations {%.4e, %.4e, %.4e}, Wilcoxon p {%.1e, %.1e} "
              "(strictly decreasing, p <= 0.05)",
              tab.rows[0].mean_deviation, tab.rows[1].mean_deviation,
              tab.rows[2].mean_deviation, tab.rows[1].p_value_decrease,
              tab.rows[2].p_value_decrease)};
}

// --------------------------------------------------------------------------
// 10. Exit-time asymptotics (exploratory): linear 1-mode heat case within 15%
//     of the BVP oracle across the eps schedule; eps log E tau increasing
//     toward the barrier; wave-vs-heat agreement at mu = 0.5 reported but not
//     build-breaking.

Outcome criterion10() {
  const double barrier = std::numbers::pi * std::numbers::pi;  // alpha_1 r^2
  // Discrete exit detection overshoots tau by O(sqrt(dt)), so each eps gets
  // its own dt (measured heat bias at these choices: +2.6%, +1.5%, ~+4%).
  // The smallest eps is the longest run and uses fewer paths. The wave
  // chain at mu = 0.5 is underdamped and exits ~15-19x slower (E tau ~ 1900
  // at the smallest eps); since its comparison is report-only it runs with
  // coarser steps and fewer paths to keep the criterion's wall time sane.
  const double eps_schedule[3] = {0.5 * barrier, 0.25 * barrier,
                                  0.125 * barrier};
  const double heat_dt[3] = {5e-5, 5e-5, 5e-5};
  const std::size_t heat_paths[3] = {2000, 2000, 1000};
  const double wave_dt[3] = {2e-4, 2e-4, 5e-4};
  const std::size_t wave_paths[3] = {400, 300, 150};

  auto run_one = [&](Equation eq, int i, double mu, double dt,
                     std::size_t paths, std::uint64_t seed) -> ExitRecord {
    ModelConfig mc;
    mc.N = 1;
    mc.M = 4;
    mc.mu = mu;
    mc.rho = 0.0;
    mc.potential_family = "zero";
    mc.potential_strength = 0.0;
    mc.dt = dt;
    mc.seed = seed;
    mc.paths = paths;
    mc.domain_radius = 1.0;
    ExitOptions opts;
    opts.eps_schedule = {eps_schedule[i]};
    auto recs = run_exit_mc(mc, eq, opts);
    return recs.empty() ? ExitRecord{} : recs[0];
  };

  ExitRecord heat[3], wave[3];
  double worst_rel = 0.0;
  bool valid = true, increasing = true;
  for (int i = 0; i < 3; ++i) {
    heat[i] = run_one(Equation::Heat, i, 1.0, heat_dt[i], heat_paths[i],
                      8675309);
    if (!heat[i].valid) valid = false;
    const double m0 = oracle::exit_time_bvp(barrier, eps_schedule[i], 1.0, 0.0);
    worst_rel = std::max(worst_rel, std::fabs(heat[i].mean_tau - m0) / m0);
    if (i > 0 && !(heat[i].eps_log_mean_tau > heat[i - 1].eps_log_mean_tau))
      increasing = false;
  }

  bool wave_ok = true;
  double max_z = 0.0;
  for (int i = 0; i < 3; ++i) {
    wave[i] = run_one(Equation::Wave, i, 0.5, wave_dt[i], wave_paths[i],
                      424243);
    if (!wave[i].valid) {
      wave_ok = false;
      break;
    }
    // delta-method sd of eps * log(mean tau)
    const double se_h = eps_schedule[i] * heat[i].std_error / heat[i].mean_tau;
    const double se_w = eps_schedule[i] * wave[i].std_error / wave[i].mean_tau;
    const double z =
        std::fabs(heat[i].eps_log_mean_tau - wave[i].eps_log_mean_tau) /
        std::sqrt(se_h * se_h + se_w * se_w);
    max_z = std::max(max_z, z);
  }
  const bool agree = wave_ok && max_z <= 2.576;  // 99% two-sided
  const bool ok = valid && worst_rel <= 0.15 && increasing;
  return {ok,
          fmt("heat vs BVP oracle max rel err %.3e (tol 0.15), eps log E tau "
              "{%.2f, %.2f, %.2f} increasing toward barrier %.2f: %s; "
              "wave(mu=0.5) eps log E tau {%.2f, %.2f, %.2f}, CI overlap "
              "max |z| = %.1f -> %s at finite eps (reported, non-breaking)",
              worst_rel, heat[0].eps_log_mean_tau, heat[1].eps_log_mean_tau,
              heat[2].eps_log_mean_tau, barrier, increasing ? "yes" : "no",
              wave[0].eps_log_mean_tau, wave[1].eps_log_mean_tau,
              wave[2].eps_log_mean_tau, max_z, agree ? "agree" : "disagree")};
}

using CriterionFn = Outcome (*)();
const CriterionFn kCriteria[10] = {criterion1, criterion2, criterion3,
                                   criterion4, criterion5, criterion6,
                                   criterion7, criterion8, criterion9,
                                   criterion10};

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) {
      only = std::atoi(argv[i + 1]);
      ++i;
    } else {
      std::fprintf(stderr, "usage: %s [--criterion N]\n", argv[0]);
      return 2;
    }
  }
  if (only < 0 || only > 10) {
    std::fprintf(stderr, "criterion must be in 1..10\n");
    return 2;
  }

  bool all_pass = true;
  for (int n = 1; n <= 10; ++n) {
    if (only != 0 && n != only) continue;
    Outcome out;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      out = kCriteria[n - 1]();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    std::printf("criterion %d: %s — %s [%.1fs]\n", n,
                out.pass ? "PASS" : "FAIL", out.detail.c_str(), secs);
    std::fflush(stdout);
    if (!out.pass) all_pass = false;
  }
  return all_pass ? 0 : 1;
}
