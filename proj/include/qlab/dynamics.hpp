#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "qlab/potential.hpp"
#include "qlab/rng.hpp"
#include "qlab/spectral.hpp"

// Time integration of the damped stochastic wave equation, its zero-mass heat
// limit, the controlled skeleton equations, the control map L^mu, and the
// Smoluchowski-Kramers comparison experiment.
//
// Scheme: exponential (mild) integrators with the exact per-mode linear
// propagators. Drift and control are integrated with the exponential
// trapezoidal (Lawson-Heun) rule, which is second order, reproduces the pure
// linear flow exactly, and unrolls to exactly the trapezoid quadrature of the
// control convolution, so apply_control_map and integrate_wave agree to
// rounding. The stochastic convolution increment for the wave equation is
// first order, frozen at the left endpoint: S_mu(dt) Q_mu dW. The heat noise
// increment uses the exact per-mode Ornstein-Uhlenbeck variance.

namespace qlab {

struct TimeGrid {
  double t0 = 0.0;
  double t1 = 1.0;
  std::size_t steps = 1;

  TimeGrid() = default;
  TimeGrid(double a, double b, std::size_t n) : t0(a), t1(b), steps(n) {}

  double dt() const { return (t1 - t0) / static_cast<double>(steps); }
  std::size_t nodes() const { return steps + 1; }
  double node(std::size_t i) const {
    return i == steps ? t1 : t0 + static_cast<double>(i) * dt();
  }
  // Throws std::invalid_argument unless t1 > t0 and steps >= 1.
  void validate() const;
};

struct ControlSignal {
  std::vector<ModeVector> values;  // one entry per grid node

  static ControlSignal zeros(const TimeGrid& grid, std::size_t n_modes);
  // Trapezoid quadrature of |psi(t)|_H^2 over the grid.
  double l2_norm_sq(const TimeGrid& grid) const;
};

struct TrajectorySample {
  TimeGrid grid;
  std::vector<ModeVector> u;  // position coefficients at every node
  std::vector<ModeVector> v;  // velocity coefficients; empty for heat samples
  std::uint64_t seed = 0;
  double eps = 0.0;

  bool has_velocity() const { return !v.empty(); }
};

// ---------------------------------------------------------------------------
// Incremental stepping engines. integrate_wave / integrate_heat are thin
// wrappers over these; the exit-time Monte Carlo drives them directly because
// it needs persistent noise streams over runs whose length is not known in
// advance (re-invoking the integrators would replay the same increments).

class WaveStepper {
 public:
  // psi, if given, must cover every node the stepper will visit.
  WaveStepper(const PhaseState& z0, double mu, const PotentialSpec& pot,
              const NoiseSpec& noise, double dt, double eps,
              std::uint64_t seed, const SpectralBasis& basis,
              std::uint64_t path_index = 0, const ControlSignal* psi = nullptr);
  void step();  // advance one dt
  const PhaseState& state() const { return z_; }

 private:
  const PotentialSpec& pot_;
  const NoiseSpec& noise_;
  const SpectralBasis& basis_;
  const ControlSignal* psi_;
  double mu_, dt_, eps_, root_eps_dt_;
  ModePropagator prop_;
  std::vector<CounterRng> streams_;
  PhaseState z_;
  ModeVector a_n_, a_star_, u_star_;
  std::size_t node_ = 0;
};

class HeatStepper {
 public:
  HeatStepper(const ModeVector& u0, const PotentialSpec& pot,
              const NoiseSpec& noise, double dt, double eps,
              std::uint64_t seed, const SpectralBasis& basis,
              std::uint64_t path_index = 0, const ControlSignal* psi = nullptr);
  void step();
  const ModeVector& state() const { return u_; }

 private:
  const PotentialSpec& pot_;
  const NoiseSpec& noise_;
  const SpectralBasis& basis_;
  const ControlSignal* psi_;
  double dt_, eps_;
  std::vector<double> decay_, ou_std_;
  std::vector<CounterRng> streams_;
  ModeVector u_;
  ModeVector f_n_, f_star_, u_star_;
  std::size_t node_ = 0;
};

// Mild solution of mu u'' = Au - u' + B(u) + Q psi + sqrt(eps) dW_Q on the
// grid, started from z0. psi may be null (no control). Noise streams are keyed
// by (seed, path_index, mode), one normal draw per mode per step, so replicas
// and coupled equations can share increments deterministically.
TrajectorySample integrate_wave(const PhaseState& z0, double mu,
                                const PotentialSpec& pot,
                                const NoiseSpec& noise, const TimeGrid& grid,
                                const ControlSignal* psi, double eps,
                                std::uint64_t seed, const SpectralBasis& basis,
                                std::uint64_t path_index = 0);

// Mild solution of u' = Au + B(u) + Q psi + sqrt(eps) dW_Q. Same keying and
// draw order as integrate_wave, which is what makes common-random-number
// coupling across the two equations exact.
TrajectorySample integrate_heat(const ModeVector& u0, const PotentialSpec& pot,
                                const NoiseSpec& noise, const TimeGrid& grid,
                                const ControlSignal* psi, double eps,
                                std::uint64_t seed, const SpectralBasis& basis,
                                std::uint64_t path_index = 0);

// L^mu psi = Int_grid S_mu(t1 - s) Q_mu psi(s) ds by trapezoid quadrature,
// evaluated with the same recursion as integrate_wave (F == 0, z0 = 0,
// eps = 0), so the two agree at the terminal node to rounding.
PhaseState apply_control_map(double mu, const TimeGrid& grid,
                             const ControlSignal& psi,
                             const SpectralBasis& basis,
                             const NoiseSpec& noise);

// ---------------------------------------------------------------------------
// Smoluchowski-Kramers comparison

struct SkConfig {
  std::size_t steps = 1000;   // time steps on [0, T]
  PhaseState z0;              // wave initial state; the heat run starts at z0.u
  PotentialSpec potential;    // may be zero()
  std::uint64_t seed = 0;
  int n_threads = 1;
};

struct SkRow {
  double mu = 0.0;
  double mean_deviation = 0.0;  // E sup_{t<=T} |u^mu(t) - u(t)|_H
  double std_error = 0.0;
  // One-sided Wilcoxon signed-rank p-value for "deviation at this mu is
  // smaller than at the previous (larger) mu", paired per path; 1.0 for the
  // first row.
  double p_value_decrease = 1.0;
};

struct SkTable {
  std::vector<SkRow> rows;
  // deviations[i][p]: sup-norm deviation of path p at mu_list[i].
  std::vector<std::vector<double>> deviations;
};

// Couples the wave and heat equations path by path with identical Brownian
// increments per mode (common random numbers) and records the sup-norm
// deviation sup_{t<=T} |u^mu_eps(t) - u_eps(t)|_H for each mu in mu_list
// (decreasing). Monte Carlo replicas run in parallel; the reduction is an
// ordered fold over path indices, so results do not depend on thread count.
SkTable sk_compare(const std::vector<double>& mu_list, double eps, double T,
                   std::size_t n_paths, const SkConfig& cfg,
                   const SpectralBasis& basis, const NoiseSpec& noise);

}  // namespace qlab
