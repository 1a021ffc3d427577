#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "qlab/dynamics.hpp"
#include "qlab/potential.hpp"
#include "qlab/spectral.hpp"

// Rate functionals I^mu and I, their completing-the-square rewrite, the
// closed-form quasi-potentials V^mu / V / V_mu, the reversed-flow optimal
// path, and a direct minimum-action solver.
//
// Conventions. Paths live on a uniform grid, positions only; time derivatives
// are cached second-order finite differences (central in the interior,
// one-sided at the ends). The wave action is
//   I^mu = 1/2 Int |Q^{-1}(mu phi'' + phi' - A phi + Q^2 DF(phi))|_H^2 dt
// by trapezoid quadrature, and the heat action drops the mu phi'' term. Both
// carry the 1/2 prefactor of the rate-functional definition.

namespace qlab {

struct DiscretePath {
  TimeGrid grid;
  std::vector<ModeVector> phi;    // positions at nodes
  std::vector<ModeVector> dphi;   // cached phi'
  std::vector<ModeVector> ddphi;  // cached phi''

  // Builds the derivative caches. Requires >= 3 nodes; with exactly 3 nodes
  // the end second derivatives fall back to the central 3-point stencil.
  static DiscretePath from_positions(const TimeGrid& grid,
                                     std::vector<ModeVector> positions);

  // Sub-path over node indices [i0, i1]. Derivative data is inherited from
  // the parent (not recomputed), so trapezoid additivity of the action across
  // a split is exact.
  DiscretePath slice(std::size_t i0, std::size_t i1) const;

  std::size_t nodes() const { return phi.size(); }
  const ModeVector& terminal_velocity() const { return dphi.back(); }
};

// Straight-line ramp from 0 to x on [-T, 0]; the generic optimizer init.
DiscretePath linear_ramp_path(const ModeVector& x, double T, std::size_t steps);

// Optimizer initialization for the wave sweeps: the reversed deterministic
// path, multiplied by the smooth bump 1 + perturb*sin(pi (t+T)/T) (endpoints
// untouched) and ramped to exactly 0 over the first tenth of the nodes, so it
// satisfies the fixed-endpoint constraints while being visibly suboptimal.
DiscretePath perturbed_reversed_init(const ModeVector& x, const ModeVector& y,
                                     double mu, const PotentialSpec& pot,
                                     const NoiseSpec& noise, double T,
                                     std::size_t steps,
                                     const SpectralBasis& basis,
                                     double perturb);

struct ActionValue {
  double value = 0.0;
  // Trapezoid-rule error estimate (dt^2/12)|s'(t1) - s'(t0)| from one-sided
  // differences of the integrand s.
  double quadrature_error_estimate = 0.0;
};

// I^mu over the path's grid. Throws std::overflow_error if some 1/lambda_k^2
// is not representable (ill-posed noise config); std::invalid_argument if the
// path has fewer than 3 nodes.
ActionValue action_wave(const DiscretePath& path, double mu,
                        const PotentialSpec& pot, const NoiseSpec& noise,
                        const SpectralBasis& basis);

// I (heat), same quadrature without the mu phi'' term.
ActionValue action_heat(const DiscretePath& path, const PotentialSpec& pot,
                        const NoiseSpec& noise, const SpectralBasis& basis);

// Completing-the-square decomposition of the action:
//   direct             = I^mu(path)                       (V-form)
//   reversed_quadratic = 1/2 Int |Q^{-1} W|^2              (reversed drift sign)
//   cross_quadrature   = Int d/dt Phi_mu evaluated through the FD chain rule
//   cross_boundary     = Phi_mu(z(t1)) - Phi_mu(z(t0))     (boundary evaluation)
// Pointwise algebra gives direct = reversed_quadratic + cross_quadrature to
// rounding; the reported residual uses the boundary form of the cross term,
// so it measures the FD/quadrature mismatch and is O(dt^2) on smooth paths.
struct ActionDecomposition {
  double direct = 0.0;
  double reversed_quadratic = 0.0;
  double cross_quadrature = 0.0;
  double cross_boundary = 0.0;
  double residual() const { return reversed_quadratic + cross_boundary - direct; }
};

// mu present: wave decomposition with energy Phi_mu; mu absent: heat analogue
// with Phi = V (no velocity term).
ActionDecomposition action_decomposition(const DiscretePath& path,
                                         std::optional<double> mu,
                                         const PotentialSpec& pot,
                                         const NoiseSpec& noise,
                                         const SpectralBasis& basis);

double action_decomposition_residual(const DiscretePath& path, double mu,
                                     const PotentialSpec& pot,
                                     const NoiseSpec& noise,
                                     const SpectralBasis& basis);

// V^mu(x,y) = |(-A)^{1/2}Q^{-1}x|^2 + 2F(x) + mu|Q^{-1}y|^2 when y and mu are
// given; V(x) (no velocity term) when both are absent. y without mu is
// rejected; mu with y == nullptr treats y = 0 (V^mu(x,0) = V(x)).
double quasipotential_closed_form(const ModeVector& x, const ModeVector* y,
                                  std::optional<double> mu,
                                  const PotentialSpec& pot,
                                  const NoiseSpec& noise,
                                  const SpectralBasis& basis);

// Reversed-flow optimal path: integrate the deterministic damped wave
// equation from (x, -y) for time T, then reverse time (and implicitly negate
// the velocity). The result lives on [-T, 0] and ends at (x, y).
DiscretePath reversed_optimal_path(const ModeVector& x, const ModeVector& y,
                                   double mu, const PotentialSpec& pot,
                                   const NoiseSpec& noise, double T,
                                   std::size_t steps,
                                   const SpectralBasis& basis);

// Same, with the horizon chosen automatically: integrate in doubling chunks
// until Phi_mu(z~(T)) <= tail_fraction * Phi_mu(x, y) (throws
// std::runtime_error if that never happens within the cap).
DiscretePath reversed_optimal_path_auto(const ModeVector& x,
                                        const ModeVector& y, double mu,
                                        const PotentialSpec& pot,
                                        const NoiseSpec& noise,
                                        double steps_per_unit_time,
                                        const SpectralBasis& basis,
                                        double tail_fraction = 1e-4);

// ---------------------------------------------------------------------------
// Direct minimization

struct MinActionOptions {
  std::size_t max_iters = 5000;
  double grad_tol = 1e-8;  // stop when ||g|| <= grad_tol * (1 + |value|)
  std::size_t memory = 12;
  double armijo_c1 = 1e-4;
  std::size_t max_backtracks = 60;
  // Secondary stop: after stall_patience consecutive accepted steps whose
  // decrease is below ftol * (1 + |value|), report convergence (progress has
  // reached roundoff scale even though the gradient gate was not met).
  double ftol = 1e-9;
  std::size_t stall_patience = 25;
};

struct QuasiPotentialReport {
  double closed_form = 0.0;
  double numeric_min = 0.0;
  double gap = 0.0;  // numeric_min - closed_form
  DiscretePath path;
  std::size_t iterations = 0;
  bool converged = false;
  double terminal_velocity_norm = 0.0;  // |dphi(0)|_H of the returned path
  // Least action seen over every evaluated candidate (accepted iterates and
  // line-search trials) -- the lower-bound property is checked against this.
  double min_iterate_action = 0.0;
};

// Minimizes the discrete action over interior nodes with fixed endpoints
// phi(-T) = 0 and phi(0) = x_target. Cases:
//   mu set, y_target set:  wave action, terminal velocity pinned to y_target
//                          through the one-sided stencil (closed form V^mu(x,y));
//   mu set, y_target null: wave action, free terminal velocity (V_mu(x) = V(x));
//   mu absent:             heat action (V(x)); y_target must be null.
// init must have steps+1 nodes spanning length T with matching endpoints.
QuasiPotentialReport min_action_solve(const ModeVector& x_target,
                                      const ModeVector* y_target,
                                      std::optional<double> mu, double T,
                                      std::size_t steps,
                                      const PotentialSpec& pot,
                                      const NoiseSpec& noise,
                                      const SpectralBasis& basis,
                                      const DiscretePath& init,
                                      const MinActionOptions& opts = {});

}  // namespace qlab
