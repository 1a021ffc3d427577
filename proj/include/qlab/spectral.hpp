#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

// Spectral core: Dirichlet sine eigenbasis on (0,1), Sobolev norms, the
// operators A, Q^p, C_mu, the energy Phi_mu, and the exact per-mode wave/heat
// semigroups together with the decay-envelope fit and the controllability
// Gramian integral.
//
// Conventions.  A mode vector stores <u, e_k> for e_k(xi) = sqrt(2) sin(k pi xi),
// alpha_k = (k pi)^2.  Phase space is H = H^0 x H^-1: the velocity component is
// stored as plain coefficients and the alpha_k^{-1} weight is applied at norm
// evaluation time only.

namespace qlab {

struct PotentialSpec;  // potentials module

// ---------------------------------------------------------------------------

struct ModeVector {
  std::vector<double> c;

  ModeVector() = default;
  explicit ModeVector(std::size_t n) : c(n, 0.0) {}

  static ModeVector zeros(std::size_t n) { return ModeVector(n); }
  // Unit coefficient on mode k (1-based, matching e_k).
  static ModeVector unit(std::size_t n, std::size_t k);

  std::size_t size() const { return c.size(); }
  double& operator[](std::size_t i) { return c[i]; }
  double operator[](std::size_t i) const { return c[i]; }
  double* data() { return c.data(); }
  const double* data() const { return c.data(); }
};

ModeVector add(const ModeVector& a, const ModeVector& b);
ModeVector sub(const ModeVector& a, const ModeVector& b);
ModeVector scale(const ModeVector& a, double s);
// a += s*b
void axpy_inplace(ModeVector& a, double s, const ModeVector& b);
// plain l2 = H^0 norm
double h_norm(const ModeVector& a);

struct PhaseState {
  ModeVector u;  // position, H^0 role
  ModeVector v;  // velocity, H^-1 role

  PhaseState() = default;
  PhaseState(ModeVector uu, ModeVector vv);
  static PhaseState zeros(std::size_t n);
  std::size_t size() const { return u.size(); }
};

// ---------------------------------------------------------------------------

struct SpectralBasis {
  int N = 0;                  // mode count
  int M = 0;                  // collocation resolution; interior grid xi_j = j/M
  std::vector<double> alpha;  // alpha_k = (k pi)^2, strictly increasing

  // Pseudospectral transform tables for the interior grid (M-1 points):
  // synth is (M-1) x N row-major with synth[j][k] = e_{k+1}(xi_{j+1});
  // anal  is N x (M-1) row-major with anal[k][j] = (1/M) e_{k+1}(xi_{j+1}).
  // anal * synth = I_N exactly (discrete sine orthogonality) for N <= M-1.
  std::vector<double> synth;
  std::vector<double> anal;

  // Canonical unit-interval realization; grid_size 0 means the default M = 4N.
  static SpectralBasis dirichlet_unit_interval(int N, int grid_size = 0);

  // Synthesis u(xi_j) for j = 1..M-1 and analysis back to N coefficients.
  void to_grid(const ModeVector& u, std::vector<double>& values) const;
  ModeVector from_grid(const std::vector<double>& values) const;
};

struct NoiseSpec {
  std::vector<double> lambda;  // eigenvalues of Q, all > 0
  double rho = 0.0;            // lambda_k = alpha_k^(-rho/2)

  static NoiseSpec power_law(const SpectralBasis& basis, double rho);
  // Partial sum over the first n modes of lambda_k^2 / alpha_k (Hypothesis-1 sum).
  double hypothesis1_partial_sum(const SpectralBasis& basis, int n) const;
};

// ---------------------------------------------------------------------------
// Norms, diagonal operators, energy

// |u|_{H^delta}^2 = sum_k alpha_k^delta u_k^2
double sobolev_norm_sq(const ModeVector& u, double delta,
                       const SpectralBasis& basis);

// |z|_{H^0 x H^-1}^2 = |u|^2 + |v|_{H^-1}^2
double phase_norm_sq(const PhaseState& z, const SpectralBasis& basis);

// mode k scaled by -alpha_k
ModeVector apply_A(const ModeVector& u, const SpectralBasis& basis);

// mode k scaled by lambda_k^p; throws std::overflow_error if not representable
ModeVector apply_Q_power(const ModeVector& u, double p, const NoiseSpec& noise);

// |C_mu^{sign/2} z|^2 in the H^0 x H^-1 pairing:
//   sum_k (lambda_k^2/(2 alpha_k))^sign u_k^2 + (lambda_k^2/(2 mu alpha_k^2))^sign v_k^2
// with sign = +1 or -1.
double cmu_quadratic(const PhaseState& z, double mu, int sign,
                     const SpectralBasis& basis, const NoiseSpec& noise);

// Phi_mu(x,y) = |(-A)^{1/2} Q^{-1} x|_H^2 + mu |Q^{-1} y|_H^2 + 2 F(x)
double energy_phi(const PhaseState& z, double mu, const PotentialSpec& pot,
                  const SpectralBasis& basis, const NoiseSpec& noise);

// ---------------------------------------------------------------------------
// Semigroups

// Per-mode 2x2 propagator entries for S_mu(t) (or its H-adjoint S_mu^*(t)),
// acting on stacked (u, v) coefficient arrays.
struct ModePropagator {
  std::vector<double> e11, e12, e21, e22;
  std::size_t size() const { return e11.size(); }
};

// Exact matrix exponential of the per-mode generator.  Forward generator per
// mode: d/dt (u,v) = (v, -(alpha/mu) u - v/mu).  Adjoint (w.r.t. H^0 x H^-1):
// d/dt (f,g) = (-g/mu, alpha f - g/mu).  Near-critical modes
// (|1 - 4 mu alpha_k| < 1e-8) use the degenerate series branch.
ModePropagator wave_propagator(double mu, double t, const SpectralBasis& basis,
                               bool adjoint = false);

void apply_propagator(const ModePropagator& prop, PhaseState& z);

PhaseState semigroup_step(const PhaseState& z, double mu, double t,
                          bool adjoint, const SpectralBasis& basis);

// mode k scaled by exp(-alpha_k t)
ModeVector heat_semigroup_step(const ModeVector& u, double t,
                               const SpectralBasis& basis);

// Operator norm of S_mu(t) on H^0 x H^-1 (max over modes of the weighted 2x2
// spectral norm).
double semigroup_operator_norm(double mu, double t, const SpectralBasis& basis);

struct SemigroupDecayEstimate {
  double M_mu = 1.0;
  double omega_mu = 0.0;
  double T_mu = 0.0;
};

// Envelope fit ||S_mu(t)|| <= M_mu exp(-omega_mu t): least squares on log
// norms over t in [T/2, T] with T = 20 mu, M_mu raised so the bound holds at
// every sampled t; T_mu solves ((1+sqrt(mu))/(1^sqrt(mu)))^2 M^2 e^{-2 w T} = 1/2.
// Throws std::runtime_error if the sampled norms are not eventually decreasing.
SemigroupDecayEstimate estimate_decay(double mu, const SpectralBasis& basis);

// ---------------------------------------------------------------------------
// Controllability Gramian integral
//
// gramian_integral returns (1/2) Int_0^Delta |Q_mu^* S_mu^*(s) z|_H^2 ds with
// Q_mu^*(u,v) = (1/mu) (-A)^{-1} Q v, by composite Gauss-Legendre quadrature.
// The exact spectral value of the same quantity is
//   (1/2) (|C_mu^{1/2} z|^2 - |C_mu^{1/2} S_mu^*(Delta) z|^2),
// i.e. gramian_closed_form below; the identity is the acceptance target.
double gramian_integral(const PhaseState& z, double mu, double Delta,
                        int panels, const SpectralBasis& basis,
                        const NoiseSpec& noise);

double gramian_closed_form(const PhaseState& z, double mu, double Delta,
                           const SpectralBasis& basis, const NoiseSpec& noise);

}  // namespace qlab
