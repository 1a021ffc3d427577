#include "qlab/spectral.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "qlab/kernels.hpp"

namespace qlab {

// ---------------------------------------------------------------------------
// ModeVector / PhaseState

ModeVector ModeVector::unit(std::size_t n, std::size_t k) {
  ModeVector u(n);
  assert(k >= 1 && k <= n);
  u.c[k - 1] = 1.0;
  return u;
}

ModeVector add(const ModeVector& a, const ModeVector& b) {
  ModeVector out(a.size());
  kern::axpby(out.data(), 1.0, a.data(), 1.0, b.data(), a.size());
  return out;
}

ModeVector sub(const ModeVector& a, const ModeVector& b) {
  ModeVector out(a.size());
  kern::axpby(out.data(), 1.0, a.data(), -1.0, b.data(), a.size());
  return out;
}

ModeVector scale(const ModeVector& a, double s) {
  ModeVector out(a.size());
  kern::axpby(out.data(), s, a.data(), 0.0, a.data(), a.size());
  return out;
}

void axpy_inplace(ModeVector& a, double s, const ModeVector& b) {
  kern::axpby(a.data(), 1.0, a.data(), s, b.data(), a.size());
}

double h_norm(const ModeVector& a) {
  return std::sqrt(kern::dot(a.data(), a.data(), a.size()));
}

PhaseState::PhaseState(ModeVector uu, ModeVector vv)
    : u(std::move(uu)), v(std::move(vv)) {
  assert(u.size() == v.size());
}

PhaseState PhaseState::zeros(std::size_t n) {
  return PhaseState(ModeVector(n), ModeVector(n));
}

// ---------------------------------------------------------------------------
// SpectralBasis / NoiseSpec

SpectralBasis SpectralBasis::dirichlet_unit_interval(int N, int grid_size) {
  if (N < 1) throw std::invalid_argument("basis: N must be >= 1");
  SpectralBasis b;
  b.N = N;
  b.M = grid_size > 0 ? grid_size : 4 * N;
  if (b.M < 2 * N)
    throw std::invalid_argument("basis: grid_size must be >= 2N");
  b.alpha.resize(N);
  const double pi = std::numbers::pi;
  for (int k = 1; k <= N; ++k) b.alpha[k - 1] = (k * pi) * (k * pi);

  const int J = b.M - 1;  // interior points xi_j = j/M, j = 1..M-1
  b.synth.resize(static_cast<std::size_t>(J) * N);
  b.anal.resize(static_cast<std::size_t>(N) * J);
  const double rt2 = std::numbers::sqrt2;
  for (int j = 1; j <= J; ++j) {
    for (int k = 1; k <= N; ++k) {
      const double e = rt2 * std::sin(k * pi * static_cast<double>(j) / b.M);
      b.synth[static_cast<std::size_t>(j - 1) * N + (k - 1)] = e;
      b.anal[static_cast<std::size_t>(k - 1) * J + (j - 1)] = e / b.M;
    }
  }
  return b;
}

void SpectralBasis::to_grid(const ModeVector& u,
                            std::vector<double>& values) const {
  assert(static_cast<int>(u.size()) == N);
  values.resize(M - 1);
  kern::matvec(synth.data(), u.data(), values.data(), M - 1, N);
}

ModeVector SpectralBasis::from_grid(const std::vector<double>& values) const {
  assert(static_cast<int>(values.size()) == M - 1);
  ModeVector u(N);
  kern::matvec(anal.data(), values.data(), u.data(), N, M - 1);
  return u;
}

NoiseSpec NoiseSpec::power_law(const SpectralBasis& basis, double rho) {
  if (rho < 0.0) throw std::invalid_argument("noise: rho must be >= 0");
  NoiseSpec q;
  q.rho = rho;
  q.lambda.resize(basis.alpha.size());
  for (std::size_t k = 0; k < q.lambda.size(); ++k)
    q.lambda[k] = std::pow(basis.alpha[k], -rho / 2.0);
  return q;
}

double NoiseSpec::hypothesis1_partial_sum(const SpectralBasis& basis,
                                          int n) const {
  double s = 0.0;
  const int lim = std::min<int>(n, static_cast<int>(lambda.size()));
  for (int k = 0; k < lim; ++k) s += lambda[k] * lambda[k] / basis.alpha[k];
  return s;
}

// ---------------------------------------------------------------------------
// Norms, diagonal operators, energy

double sobolev_norm_sq(const ModeVector& u, double delta,
                       const SpectralBasis& basis) {
  const std::size_t n = u.size();
  if (delta == 0.0) return kern::dot(u.data(), u.data(), n);
  std::vector<double> w(n);
  for (std::size_t k = 0; k < n; ++k) w[k] = std::pow(basis.alpha[k], delta);
  return kern::weighted_sumsq(w.data(), u.data(), n);
}

double phase_norm_sq(const PhaseState& z, const SpectralBasis& basis) {
  return sobolev_norm_sq(z.u, 0.0, basis) + sobolev_norm_sq(z.v, -1.0, basis);
}

ModeVector apply_A(const ModeVector& u, const SpectralBasis& basis) {
  ModeVector out(u.size());
  std::vector<double> w(u.size());
  for (std::size_t k = 0; k < u.size(); ++k) w[k] = -basis.alpha[k];
  kern::hadamard(out.data(), w.data(), u.data(), u.size());
  return out;
}

ModeVector apply_Q_power(const ModeVector& u, double p,
                         const NoiseSpec& noise) {
  ModeVector out(u.size());
  std::vector<double> w(u.size());
  for (std::size_t k = 0; k < u.size(); ++k) {
    w[k] = std::pow(noise.lambda[k], p);
    if (!std::isfinite(w[k]))
      throw std::overflow_error("apply_Q_power: lambda^p not representable");
  }
  kern::hadamard(out.data(), w.data(), u.data(), u.size());
  return out;
}

double cmu_quadratic(const PhaseState& z, double mu, int sign,
                     const SpectralBasis& basis, const NoiseSpec& noise) {
  assert(sign == 1 || sign == -1);
  const std::size_t n = z.size();
  std::vector<double> wu(n), wv(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double l2 = noise.lambda[k] * noise.lambda[k];
    const double a = basis.alpha[k];
    const double cu = l2 / (2.0 * a);
    const double cv = l2 / (2.0 * mu * a * a);
    wu[k] = sign == 1 ? cu : 1.0 / cu;
    wv[k] = sign == 1 ? cv : 1.0 / cv;
  }
  return kern::weighted_sumsq(wu.data(), z.u.data(), n) +
         kern::weighted_sumsq(wv.data(), z.v.data(), n);
}

// ---------------------------------------------------------------------------
// Semigroups

namespace {

// Entries of exp(t*G) for the 2x2 generator G with trace tr and determinant
// det, written as exp(s t) [c I + sh (G - s I)] with s = tr/2 and
// q^2 = s^2 - det.  The near-degenerate branch (|q t| small) uses the series
// of cosh/sinhc to avoid cancellation between nearly equal eigenvalues.
struct Exp2x2 {
  double c;   // cosh(q t) or cos(w t)
  double sh;  // sinh(q t)/q or sin(w t)/w
  double ef;  // exp(s t)
};

Exp2x2 exp2x2_parts(double tr, double det, double t, bool degenerate_hint) {
  const double s = 0.5 * tr;
  const double q2 = s * s - det;
  Exp2x2 r;
  r.ef = std::exp(s * t);
  const double q2t2 = q2 * t * t;
  if (degenerate_hint || std::abs(q2t2) < 1e-12) {
    // cosh(qt) = 1 + (qt)^2/2 + (qt)^4/24, sinh(qt)/q = t(1 + (qt)^2/6 + (qt)^4/120)
    r.c = 1.0 + q2t2 * (0.5 + q2t2 / 24.0);
    r.sh = t * (1.0 + q2t2 * (1.0 / 6.0 + q2t2 / 120.0));
  } else if (q2 > 0.0) {
    const double q = std::sqrt(q2);
    r.c = std::cosh(q * t);
    r.sh = std::sinh(q * t) / q;
  } else {
    const double w = std::sqrt(-q2);
    r.c = std::cos(w * t);
    r.sh = std::sin(w * t) / w;
  }
  return r;
}

}  // namespace

ModePropagator wave_propagator(double mu, double t, const SpectralBasis& basis,
                               bool adjoint) {
  if (mu <= 0.0) throw std::invalid_argument("wave_propagator: mu must be > 0");
  if (t < 0.0) throw std::invalid_argument("wave_propagator: t must be >= 0");
  const std::size_t n = basis.alpha.size();
  ModePropagator P;
  P.e11.resize(n);
  P.e12.resize(n);
  P.e21.resize(n);
  P.e22.resize(n);
  const double tr = -1.0 / mu;
  for (std::size_t k = 0; k < n; ++k) {
    const double a = basis.alpha[k];
    const double det = a / mu;
    const bool crit = std::abs(1.0 - 4.0 * mu * a) < 1e-8;
    const Exp2x2 p = exp2x2_parts(tr, det, t, crit);
    const double s = 0.5 * tr;
    // generator entries
    double g11, g12, g21, g22;
    if (!adjoint) {
      g11 = 0.0;
      g12 = 1.0;
      g21 = -a / mu;
      g22 = -1.0 / mu;
    } else {
      g11 = 0.0;
      g12 = -1.0 / mu;
      g21 = a;
      g22 = -1.0 / mu;
    }
    P.e11[k] = p.ef * (p.c + p.sh * (g11 - s));
    P.e12[k] = p.ef * (p.sh * g12);
    P.e21[k] = p.ef * (p.sh * g21);
    P.e22[k] = p.ef * (p.c + p.sh * (g22 - s));
  }
  return P;
}

void apply_propagator(const ModePropagator& prop, PhaseState& z) {
  kern::pair_rot(z.u.data(), z.v.data(), prop.e11.data(), prop.e12.data(),
                 prop.e21.data(), prop.e22.data(), z.size());
}

PhaseState semigroup_step(const PhaseState& z, double mu, double t,
                          bool adjoint, const SpectralBasis& basis) {
  PhaseState out = z;
  const ModePropagator P = wave_propagator(mu, t, basis, adjoint);
  apply_propagator(P, out);
  return out;
}

ModeVector heat_semigroup_step(const ModeVector& u, double t,
                               const SpectralBasis& basis) {
  if (t < 0.0)
    throw std::invalid_argument("heat_semigroup_step: t must be >= 0");
  ModeVector out(u.size());
  std::vector<double> w(u.size());
  for (std::size_t k = 0; k < u.size(); ++k)
    w[k] = std::exp(-basis.alpha[k] * t);
  kern::hadamard(out.data(), w.data(), u.data(), u.size());
  return out;
}

double semigroup_operator_norm(double mu, double t,
                               const SpectralBasis& basis) {
  const ModePropagator P = wave_propagator(mu, t, basis, false);
  double norm = 0.0;
  for (std::size_t k = 0; k < P.size(); ++k) {
    // Weighted matrix B = W^{1/2} E W^{-1/2} with W = diag(1, 1/alpha_k); the
    // H^0 x H^-1 operator norm of the mode block is the largest singular
    // value of B.
    const double ra = std::sqrt(basis.alpha[k]);
    const double b11 = P.e11[k];
    const double b12 = P.e12[k] * ra;
    const double b21 = P.e21[k] / ra;
    const double b22 = P.e22[k];
    const double g = b11 * b11 + b12 * b12 + b21 * b21 + b22 * b22;
    const double d = std::abs(b11 * b22 - b12 * b21);
    const double disc = std::max(0.0, g * g - 4.0 * d * d);
    const double smax2 = 0.5 * (g + std::sqrt(disc));
    norm = std::max(norm, std::sqrt(smax2));
  }
  return norm;
}

SemigroupDecayEstimate estimate_decay(double mu, const SpectralBasis& basis) {
  const double T = 20.0 * mu;
  const int n_samples = 80;
  std::vector<double> ts(n_samples), norms(n_samples);
  const double t_lo = T * 1e-3;
  for (int i = 0; i < n_samples; ++i) {
    const double f = static_cast<double>(i) / (n_samples - 1);
    ts[i] = t_lo * std::pow(T / t_lo, f);  // log-spaced in [t_lo, T]
    norms[i] = semigroup_operator_norm(mu, ts[i], basis);
  }

  // Least squares of log ||S(t)|| ~ log M - omega t over the fit window
  // t in [T/2, T] (skips the transient of the non-normal semigroup).
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int m = 0;
  for (int i = 0; i < n_samples; ++i) {
    if (ts[i] < 0.5 * T) continue;
    const double x = ts[i], y = std::log(norms[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++m;
  }
  const double denom = m * sxx - sx * sx;
  const double slope = (m * sxy - sx * sy) / denom;
  const double intercept = (sy - slope * sx) / m;
  const double omega = -slope;
  if (!(omega > 0.0))
    throw std::runtime_error(
        "estimate_decay: sampled norms are not eventually decreasing");

  // Raise M until the envelope dominates every sample.
  double M_fit = std::exp(intercept);
  for (int i = 0; i < n_samples; ++i)
    M_fit = std::max(M_fit, norms[i] * std::exp(omega * ts[i]));

  SemigroupDecayEstimate est;
  est.M_mu = M_fit;
  est.omega_mu = omega;
  // Contraction window: ((1+sqrt(mu))/(1^sqrt(mu)))^2 M^2 e^{-2 w T_mu} = 1/2.
  const double pref = (1.0 + std::sqrt(mu)) / std::min(1.0, std::sqrt(mu));
  est.T_mu = std::log(2.0 * pref * pref * M_fit * M_fit) / (2.0 * omega);
  return est;
}

// ---------------------------------------------------------------------------
// Gramian

namespace {

// 10-point Gauss-Legendre rule on [-1, 1].
constexpr double kGlNode[10] = {
    -0.9739065285171717, -0.8650633666889845, -0.6794095682990244,
    -0.4333953941292472, -0.1488743389816312, 0.1488743389816312,
    0.4333953941292472,  0.6794095682990244,  0.8650633666889845,
    0.9739065285171717};
constexpr double kGlWeight[10] = {
    0.0666713443086881, 0.1494513491505806, 0.2190863625159820,
    0.2692667193099963, 0.2955242247147529, 0.2955242247147529,
    0.2692667193099963, 0.2190863625159820, 0.1494513491505806,
    0.0666713443086881};

// |Q_mu^* S_mu^*(s) z|_H^2 with Q_mu^*(u,v) = (1/mu)(-A)^{-1} Q v.
double qmu_star_norm_sq(const PhaseState& zs, double mu,
                        const SpectralBasis& basis, const NoiseSpec& noise) {
  double s = 0.0;
  for (std::size_t k = 0; k < zs.size(); ++k) {
    const double w = noise.lambda[k] / (mu * basis.alpha[k]);
    const double g = w * zs.v[k];
    s += g * g;
  }
  return s;
}

}  // namespace

double gramian_integral(const PhaseState& z, double mu, double Delta,
                        int panels, const SpectralBasis& basis,
                        const NoiseSpec& noise) {
  if (panels < 1) panels = 1;
  const double h = Delta / panels;
  double total = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double a = p * h;
    for (int q = 0; q < 10; ++q) {
      const double s = a + 0.5 * h * (1.0 + kGlNode[q]);
      const PhaseState zs = semigroup_step(z, mu, s, /*adjoint=*/true, basis);
      total += 0.5 * h * kGlWeight[q] * qmu_star_norm_sq(zs, mu, basis, noise);
    }
  }
  return 0.5 * total;
}

double gramian_closed_form(const PhaseState& z, double mu, double Delta,
                           const SpectralBasis& basis, const NoiseSpec& noise) {
  const PhaseState zT = semigroup_step(z, mu, Delta, /*adjoint=*/true, basis);
  return 0.5 * (cmu_quadratic(z, mu, +1, basis, noise) -
                cmu_quadratic(zT, mu, +1, basis, noise));
}

}  // namespace qlab
