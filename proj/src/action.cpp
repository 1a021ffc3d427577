#include "qlab/action.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "qlab/kernels.hpp"

namespace qlab {

namespace {

// Inverse noise weights 1/lambda_k^2 with the ill-posedness check shared by
// every rate-functional evaluation.
std::vector<double> inverse_lambda_sq(const NoiseSpec& noise) {
  std::vector<double> inv(noise.lambda.size());
  for (std::size_t k = 0; k < inv.size(); ++k) {
    const double lam = noise.lambda[k];
    const double v = 1.0 / (lam * lam);
    if (!(lam > 0.0) || !std::isfinite(v))
      throw std::overflow_error(
          "action: noise eigenvalue underflow, Q^{-1} not representable");
    inv[k] = v;
  }
  return inv;
}

// Second-order finite differences: central in the interior, one-sided at the
// ends (3-point for phi', 4-point for phi''; with exactly 3 nodes phi'' falls
// back to the central stencil everywhere). Outputs must be pre-sized.
void fd_derivatives(double dt, const std::vector<ModeVector>& phi,
                    std::vector<ModeVector>& dphi,
                    std::vector<ModeVector>* ddphi) {
  const std::size_t n = phi.size() - 1;  // last node index
  assert(n >= 2);
  const std::size_t N = phi[0].size();
  const double inv2dt = 1.0 / (2.0 * dt);
  const double invdt2 = 1.0 / (dt * dt);

  for (std::size_t k = 0; k < N; ++k) {
    dphi[0][k] = (-3.0 * phi[0][k] + 4.0 * phi[1][k] - phi[2][k]) * inv2dt;
    dphi[n][k] = (3.0 * phi[n][k] - 4.0 * phi[n - 1][k] + phi[n - 2][k]) * inv2dt;
  }
  for (std::size_t i = 1; i < n; ++i)
    for (std::size_t k = 0; k < N; ++k)
      dphi[i][k] = (phi[i + 1][k] - phi[i - 1][k]) * inv2dt;

  if (!ddphi) return;
  std::vector<ModeVector>& dd = *ddphi;
  for (std::size_t i = 1; i < n; ++i)
    for (std::size_t k = 0; k < N; ++k)
      dd[i][k] = (phi[i + 1][k] - 2.0 * phi[i][k] + phi[i - 1][k]) * invdt2;
  if (n >= 3) {
    for (std::size_t k = 0; k < N; ++k) {
      dd[0][k] = (2.0 * phi[0][k] - 5.0 * phi[1][k] + 4.0 * phi[2][k] -
                  phi[3][k]) * invdt2;
      dd[n][k] = (2.0 * phi[n][k] - 5.0 * phi[n - 1][k] +
                  4.0 * phi[n - 2][k] - phi[n - 3][k]) * invdt2;
    }
  } else {
    for (std::size_t k = 0; k < N; ++k) {
      dd[0][k] = dd[1][k];
      dd[n][k] = dd[1][k];
    }
  }
}

double trapezoid(double dt, const std::vector<double>& s) {
  double acc = 0.5 * (s.front() + s.back());
  for (std::size_t i = 1; i + 1 < s.size(); ++i) acc += s[i];
  return dt * acc;
}

// (dt^2/12)|s'(t1) - s'(t0)| with one-sided second-order differences of s.
double trapezoid_error_estimate(double dt, const std::vector<double>& s) {
  const std::size_t n = s.size() - 1;
  const double sp0 = (-3.0 * s[0] + 4.0 * s[1] - s[2]) / (2.0 * dt);
  const double sp1 = (3.0 * s[n] - 4.0 * s[n - 1] + s[n - 2]) / (2.0 * dt);
  return dt * dt / 12.0 * std::abs(sp1 - sp0);
}

// Per-node integrand rows. sV[i] = sum_k rho_V^2 / lambda^2 where rho_V is the
// forward-drift residual; optionally also the reversed-drift row sW and the
// cross integrand (which integrates to the energy difference).
void integrand_rows(const DiscretePath& p, std::optional<double> mu,
                    const PotentialSpec& pot, const NoiseSpec& noise,
                    const SpectralBasis& basis, std::vector<double>& sV,
                    std::vector<double>* sW, std::vector<double>* cross) {
  const std::size_t nodes = p.nodes();
  const std::size_t N = static_cast<std::size_t>(basis.N);
  const std::vector<double> inv_lam2 = inverse_lambda_sq(noise);
  const bool wave = mu.has_value();
  const double mu_v = wave ? *mu : 0.0;
  const bool nl = !pot.is_zero();

  sV.assign(nodes, 0.0);
  if (sW) sW->assign(nodes, 0.0);
  if (cross) cross->assign(nodes, 0.0);

  std::vector<double> gval, prof;
  ModeVector df(N);
  if (nl) {
    gval.resize(static_cast<std::size_t>(basis.M - 1));
    prof.resize(gval.size());
  }

  for (std::size_t i = 0; i < nodes; ++i) {
    assert(p.phi[i].size() == N);
    if (nl) {
      basis.to_grid(p.phi[i], gval);
      for (std::size_t j = 0; j < gval.size(); ++j)
        prof[j] = pot.df_profile(gval[j]);
      kern::matvec(basis.anal.data(), prof.data(), df.data(), N, gval.size());
    }
    double aV = 0.0, aW = 0.0, aX = 0.0;
    for (std::size_t k = 0; k < N; ++k) {
      const double lam2 = noise.lambda[k] * noise.lambda[k];
      const double base = basis.alpha[k] * p.phi[i][k] + (nl ? lam2 * df[k] : 0.0);
      const double acc = wave ? mu_v * p.ddphi[i][k] : 0.0;
      const double d1 = p.dphi[i][k];
      const double rv = acc + d1 + base;
      aV += rv * rv * inv_lam2[k];
      if (sW) {
        // Reversed drift: the phi' sign flips for the wave form; for the heat
        // form the reversed residual is phi' - (alpha phi + lambda^2 DF).
        const double rw = wave ? (acc - d1 + base) : (d1 - base);
        aW += rw * rw * inv_lam2[k];
      }
      if (cross) aX += 2.0 * d1 * (acc + base) * inv_lam2[k];
    }
    sV[i] = aV;
    if (sW) (*sW)[i] = aW;
    if (cross) (*cross)[i] = aX;
  }
}

ActionValue value_from_rows(double dt, const std::vector<double>& s) {
  ActionValue v;
  v.value = 0.5 * trapezoid(dt, s);
  v.quadrature_error_estimate = 0.5 * trapezoid_error_estimate(dt, s);
  return v;
}

}  // namespace

// ---------------------------------------------------------------------------
// DiscretePath

DiscretePath DiscretePath::from_positions(const TimeGrid& grid,
                                          std::vector<ModeVector> positions) {
  grid.validate();
  if (positions.size() != grid.nodes())
    throw std::invalid_argument("DiscretePath: node count does not match grid");
  if (positions.size() < 3)
    throw std::invalid_argument("DiscretePath: need at least 3 nodes");
  DiscretePath p;
  p.grid = grid;
  p.phi = std::move(positions);
  const std::size_t N = p.phi[0].size();
  p.dphi.assign(p.phi.size(), ModeVector(N));
  p.ddphi.assign(p.phi.size(), ModeVector(N));
  fd_derivatives(grid.dt(), p.phi, p.dphi, &p.ddphi);
  return p;
}

DiscretePath DiscretePath::slice(std::size_t i0, std::size_t i1) const {
  if (!(i0 < i1) || i1 >= nodes())
    throw std::invalid_argument("DiscretePath::slice: bad index range");
  DiscretePath p;
  p.grid = TimeGrid(grid.node(i0), grid.node(i1), i1 - i0);
  p.phi.assign(phi.begin() + i0, phi.begin() + i1 + 1);
  p.dphi.assign(dphi.begin() + i0, dphi.begin() + i1 + 1);
  p.ddphi.assign(ddphi.begin() + i0, ddphi.begin() + i1 + 1);
  return p;
}

DiscretePath linear_ramp_path(const ModeVector& x, double T,
                              std::size_t steps) {
  std::vector<ModeVector> pos(steps + 1);
  for (std::size_t i = 0; i <= steps; ++i)
    pos[i] = scale(x, static_cast<double>(i) / static_cast<double>(steps));
  return DiscretePath::from_positions(TimeGrid(-T, 0.0, steps),
                                      std::move(pos));
}

DiscretePath perturbed_reversed_init(const ModeVector& x, const ModeVector& y,
                                     double mu, const PotentialSpec& pot,
                                     const NoiseSpec& noise, double T,
                                     std::size_t steps,
                                     const SpectralBasis& basis,
                                     double perturb) {
  DiscretePath base = reversed_optimal_path(x, y, mu, pot, noise, T, steps, basis);
  std::vector<ModeVector> pos = std::move(base.phi);
  const std::size_t ramp = std::max<std::size_t>(1, steps / 10);
  for (std::size_t i = 0; i <= steps; ++i) {
    double factor =
        1.0 + perturb * std::sin(3.14159265358979323846 *
                                 static_cast<double>(i) /
                                 static_cast<double>(steps));
    // The reversed path starts at z~(T) which is small but not exactly 0;
    // ramp the opening stretch down so the init meets the phi(-T) = 0
    // constraint exactly.
    if (i < ramp)
      factor *= static_cast<double>(i) / static_cast<double>(ramp);
    if (i == steps) factor = 1.0;
    for (double& c : pos[i].c) c *= factor;
  }
  return DiscretePath::from_positions(TimeGrid(-T, 0.0, steps),
                                      std::move(pos));
}

// ---------------------------------------------------------------------------
// Rate functionals

ActionValue action_wave(const DiscretePath& path, double mu,
                        const PotentialSpec& pot, const NoiseSpec& noise,
                        const SpectralBasis& basis) {
  if (path.nodes() < 3)
    throw std::invalid_argument("action_wave: need at least 3 nodes");
  if (!(mu > 0.0)) throw std::invalid_argument("action_wave: mu must be positive");
  std::vector<double> sV;
  integrand_rows(path, mu, pot, noise, basis, sV, nullptr, nullptr);
  return value_from_rows(path.grid.dt(), sV);
}

ActionValue action_heat(const DiscretePath& path, const PotentialSpec& pot,
                        const NoiseSpec& noise, const SpectralBasis& basis) {
  if (path.nodes() < 3)
    throw std::invalid_argument("action_heat: need at least 3 nodes");
  std::vector<double> sV;
  integrand_rows(path, std::nullopt, pot, noise, basis, sV, nullptr, nullptr);
  return value_from_rows(path.grid.dt(), sV);
}

ActionDecomposition action_decomposition(const DiscretePath& path,
                                         std::optional<double> mu,
                                         const PotentialSpec& pot,
                                         const NoiseSpec& noise,
                                         const SpectralBasis& basis) {
  if (path.nodes() < 3)
    throw std::invalid_argument("action_decomposition: need at least 3 nodes");
  std::vector<double> sV, sW, cross;
  integrand_rows(path, mu, pot, noise, basis, sV, &sW, &cross);
  const double dt = path.grid.dt();

  ActionDecomposition d;
  d.direct = 0.5 * trapezoid(dt, sV);
  d.reversed_quadratic = 0.5 * trapezoid(dt, sW);
  d.cross_quadrature = trapezoid(dt, cross);
  if (mu.has_value()) {
    const PhaseState z0(path.phi.front(), path.dphi.front());
    const PhaseState z1(path.phi.back(), path.dphi.back());
    d.cross_boundary = energy_phi(z1, *mu, pot, basis, noise) -
                       energy_phi(z0, *mu, pot, basis, noise);
  } else {
    d.cross_boundary =
        quasipotential_closed_form(path.phi.back(), nullptr, std::nullopt, pot,
                                   noise, basis) -
        quasipotential_closed_form(path.phi.front(), nullptr, std::nullopt,
                                   pot, noise, basis);
  }
  return d;
}

double action_decomposition_residual(const DiscretePath& path, double mu,
                                     const PotentialSpec& pot,
                                     const NoiseSpec& noise,
                                     const SpectralBasis& basis) {
  return action_decomposition(path, mu, pot, noise, basis).residual();
}

// ---------------------------------------------------------------------------
// Closed forms and the reversed path

double quasipotential_closed_form(const ModeVector& x, const ModeVector* y,
                                  std::optional<double> mu,
                                  const PotentialSpec& pot,
                                  const NoiseSpec& noise,
                                  const SpectralBasis& basis) {
  if (y && !mu.has_value())
    throw std::invalid_argument(
        "quasipotential_closed_form: y requires mu to be given");
  const std::vector<double> inv_lam2 = inverse_lambda_sq(noise);
  const std::size_t N = x.size();
  assert(N == static_cast<std::size_t>(basis.N));
  double s = 0.0;
  for (std::size_t k = 0; k < N; ++k)
    s += basis.alpha[k] * inv_lam2[k] * x[k] * x[k];
  if (!pot.is_zero()) s += 2.0 * eval_F(x, pot, basis);
  if (mu.has_value() && y) {
    double sy = 0.0;
    for (std::size_t k = 0; k < N; ++k) sy += inv_lam2[k] * (*y)[k] * (*y)[k];
    s += *mu * sy;
  }
  return s;
}

DiscretePath reversed_optimal_path(const ModeVector& x, const ModeVector& y,
                                   double mu, const PotentialSpec& pot,
                                   const NoiseSpec& noise, double T,
                                   std::size_t steps,
                                   const SpectralBasis& basis) {
  if (!(T > 0.0))
    throw std::invalid_argument("reversed_optimal_path: T must be positive");
  const TimeGrid fwd(0.0, T, steps);
  const PhaseState z0(x, scale(y, -1.0));
  const TrajectorySample traj =
      integrate_wave(z0, mu, pot, noise, fwd, nullptr, 0.0, 0, basis);
  std::vector<ModeVector> pos(steps + 1);
  for (std::size_t i = 0; i <= steps; ++i) pos[i] = traj.u[steps - i];
  return DiscretePath::from_positions(TimeGrid(-T, 0.0, steps),
                                      std::move(pos));
}

DiscretePath reversed_optimal_path_auto(const ModeVector& x,
                                        const ModeVector& y, double mu,
                                        const PotentialSpec& pot,
                                        const NoiseSpec& noise,
                                        double steps_per_unit_time,
                                        const SpectralBasis& basis,
                                        double tail_fraction) {
  if (!(steps_per_unit_time >= 1.0))
    throw std::invalid_argument(
        "reversed_optimal_path_auto: need >= 1 step per unit time");
  const double phi0 = energy_phi(PhaseState(x, y), mu, pot, basis, noise);
  const std::size_t spu =
      static_cast<std::size_t>(std::llround(steps_per_unit_time));
  if (phi0 == 0.0) {
    std::vector<ModeVector> pos(spu + 1, ModeVector(x.size()));
    return DiscretePath::from_positions(TimeGrid(-1.0, 0.0, spu),
                                        std::move(pos));
  }

  // Integrate forward from (x, -y) in doubling chunks on a fixed-dt grid
  // until the residual energy drops below the tail target.
  std::vector<ModeVector> fwd_pos;
  fwd_pos.push_back(x);
  PhaseState z(x, scale(y, -1.0));
  double total_T = 0.0;
  double chunk = 1.0;
  constexpr double kMaxT = 4096.0;
  for (;;) {
    const std::size_t chunk_steps =
        static_cast<std::size_t>(std::llround(chunk * static_cast<double>(spu)));
    const TimeGrid g(0.0, chunk, chunk_steps);
    const TrajectorySample traj =
        integrate_wave(z, mu, pot, noise, g, nullptr, 0.0, 0, basis);
    for (std::size_t i = 1; i < traj.u.size(); ++i) fwd_pos.push_back(traj.u[i]);
    z = PhaseState(traj.u.back(), traj.v.back());
    total_T += chunk;
    if (energy_phi(z, mu, pot, basis, noise) <= tail_fraction * phi0) break;
    if (total_T >= kMaxT)
      throw std::runtime_error(
          "reversed_optimal_path_auto: energy did not decay below the tail "
          "target within the horizon cap");
    chunk *= 2.0;
  }

  const std::size_t total_steps = fwd_pos.size() - 1;
  std::vector<ModeVector> pos(total_steps + 1);
  for (std::size_t i = 0; i <= total_steps; ++i)
    pos[i] = fwd_pos[total_steps - i];
  return DiscretePath::from_positions(TimeGrid(-total_T, 0.0, total_steps),
                                      std::move(pos));
}

// ---------------------------------------------------------------------------
// Minimum-action solver

namespace {

// Discrete action objective over the free interior nodes, with analytic
// gradient. Node layout (n = steps): phi_0 = 0 and phi_n = x are fixed; with
// a pinned terminal velocity y the node phi_{n-1} is eliminated through the
// one-sided stencil (3 phi_n - 4 phi_{n-1} + phi_{n-2})/(2 dt) = y.
class MinActionProblem {
 public:
  MinActionProblem(const ModeVector& x, const ModeVector* y,
                   std::optional<double> mu, double T, std::size_t steps,
                   const PotentialSpec& pot, const NoiseSpec& noise,
                   const SpectralBasis& basis)
      : x_(x),
        mu_(mu),
        pot_(pot),
        noise_(noise),
        basis_(basis),
        grid_(-T, 0.0, steps),
        n_(steps),
        N_(x.size()),
        wave_(mu.has_value()),
        fixed_y_(mu.has_value() && y != nullptr),
        nl_(!pot.is_zero()),
        inv_lam2_(inverse_lambda_sq(noise)) {
    if (fixed_y_) y_ = *y;
    dt_ = grid_.dt();
    // The wave quasi-potential connects the phase-space equilibrium (0,0) to
    // the target, so the initial velocity must be pinned as well: phi_1 is
    // eliminated through (-3 phi_0 + 4 phi_1 - phi_2)/(2dt) = 0, i.e.
    // phi_1 = phi_2 / 4. Without it the free damped oscillation from
    // (0, v_0) reaches any x with zero interior residual and the discrete
    // minimum collapses below V(x). The heat case starts only from u = 0.
    pin_v0_ = wave_;
    first_free_ = pin_v0_ ? 2 : 1;
    last_free_ = fixed_y_ ? n_ - 2 : n_ - 1;
    n_free_ = last_free_ - first_free_ + 1;
    nv_ = n_free_ * N_;

    phi_.assign(n_ + 1, ModeVector(N_));
    dphi_.assign(n_ + 1, ModeVector(N_));
    if (wave_) ddphi_.assign(n_ + 1, ModeVector(N_));
    mid_ = ModeVector(N_);
    q_.assign(N_, 0.0);
    gfull_.assign(n_ + 1, ModeVector(N_));
    if (nl_) {
      gval_.resize(static_cast<std::size_t>(basis.M - 1));
      prof_.resize(gval_.size());
      df_.resize(N_);
      svec_.resize(N_);
    }
    weights_.assign(n_ + 1, dt_);
    weights_.front() = 0.5 * dt_;
    weights_.back() = 0.5 * dt_;
  }

  std::size_t n_vars() const { return nv_; }
  const TimeGrid& grid() const { return grid_; }

  // Exact inverse of the potential-free part of the Hessian, used as the
  // initial matrix H0 of the L-BFGS two-loop recursion. Per mode k the
  // quadratic action is |W^{1/2} J_k phi_k|^2 / 2 with J_k the banded stencil
  // matrix of rho over the free columns, so H_k = J_k^T W_k J_k is SPD with
  // half-bandwidth 2 and factors in O(n). The nonlinear DF term is a bounded
  // perturbation that the quasi-Newton updates absorb.
  void build_preconditioner() {
    const double mu_v = wave_ ? *mu_ : 0.0;
    const double inv2dt = 1.0 / (2.0 * dt_);
    const double invdt2 = 1.0 / (dt_ * dt_);
    band_.assign(N_ * n_free_ * (kBand + 1), 0.0);

    const auto col_of = [&](std::size_t node) -> std::ptrdiff_t {
      if (node == 0 || node == n_) return -1;
      if (pin_v0_ && node == 1) return 0;
      if (fixed_y_ && node == n_ - 1)
        return static_cast<std::ptrdiff_t>(n_free_ - 1);
      return static_cast<std::ptrdiff_t>(node - first_free_);
    };
    const auto wgt_of = [&](std::size_t node) {
      if (pin_v0_ && node == 1) return 0.25;
      return (fixed_y_ && node == n_ - 1) ? 0.25 : 1.0;
    };

    if (!wave_) {
      // Heat rows live on cell midpoints: rho_{i+1/2} touches nodes i, i+1
      // with coefficients -1/dt + alpha/2 and +1/dt + alpha/2.
      for (std::size_t i = 0; i < n_; ++i) {
        const std::size_t nodes[2] = {i, i + 1};
        const double cdt[2] = {-1.0 / dt_, 1.0 / dt_};
        for (std::size_t k = 0; k < N_; ++k) {
          std::pair<std::ptrdiff_t, double> cols[2];
          int nc_used = 0;
          for (int t = 0; t < 2; ++t) {
            const std::ptrdiff_t col = col_of(nodes[t]);
            if (col < 0) continue;
            cols[nc_used++] = {col, cdt[t] + 0.5 * basis_.alpha[k]};
          }
          const double wi = dt_ * inv_lam2_[k];
          double* bk = band_.data() + k * n_free_ * (kBand + 1);
          for (int a = 0; a < nc_used; ++a)
            for (int bji = 0; bji < nc_used; ++bji) {
              if (cols[a].first < cols[bji].first) continue;
              const std::size_t d =
                  static_cast<std::size_t>(cols[a].first - cols[bji].first);
              bk[static_cast<std::size_t>(cols[a].first) * (kBand + 1) + d] +=
                  wi * cols[a].second * cols[bji].second;
            }
        }
      }
      factor_bands();
      return;
    }

    struct NodeCoef {
      std::size_t node = 0;
      double c2 = 0.0, c1 = 0.0;
    };

    for (std::size_t i = 0; i <= n_; ++i) {
      NodeCoef nc[6];
      int m = 0;
      const auto add = [&](std::size_t node, double c2, double c1) {
        for (int t = 0; t < m; ++t)
          if (nc[t].node == node) {
            nc[t].c2 += c2;
            nc[t].c1 += c1;
            return;
          }
        nc[m].node = node;
        nc[m].c2 = c2;
        nc[m].c1 = c1;
        ++m;
      };
      add(i, 0.0, 0.0);  // carrier for the alpha term
      if (i == 0) {
        add(0, 0.0, -3.0 * inv2dt);
        add(1, 0.0, 4.0 * inv2dt);
        add(2, 0.0, -inv2dt);
      } else if (i == n_) {
        add(n_, 0.0, 3.0 * inv2dt);
        add(n_ - 1, 0.0, -4.0 * inv2dt);
        add(n_ - 2, 0.0, inv2dt);
      } else {
        add(i - 1, 0.0, -inv2dt);
        add(i + 1, 0.0, inv2dt);
      }
      if (wave_ && n_ >= 3) {
        if (i == 0) {
          add(0, 2.0 * invdt2, 0.0);
          add(1, -5.0 * invdt2, 0.0);
          add(2, 4.0 * invdt2, 0.0);
          add(3, -invdt2, 0.0);
        } else if (i == n_) {
          add(n_, 2.0 * invdt2, 0.0);
          add(n_ - 1, -5.0 * invdt2, 0.0);
          add(n_ - 2, 4.0 * invdt2, 0.0);
          add(n_ - 3, -invdt2, 0.0);
        } else {
          add(i - 1, invdt2, 0.0);
          add(i, -2.0 * invdt2, 0.0);
          add(i + 1, invdt2, 0.0);
        }
      }

      std::pair<std::ptrdiff_t, double> cols[6];
      for (std::size_t k = 0; k < N_; ++k) {
        int nc_used = 0;
        for (int t = 0; t < m; ++t) {
          double coef = mu_v * nc[t].c2 + nc[t].c1;
          if (nc[t].node == i) coef += basis_.alpha[k];
          const std::ptrdiff_t col = col_of(nc[t].node);
          if (col < 0 || coef == 0.0) continue;
          coef *= wgt_of(nc[t].node);
          bool merged = false;
          for (int u = 0; u < nc_used; ++u)
            if (cols[u].first == col) {
              cols[u].second += coef;
              merged = true;
              break;
            }
          if (!merged) cols[nc_used++] = {col, coef};
        }
        const double wi = weights_[i] * inv_lam2_[k];
        double* bk = band_.data() + k * n_free_ * (kBand + 1);
        for (int a = 0; a < nc_used; ++a)
          for (int bji = 0; bji < nc_used; ++bji) {
            if (cols[a].first < cols[bji].first) continue;
            const std::size_t d =
                static_cast<std::size_t>(cols[a].first - cols[bji].first);
            if (d > kBand) continue;  // cannot happen; guard anyway
            bk[static_cast<std::size_t>(cols[a].first) * (kBand + 1) + d] +=
                wi * cols[a].second * cols[bji].second;
          }
      }
    }
    factor_bands();
  }

  // In-place band Cholesky per mode (lower factor, bk[i][d] = L(i, i-d)).
  void factor_bands() {
    for (std::size_t k = 0; k < N_; ++k) {
      double* bk = band_.data() + k * n_free_ * (kBand + 1);
      double max_diag = 0.0;
      for (std::size_t i = 0; i < n_free_; ++i)
        max_diag = std::max(max_diag, bk[i * (kBand + 1)]);
      const double shift = 1e-13 * max_diag;
      bool ok = true;
      for (std::size_t i = 0; i < n_free_ && ok; ++i) {
        const std::size_t lo = i > kBand ? i - kBand : 0;
        for (std::size_t j = lo; j <= i; ++j) {
          double s = bk[i * (kBand + 1) + (i - j)];
          if (i == j) s += shift;
          const std::size_t mlo = (i > kBand ? i - kBand : 0);
          for (std::size_t mm = mlo; mm < j; ++mm) {
            if (j - mm > kBand) continue;
            s -= bk[i * (kBand + 1) + (i - mm)] *
                 bk[j * (kBand + 1) + (j - mm)];
          }
          if (i == j) {
            if (!(s > 0.0)) {
              ok = false;
              break;
            }
            bk[i * (kBand + 1)] = std::sqrt(s);
          } else {
            bk[i * (kBand + 1) + (i - j)] = s / bk[j * (kBand + 1)];
          }
        }
      }
      if (!ok) {
        band_.clear();  // fall back to unpreconditioned L-BFGS
        return;
      }
    }
  }

  bool has_preconditioner() const { return !band_.empty(); }

  // out = H0^{-1} g via two banded triangular solves per mode.
  void apply_preconditioner(const std::vector<double>& g,
                            std::vector<double>& out) const {
    out.resize(nv_);
    std::vector<double> rhs(n_free_);
    for (std::size_t k = 0; k < N_; ++k) {
      const double* bk = band_.data() + k * n_free_ * (kBand + 1);
      for (std::size_t j = 0; j < n_free_; ++j) rhs[j] = g[j * N_ + k];
      for (std::size_t i = 0; i < n_free_; ++i) {
        double s = rhs[i];
        const std::size_t lo = i > kBand ? i - kBand : 0;
        for (std::size_t mm = lo; mm < i; ++mm)
          s -= bk[i * (kBand + 1) + (i - mm)] * rhs[mm];
        rhs[i] = s / bk[i * (kBand + 1)];
      }
      for (std::size_t i = n_free_; i-- > 0;) {
        double s = rhs[i];
        const std::size_t hi = std::min(n_free_ - 1, i + kBand);
        for (std::size_t mm = i + 1; mm <= hi; ++mm)
          s -= bk[mm * (kBand + 1) + (mm - i)] * rhs[mm];
        rhs[i] = s / bk[i * (kBand + 1)];
      }
      for (std::size_t j = 0; j < n_free_; ++j) out[j * N_ + k] = rhs[j];
    }
  }

  std::vector<double> pack(const DiscretePath& init) const {
    std::vector<double> v(nv_);
    for (std::size_t j = 0; j < n_free_; ++j)
      for (std::size_t k = 0; k < N_; ++k)
        v[j * N_ + k] = init.phi[first_free_ + j][k];
    return v;
  }

  DiscretePath assemble(const std::vector<double>& vars) {
    unpack(vars);
    return DiscretePath::from_positions(grid_, phi_);
  }

  double eval(const std::vector<double>& vars, std::vector<double>* grad) {
    if (!wave_) return eval_heat(vars, grad);
    unpack(vars);
    fd_derivatives(dt_, phi_, dphi_, wave_ ? &ddphi_ : nullptr);
    if (grad) {
      grad->assign(nv_, 0.0);
      for (auto& g : gfull_) g.c.assign(N_, 0.0);
    }

    const double mu_v = wave_ ? *mu_ : 0.0;
    const double inv2dt = 1.0 / (2.0 * dt_);
    const double d2 = wave_ ? mu_v / (dt_ * dt_) : 0.0;
    double J = 0.0;

    for (std::size_t i = 0; i <= n_; ++i) {
      if (nl_) {
        basis_.to_grid(phi_[i], gval_);
        for (std::size_t j = 0; j < gval_.size(); ++j)
          prof_[j] = pot_.df_profile(gval_[j]);
        kern::matvec(basis_.anal.data(), prof_.data(), df_.data(), N_,
                     gval_.size());
      }
      const double w = weights_[i];
      for (std::size_t k = 0; k < N_; ++k) {
        const double lam2 = noise_.lambda[k] * noise_.lambda[k];
        const double base =
            basis_.alpha[k] * phi_[i][k] + (nl_ ? lam2 * df_[k] : 0.0);
        const double rho =
            (wave_ ? mu_v * ddphi_[i][k] : 0.0) + dphi_[i][k] + base;
        J += 0.5 * w * rho * rho * inv_lam2_[k];
        q_[k] = w * rho * inv_lam2_[k];
      }
      if (!grad) continue;

      // Local alpha term and the second-variation (Hessian-profile) term.
      for (std::size_t k = 0; k < N_; ++k)
        gfull_[i][k] += basis_.alpha[k] * q_[k];
      if (nl_) {
        for (std::size_t k = 0; k < N_; ++k)
          svec_[k] = noise_.lambda[k] * noise_.lambda[k] * q_[k];
        kern::matvec(basis_.synth.data(), svec_.data(), prof_.data(),
                     gval_.size(), N_);
        for (std::size_t j = 0; j < gval_.size(); ++j)
          prof_[j] *= pot_.df_profile_prime(gval_[j]);
        kern::matvec(basis_.anal.data(), prof_.data(), df_.data(), N_,
                     gval_.size());
        for (std::size_t k = 0; k < N_; ++k) gfull_[i][k] += df_[k];
      }

      // Adjoint of the first-derivative stencil.
      if (i == 0) {
        for (std::size_t k = 0; k < N_; ++k) {
          gfull_[0][k] += -3.0 * inv2dt * q_[k];
          gfull_[1][k] += 4.0 * inv2dt * q_[k];
          gfull_[2][k] += -1.0 * inv2dt * q_[k];
        }
      } else if (i == n_) {
        for (std::size_t k = 0; k < N_; ++k) {
          gfull_[n_][k] += 3.0 * inv2dt * q_[k];
          gfull_[n_ - 1][k] += -4.0 * inv2dt * q_[k];
          gfull_[n_ - 2][k] += 1.0 * inv2dt * q_[k];
        }
      } else {
        for (std::size_t k = 0; k < N_; ++k) {
          gfull_[i - 1][k] += -inv2dt * q_[k];
          gfull_[i + 1][k] += inv2dt * q_[k];
        }
      }

      // Adjoint of the second-derivative stencil (wave only).
      if (wave_) {
        if (n_ >= 3 && i == 0) {
          for (std::size_t k = 0; k < N_; ++k) {
            gfull_[0][k] += 2.0 * d2 * q_[k];
            gfull_[1][k] += -5.0 * d2 * q_[k];
            gfull_[2][k] += 4.0 * d2 * q_[k];
            gfull_[3][k] += -1.0 * d2 * q_[k];
          }
        } else if (n_ >= 3 && i == n_) {
          for (std::size_t k = 0; k < N_; ++k) {
            gfull_[n_][k] += 2.0 * d2 * q_[k];
            gfull_[n_ - 1][k] += -5.0 * d2 * q_[k];
            gfull_[n_ - 2][k] += 4.0 * d2 * q_[k];
            gfull_[n_ - 3][k] += -1.0 * d2 * q_[k];
          }
        } else if (n_ >= 3) {
          for (std::size_t k = 0; k < N_; ++k) {
            gfull_[i - 1][k] += d2 * q_[k];
            gfull_[i][k] += -2.0 * d2 * q_[k];
            gfull_[i + 1][k] += d2 * q_[k];
          }
        } else {
          // 3-node fallback: every node uses the central stencil on (0,1,2).
          for (std::size_t k = 0; k < N_; ++k) {
            gfull_[0][k] += d2 * q_[k];
            gfull_[1][k] += -2.0 * d2 * q_[k];
            gfull_[2][k] += d2 * q_[k];
          }
        }
      }
    }

    if (grad) {
      for (std::size_t j = 0; j < n_free_; ++j)
        for (std::size_t k = 0; k < N_; ++k)
          (*grad)[j * N_ + k] = gfull_[first_free_ + j][k];
      if (pin_v0_) {
        // phi_1 = phi_2 / 4 depends on the first free node.
        for (std::size_t k = 0; k < N_; ++k)
          (*grad)[k] += 0.25 * gfull_[1][k];
      }
      if (fixed_y_) {
        // phi_{n-1} = (3 x + phi_{n-2} - 2 dt y)/4 depends on the last free node.
        const std::size_t slot = (n_free_ - 1) * N_;
        for (std::size_t k = 0; k < N_; ++k)
          (*grad)[slot + k] += 0.25 * gfull_[n_ - 1][k];
      }
    }
    return J;
  }

 private:
  // Heat action on cell midpoints: rho_{i+1/2} = (phi_{i+1} - phi_i)/dt +
  // alpha (phi_i + phi_{i+1})/2 + lambda^2 DF(midpoint). Node collocation
  // with one-sided end stencils admits an alternating near-null mode that
  // biases the discrete minimum low by O(dt); the midpoint form is free of
  // it and second-order in the minimum.
  double eval_heat(const std::vector<double>& vars, std::vector<double>* grad) {
    unpack(vars);
    if (grad) {
      grad->assign(nv_, 0.0);
      for (auto& g : gfull_) g.c.assign(N_, 0.0);
    }
    const double inv_dt = 1.0 / dt_;
    double J = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t k = 0; k < N_; ++k)
        mid_[k] = 0.5 * (phi_[i][k] + phi_[i + 1][k]);
      if (nl_) {
        basis_.to_grid(mid_, gval_);
        for (std::size_t j = 0; j < gval_.size(); ++j)
          prof_[j] = pot_.df_profile(gval_[j]);
        kern::matvec(basis_.anal.data(), prof_.data(), df_.data(), N_,
                     gval_.size());
      }
      for (std::size_t k = 0; k < N_; ++k) {
        const double lam2 = noise_.lambda[k] * noise_.lambda[k];
        const double rho = (phi_[i + 1][k] - phi_[i][k]) * inv_dt +
                           basis_.alpha[k] * mid_[k] +
                           (nl_ ? lam2 * df_[k] : 0.0);
        J += 0.5 * dt_ * rho * rho * inv_lam2_[k];
        q_[k] = dt_ * rho * inv_lam2_[k];
      }
      if (!grad) continue;
      for (std::size_t k = 0; k < N_; ++k) {
        gfull_[i][k] += q_[k] * (0.5 * basis_.alpha[k] - inv_dt);
        gfull_[i + 1][k] += q_[k] * (0.5 * basis_.alpha[k] + inv_dt);
      }
      if (nl_) {
        for (std::size_t k = 0; k < N_; ++k)
          svec_[k] = noise_.lambda[k] * noise_.lambda[k] * q_[k];
        kern::matvec(basis_.synth.data(), svec_.data(), prof_.data(),
                     gval_.size(), N_);
        for (std::size_t j = 0; j < gval_.size(); ++j)
          prof_[j] *= pot_.df_profile_prime(gval_[j]);
        kern::matvec(basis_.anal.data(), prof_.data(), df_.data(), N_,
                     gval_.size());
        for (std::size_t k = 0; k < N_; ++k) {
          gfull_[i][k] += 0.5 * df_[k];
          gfull_[i + 1][k] += 0.5 * df_[k];
        }
      }
    }
    if (grad)
      for (std::size_t j = 0; j < n_free_; ++j)
        for (std::size_t k = 0; k < N_; ++k)
          (*grad)[j * N_ + k] = gfull_[first_free_ + j][k];
    return J;
  }
  void unpack(const std::vector<double>& vars) {
    phi_[0].c.assign(N_, 0.0);
    phi_[n_] = x_;
    for (std::size_t j = 0; j < n_free_; ++j)
      for (std::size_t k = 0; k < N_; ++k)
        phi_[first_free_ + j][k] = vars[j * N_ + k];
    if (pin_v0_) {
      for (std::size_t k = 0; k < N_; ++k)
        phi_[1][k] = 0.25 * phi_[2][k];
    }
    if (fixed_y_) {
      for (std::size_t k = 0; k < N_; ++k)
        phi_[n_ - 1][k] =
            0.25 * (3.0 * x_[k] + phi_[n_ - 2][k] - 2.0 * dt_ * y_[k]);
    }
  }

  ModeVector x_, y_;
  std::optional<double> mu_;
  const PotentialSpec& pot_;
  const NoiseSpec& noise_;
  const SpectralBasis& basis_;
  TimeGrid grid_;
  std::size_t n_, N_;
  bool wave_, fixed_y_, nl_, pin_v0_ = false;
  std::vector<double> inv_lam2_;
  double dt_ = 0.0;
  std::size_t first_free_ = 1, last_free_ = 1, n_free_ = 0, nv_ = 0;

  static constexpr std::size_t kBand = 2;
  std::vector<double> band_;

  std::vector<ModeVector> phi_, dphi_, ddphi_, gfull_;
  ModeVector mid_;
  std::vector<double> q_, weights_, gval_, prof_, svec_;
  std::vector<double> df_;
};

struct LbfgsOutcome {
  std::vector<double> x;
  double f = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  double min_eval = 0.0;
};

LbfgsOutcome lbfgs_minimize(MinActionProblem& prob, std::vector<double> x0,
                            const MinActionOptions& opt) {
  const std::size_t nv = x0.size();
  std::vector<double> g(nv), gnew(nv), p(nv), xnew(nv), ptmp, alpha_buf;
  std::vector<std::vector<double>> S, Y;
  std::vector<double> rho;

  double f = prob.eval(x0, &g);
  LbfgsOutcome out;
  out.min_eval = f;

  auto norm2 = [nv](const std::vector<double>& a) {
    return std::sqrt(kern::dot(a.data(), a.data(), nv));
  };

  std::size_t iter = 0;
  std::size_t stall = 0;
  const bool trace = std::getenv("QLAB_LBFGS_TRACE") != nullptr;
  for (; iter < opt.max_iters; ++iter) {
    if (norm2(g) <= opt.grad_tol * (1.0 + std::abs(f))) {
      out.converged = true;
      break;
    }

    // Two-loop recursion: p = -H g, seeded with the banded quadratic-part
    // inverse when it factored, else the usual scaled identity.
    p = g;
    alpha_buf.assign(S.size(), 0.0);
    for (std::size_t h = S.size(); h-- > 0;) {
      const double a = rho[h] * kern::dot(S[h].data(), p.data(), nv);
      alpha_buf[h] = a;
      for (std::size_t j = 0; j < nv; ++j) p[j] -= a * Y[h][j];
    }
    if (prob.has_preconditioner()) {
      ptmp = p;
      prob.apply_preconditioner(ptmp, p);
    } else if (!S.empty()) {
      const std::size_t h = S.size() - 1;
      const double yy = kern::dot(Y[h].data(), Y[h].data(), nv);
      const double sy = kern::dot(S[h].data(), Y[h].data(), nv);
      const double gamma = sy / yy;
      for (double& v : p) v *= gamma;
    }
    for (std::size_t h = 0; h < S.size(); ++h) {
      const double b = rho[h] * kern::dot(Y[h].data(), p.data(), nv);
      for (std::size_t j = 0; j < nv; ++j) p[j] += (alpha_buf[h] - b) * S[h][j];
    }
    for (double& v : p) v = -v;

    double gp = kern::dot(g.data(), p.data(), nv);
    if (!(gp < 0.0)) {
      for (std::size_t j = 0; j < nv; ++j) p[j] = -g[j];
      gp = -kern::dot(g.data(), g.data(), nv);
    }

    double t = (iter == 0 && !prob.has_preconditioner())
                   ? std::min(1.0, 1.0 / std::max(1e-12, norm2(g)))
                   : 1.0;
    double fn = f;
    bool accepted = false;
    for (std::size_t bt = 0; bt < opt.max_backtracks; ++bt) {
      for (std::size_t j = 0; j < nv; ++j) xnew[j] = x0[j] + t * p[j];
      fn = prob.eval(xnew, nullptr);
      out.min_eval = std::min(out.min_eval, fn);
      if (fn <= f + opt.armijo_c1 * t * gp) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;  // no further progress possible at this scale

    prob.eval(xnew, &gnew);
    std::vector<double> s(nv), yv(nv);
    for (std::size_t j = 0; j < nv; ++j) {
      s[j] = xnew[j] - x0[j];
      yv[j] = gnew[j] - g[j];
    }
    const double sy = kern::dot(s.data(), yv.data(), nv);
    if (sy > 1e-12 * norm2(s) * norm2(yv)) {
      S.push_back(std::move(s));
      Y.push_back(std::move(yv));
      rho.push_back(1.0 / sy);
      if (S.size() > opt.memory) {
        S.erase(S.begin());
        Y.erase(Y.begin());
        rho.erase(rho.begin());
      }
    }
    if (trace && iter % 250 == 0)
      std::fprintf(stderr, "it=%zu f=%.15g df=%.3g |g|=%.3g\n", iter, fn,
                   f - fn, norm2(gnew));
    if (f - fn <= opt.ftol * (1.0 + std::abs(f)))
      ++stall;
    else
      stall = 0;
    x0.swap(xnew);
    f = fn;
    g.swap(gnew);
    if (stall >= opt.stall_patience) {
      out.converged = true;
      ++iter;
      break;
    }
  }

  out.x = std::move(x0);
  out.f = f;
  out.iterations = iter;
  return out;
}

}  // namespace

QuasiPotentialReport min_action_solve(const ModeVector& x_target,
                                      const ModeVector* y_target,
                                      std::optional<double> mu, double T,
                                      std::size_t steps,
                                      const PotentialSpec& pot,
                                      const NoiseSpec& noise,
                                      const SpectralBasis& basis,
                                      const DiscretePath& init,
                                      const MinActionOptions& opts) {
  if (steps < 4)
    throw std::invalid_argument("min_action_solve: need steps >= 4");
  if (!(T > 0.0)) throw std::invalid_argument("min_action_solve: T must be positive");
  if (!mu.has_value() && y_target)
    throw std::invalid_argument(
        "min_action_solve: the heat case takes no terminal velocity");
  if (mu.has_value() && !(*mu > 0.0))
    throw std::invalid_argument("min_action_solve: mu must be positive");
  if (init.nodes() != steps + 1)
    throw std::invalid_argument("min_action_solve: init node count mismatch");
  const double Tinit = init.grid.t1 - init.grid.t0;
  if (std::abs(Tinit - T) > 1e-9 * std::max(1.0, T))
    throw std::invalid_argument("min_action_solve: init horizon mismatch");
  const double xnorm = h_norm(x_target);
  if (h_norm(init.phi.front()) > 1e-9 * (1.0 + xnorm))
    throw std::invalid_argument("min_action_solve: init must start at 0");
  if (h_norm(sub(init.phi.back(), x_target)) > 1e-9 * (1.0 + xnorm))
    throw std::invalid_argument("min_action_solve: init must end at the target");

  MinActionProblem prob(x_target, y_target, mu, T, steps, pot, noise, basis);
  prob.build_preconditioner();
  LbfgsOutcome r = lbfgs_minimize(prob, prob.pack(init), opts);

  QuasiPotentialReport rep;
  rep.closed_form =
      quasipotential_closed_form(x_target, y_target, mu, pot, noise, basis);
  rep.numeric_min = r.f;
  rep.gap = r.f - rep.closed_form;
  rep.path = prob.assemble(r.x);
  rep.iterations = r.iterations;
  rep.converged = r.converged;
  rep.terminal_velocity_norm = h_norm(rep.path.dphi.back());
  rep.min_iterate_action = r.min_eval;
  return rep;
}

}  // namespace qlab
