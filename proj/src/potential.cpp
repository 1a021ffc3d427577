#include "qlab/potential.hpp"

#include <cmath>
#include <stdexcept>

#include "qlab/kernels.hpp"

namespace qlab {

PotentialFamily potential_family_from_string(const std::string& s) {
  if (s == "zero") return PotentialFamily::Zero;
  if (s == "decreasing") return PotentialFamily::DecreasingB;
  if (s == "nonnegative") return PotentialFamily::NonnegativeB;
  throw std::invalid_argument("unknown potential family: " + s);
}

const char* to_string(PotentialFamily f) {
  switch (f) {
    case PotentialFamily::Zero: return "zero";
    case PotentialFamily::DecreasingB: return "decreasing";
    case PotentialFamily::NonnegativeB: return "nonnegative";
  }
  return "?";
}

PotentialSpec PotentialSpec::zero() { return PotentialSpec{}; }

PotentialSpec PotentialSpec::make(PotentialFamily family, double strength) {
  if (strength < 0.0)
    throw std::invalid_argument("potential: strength must be >= 0");
  PotentialSpec p;
  p.family = family;
  p.strength = strength;
  switch (family) {
    case PotentialFamily::Zero:
      p.kappa = 0.0;
      break;
    case PotentialFamily::DecreasingB:
      p.kappa = strength;  // |d/deta atan| <= 1
      break;
    case PotentialFamily::NonnegativeB:
      p.kappa = 2.0 * strength;  // |d/deta 2 eta/(1+eta^2)| <= 2
      break;
  }
  return p;
}

double PotentialSpec::b(double eta) const {
  switch (family) {
    case PotentialFamily::Zero: return 0.0;
    case PotentialFamily::DecreasingB: return -strength * std::atan(eta);
    case PotentialFamily::NonnegativeB:
      return strength * std::log1p(eta * eta);
  }
  return 0.0;
}

double PotentialSpec::b_prime(double eta) const {
  switch (family) {
    case PotentialFamily::Zero: return 0.0;
    case PotentialFamily::DecreasingB:
      return -strength / (1.0 + eta * eta);
    case PotentialFamily::NonnegativeB:
      return strength * 2.0 * eta / (1.0 + eta * eta);
  }
  return 0.0;
}

double PotentialSpec::f_density(double eta) const {
  switch (family) {
    case PotentialFamily::Zero: return 0.0;
    case PotentialFamily::DecreasingB:
      return strength * (eta * std::atan(eta) - 0.5 * std::log1p(eta * eta));
    case PotentialFamily::NonnegativeB:
      return strength * std::log1p(eta * eta);
  }
  return 0.0;
}

double PotentialSpec::df_profile(double eta) const {
  switch (family) {
    case PotentialFamily::Zero: return 0.0;
    case PotentialFamily::DecreasingB: return strength * std::atan(eta);
    case PotentialFamily::NonnegativeB:
      return strength * 2.0 * eta / (1.0 + eta * eta);
  }
  return 0.0;
}

double PotentialSpec::df_profile_prime(double eta) const {
  switch (family) {
    case PotentialFamily::Zero: return 0.0;
    case PotentialFamily::DecreasingB:
      return strength / (1.0 + eta * eta);
    case PotentialFamily::NonnegativeB: {
      const double d = 1.0 + eta * eta;
      return strength * 2.0 * (1.0 - eta * eta) / (d * d);
    }
  }
  return 0.0;
}

double eval_F(const ModeVector& x, const PotentialSpec& spec,
              const SpectralBasis& basis) {
  if (spec.is_zero()) return 0.0;
  std::vector<double> vals;
  basis.to_grid(x, vals);
  double s = 0.0;
  for (double v : vals) s += spec.f_density(v);
  return s / basis.M;
}

ModeVector eval_DF(const ModeVector& x, const PotentialSpec& spec,
                   const SpectralBasis& basis) {
  if (spec.is_zero()) return ModeVector(x.size());
  std::vector<double> vals;
  basis.to_grid(x, vals);
  for (double& v : vals) v = spec.df_profile(v);
  return basis.from_grid(vals);
}

ModeVector eval_drift_B(const ModeVector& x, const PotentialSpec& spec,
                        const NoiseSpec& noise, const SpectralBasis& basis) {
  if (spec.is_zero()) return ModeVector(x.size());
  ModeVector df = eval_DF(x, spec, basis);
  ModeVector out(x.size());
  std::vector<double> w(x.size());
  for (std::size_t k = 0; k < x.size(); ++k)
    w[k] = -noise.lambda[k] * noise.lambda[k];
  kern::hadamard(out.data(), w.data(), df.data(), x.size());
  return out;
}

// Declared in spectral.hpp; implemented here where PotentialSpec is complete.
double energy_phi(const PhaseState& z, double mu, const PotentialSpec& pot,
                  const SpectralBasis& basis, const NoiseSpec& noise) {
  const std::size_t n = z.size();
  std::vector<double> wu(n), wv(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double il2 = 1.0 / (noise.lambda[k] * noise.lambda[k]);
    wu[k] = basis.alpha[k] * il2;  // |(-A)^{1/2} Q^{-1} x|_H^2 weight
    wv[k] = mu * il2;              // mu |Q^{-1} y|_H^2 weight
  }
  return kern::weighted_sumsq(wu.data(), z.u.data(), n) +
         kern::weighted_sumsq(wv.data(), z.v.data(), n) +
         2.0 * eval_F(z.u, pot, basis);
}

}  // namespace qlab
