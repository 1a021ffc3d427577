#pragma once

#include <string>

#include "qlab/spectral.hpp"

// Gradient-type nonlinearities: scalar profile b, potential F, gradient DF,
// and drift B = -Q^2 DF, evaluated pseudospectrally (synthesis to the interior
// collocation grid, pointwise map, analysis back; M = 4N dealiasing default).

namespace qlab {

enum class PotentialFamily { Zero, DecreasingB, NonnegativeB };

PotentialFamily potential_family_from_string(const std::string& s);
const char* to_string(PotentialFamily f);

struct PotentialSpec {
  PotentialFamily family = PotentialFamily::Zero;
  double strength = 0.0;  // multiplier s
  double kappa = 0.0;     // Lipschitz constant of DF (analytic)

  static PotentialSpec zero();
  static PotentialSpec make(PotentialFamily family, double strength);

  bool is_zero() const { return family == PotentialFamily::Zero || strength == 0.0; }

  // Scalar profile b and its derivative:
  //   DecreasingB:  b(eta) = -s atan(eta)
  //   NonnegativeB: b(eta) =  s log(1 + eta^2)
  double b(double eta) const;
  double b_prime(double eta) const;

  // Pointwise density g with F(x) = Int_O g(x(xi)) dxi:
  //   DecreasingB:  g(eta) = s (eta atan(eta) - log(1+eta^2)/2)   (= -Int_0^eta b)
  //   NonnegativeB: g(eta) = b(eta)
  double f_density(double eta) const;

  // DF(x)(xi) = df_profile(x(xi)):
  //   DecreasingB:  -b = s atan(eta); NonnegativeB: b' = 2 s eta/(1+eta^2)
  double df_profile(double eta) const;
  double df_profile_prime(double eta) const;  // second-variation profile
};

// F(x) >= 0 by quadrature of f_density on the interior grid (weight 1/M).
double eval_F(const ModeVector& x, const PotentialSpec& spec,
              const SpectralBasis& basis);

// Spectral coefficients of xi -> df_profile(x(xi)).
ModeVector eval_DF(const ModeVector& x, const PotentialSpec& spec,
                   const SpectralBasis& basis);

// B(x) = -Q^2 DF(x)
ModeVector eval_drift_B(const ModeVector& x, const PotentialSpec& spec,
                        const NoiseSpec& noise, const SpectralBasis& basis);

}  // namespace qlab
