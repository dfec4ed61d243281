#pragma once

#include <string>
#include <vector>

#include "hrg/low_temp.hpp"

namespace hrg {

struct FixedPointSettings {
  int grid_n = 1 << 14;   // power of two
  double h = 1.0 / 32.0;  // (r-1)/4 must be an integer multiple
  double tol = 1e-12;
  int max_iter = 300;
};

/// Solution of the radial-fluctuation fixed-point equation: the density g
/// with unit mass and mean -(r-1)/4.
struct FixedPointSolution {
  int r = 2;
  Profile1D g;       // values on t0 + i h
  double residual = 0.0;
  int iterations = 0;
  double cumulant[5] = {0, 0, 0, 0, 0};  // kappa_1..kappa_4 in [1..4]
  double mean_drift = 0.0;  // measured mean error before the final shift

  std::string metadata_json(double left_rate, double right_slope_near,
                            double right_slope_far) const;
};

struct TailRates {
  double left_rate;         // slope of log g on t in [-15, -5]
  double right_slope_near;  // log g(t)/t at t ~ 5
  double right_slope_far;   // log g(t)/t at t ~ 10
};

/// Tilted limit profile pi(t) = C e^{-2t/3} g(t - a) with mass 1, mean 0.
struct TiltedPi {
  Profile1D pi;
  double C = 0.0;
  double a = 0.0;
};

/// Iterates the translation-compensated spectral map
///   G <- N[ e^{i(r-1)xi/4} (1 + i xi/2)^{-(r-1)/2} G(xi/2)^2 ]
/// in real space from a Gaussian start until successive iterates differ by
/// less than tol in the sup norm.
FixedPointSolution solve_g(int r, const FixedPointSettings& st = {});

TailRates tail_rates(const FixedPointSolution& sol);

TiltedPi build_pi(const FixedPointSolution& sol, double tilt_rate = 2.0 / 3.0);

/// Weighted sup distance between the magnetization-rescaled flow profile
/// and g(t - (r-1)/4) over |t| <= window (weight e^{|t|}).
double compare_flow_to_g(const ProfileF& f, double M_n,
                         const FixedPointSolution& sol, double window = 6.0);

/// One application of the un-renormalized literal operator: reports the
/// mass factor (2^{r-2}) and mean shift (-(r-1)/4) it produces.
struct LiteralOpCheck {
  double mass_factor;
  double mean_shift;
};
LiteralOpCheck literal_operator_check(const FixedPointSolution& sol);

/// Direct (u, v) quadrature of the fixed-point integrand at selected t
/// values; an oracle for the spectral route.
double fixed_point_quadrature_residual(const FixedPointSolution& sol);

}  // namespace hrg
