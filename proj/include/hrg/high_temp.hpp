#pragma once

#include <vector>

#include "hrg/rg_flow.hpp"

namespace hrg {

/// Moments of the rescaled densities h_{entry+l}, tracked past the level
/// where the practical high-region threshold was first met.
struct HighObservables {
  int entry_level = 0;
  struct Row {
    int l;
    double M2, M4;
    double sigma2;  // 2^l (c^{(entry)}/c^{(entry+l)}) M2(l)
  };
  std::vector<Row> rows;
  double eta_star = 0.0;  // max(M2(0), M4(0)), stand-in for e^{-1/eta^2}
  bool contraction_ok = true;  // Lemma-6.1-shaped bound on M2(l+1)/M2(l)
  bool cauchy_ok = true;       // |sigma2(l+1)-sigma2(l)| <= 5 eta* (3/4)^l
  double sigma2_limit = 0.0;
  double sigma2_limit_lo = 0.0, sigma2_limit_hi = 0.0;  // last-5 range
};

/// h_n(x) = c^{(n)-r/2} q_n(x / sqrt(c^{(n)})) as a from-zero density.
RadialDensity h_of_q(const Flow& flow, const FlowState& s);

HighObservables track_high_moments(const Trajectory& traj);

/// Distance of the state's rescaled density from the isotropic Gaussian:
/// max of the fourth-moment ratio defect and, for r = 2, the sup distance
/// between the radial CDF and the Rayleigh CDF with matched scale.
double gaussian_distance(const FlowState& s);

}  // namespace hrg
