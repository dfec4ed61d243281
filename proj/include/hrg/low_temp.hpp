#pragma once

#include <optional>
#include <vector>

#include "hrg/rg_flow.hpp"

namespace hrg {

/// Density on a uniform 1-D grid t_i = t0 + i*dt.
struct Profile1D {
  double t0 = 0.0;
  double dt = 1.0;
  std::vector<double> v;
  std::vector<double> slopes;  // filled by finalize()

  int size() const { return static_cast<int>(v.size()); }
  double t(int i) const { return t0 + i * dt; }
  double t_max() const { return t(size() - 1); }
  void finalize();
  double interpolate(double t) const;  // 0 outside the grid
  double mass() const;
  double mean() const;
  double variance() const;
  /// Scale values so the mass is 1.
  void normalize();
};

/// The rescaled profile f_n(t) = c^{(n)-1} qbar_n(M_n + t/c^{(n)}).
struct ProfileF {
  Profile1D prof;
  int n = 0;
  double M = 0.0;    // M_n, absolute units
  double c_n = 0.0;  // c^{(n)}
};

/// Result of one application of the approximating low-temperature operator.
struct TbarResult {
  Profile1D image;   // centered, mass 1
  double m_shift;    // first moment of the un-centered image
  double Z;          // norming constant
};

/// pi_n / pi-tilde_n profiles with their centering constants.
struct PiProfile {
  Profile1D pi;        // Eq-(1.28)-style rescaling, mass 1
  Profile1D pi_tilde;  // tilted profile, mass 1, mean 0
  double V = 0.0;      // radial std dev of the half-line normalized profile
  double Mbar = 0.0;
  double M_tilde = 0.0, V_tilde = 0.0;  // sqrt(T) M_n, sqrt(T)/(c^{(n)} M_n)
  double a0 = 0.0, C = 0.0;             // pi_tilde centering constants
};

class LowTempAnalysis {
 public:
  explicit LowTempAnalysis(const Flow& flow) : flow_(&flow) {}

  /// f_n from a flow state; MeanViolation when the centering drifts.
  ProfileF extract_f(const FlowState& s) const;

  /// One application of the approximating operator to f.
  TbarResult apply_Tbar(const ProfileF& f, double M, double c_next) const;
  double m_shift(const ProfileF& f, double M, double c_next) const;

  /// Smallest fitted constant C with
  ///   f(t) <= C beta^{-1/2} exp(-beta^{-1/2} |2t + t^2/(c^{(n)} M)|).
  double hypothesis_I_constant(const ProfileF& f, double beta) const;

  PiProfile build_pi_n(const FlowState& s) const;

 private:
  const Flow* flow_;
};

/// N_1 = min{n >= N : beta_{n+1} <= 100 / M_n^2}; empty if never reached.
std::optional<int> detect_N1(const Trajectory& traj);

}  // namespace hrg
