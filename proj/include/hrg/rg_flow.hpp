#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "hrg/coupling.hpp"
#include "hrg/radial.hpp"

namespace hrg {

/// Model parameters of the initial density class and region machinery.
struct ModelParams {
  int r = 2;
  double kappa = 0.05;
  double T = 1.0;
  std::vector<double> eps_poly;  // eps(t) = sum_k eps_poly[k] t^k
  double eta = 0.1;
  double eta_bar = 0.05;

  void validate() const;
};

/// Numerical knobs of the recursion.
struct FlowSettings {
  int grid_m = 0;          // 0 = automatic from feature width
  int spp = 14;            // samples per feature width when automatic
  int quad_u = 96;         // GL nodes for the u integral (per interval)
  int quad_rho = 96;       // GL nodes for the radial transverse integral
  int panel_nodes = 12;    // GL nodes per panel in spike regimes
  double theta_high = 1e-6;   // practical high-region threshold on D^2
  double x_max_ceiling = 1e4;
  double window_log_depth = 500.0;  // keep values down to e^{-depth} * peak
  double mass_check_tol = 1e-4;
  int threads = 1;
  int max_grid_m = 60001;
};

/// Uniform window [lo, hi] in the flow's stored coordinate.
struct WindowGrid {
  double lo = 0.0, hi = 1.0;
  int m = 129;
  double h() const { return (hi - lo) / (m - 1); }
  double x(int i) const { return lo + i * h(); }
};

/// Radial profile of q_n over a window, in stored units with a power-of-two
/// coordinate scale: absolute radius = 2^{log2_scale} * stored radius and
/// the stored profile is FullSpace-normalized in stored units. The scale is
/// pure relabeling, so the recursion itself is exact in these coordinates.
class FlowProfile {
 public:
  FlowProfile(WindowGrid g, std::vector<double> values, int r,
              double log2_scale);

  const WindowGrid& grid() const { return g_; }
  const std::vector<double>& values() const { return v_; }
  int r() const { return r_; }
  double log2_scale() const { return s_; }

  /// 0 outside the window; clamped nonnegative inside.
  double interpolate(double x) const;

  // stored-unit summary statistics (computed once at construction)
  double mom2() const { return mom2_; }    // E|x|^2, full-space
  double mom4() const { return mom4_; }    // E|x|^4, full-space
  double mean_hl() const { return mean_hl_; }  // axis profile mean
  double sd_hl() const { return sd_hl_; }      // axis profile std dev
  double peak_x() const { return peak_x_; }
  double peak_value() const { return peak_v_; }
  double max_log_slope() const { return max_log_slope_; }

 private:
  WindowGrid g_;
  std::vector<double> v_;
  std::vector<double> slopes_;
  int r_;
  double s_;
  double mom2_ = 0, mom4_ = 0, mean_hl_ = 0, sd_hl_ = 0;
  double peak_x_ = 0, peak_v_ = 0, max_log_slope_ = 0;
};

enum class Region { Low, High, Intermediate, PreN };
const char* region_name(Region r);

/// Full state of one RG level.
struct FlowState {
  int n = 0;
  FlowProfile q;
  double Z = 1.0;  // norming constant of the step that produced this state
  double M = 0.0;  // half-line mean of qbar_n, absolute units (0 if underflowed)
  double log2_M = 0.0;
  bool Mbar_valid = false;  // p-map shell representable in the stored window
  double Mbar = 0.0;
  double log2_Mbar = 0.0;
  double beta = std::numeric_limits<double>::quiet_NaN();
  double alpha = std::numeric_limits<double>::quiet_NaN();
  double beta_prev = std::numeric_limits<double>::quiet_NaN();
  double D2 = 0.0;
  double log2_D2 = 0.0;
  Region region = Region::PreN;
  bool high_theoretical = false;  // D^2 below e^{-1/eta^2}

  double chi_log2() const { return n + 2.0 * log2_Mbar; }
};

enum class StopReason { ReachedHigh, MaxLevel, LeftLowNotHigh };
const char* stop_reason_name(StopReason s);

/// Per-level scalar record kept by run().
struct TrajectoryRow {
  int n;
  double T;
  double M, log2_M;
  bool Mbar_valid;
  double Mbar, log2_Mbar, chi_log2;
  double beta, alpha;
  double D2, log2_D2;
  double Z;
  Region region;
  bool high_theoretical;
  double mom2_abs_log2, mom4_abs_log2;  // full-space moments of q, log2
  double c_big_n;                       // c^{(n)}
  double c_small_n;                     // c_n = l_n / l_{n-1}
};

struct Trajectory {
  std::vector<TrajectoryRow> rows;
  StopReason stop = StopReason::MaxLevel;
  std::optional<int> N;  // n_of_eta when it exists
  double T = 0.0;

  std::optional<int> first_not_low() const;
  void write_csv(std::ostream& os) const;
};

/// The exact renormalization recursion q_n -> q_{n+1} with all per-level
/// bookkeeping. Immutable; member calls are safe to run concurrently on
/// distinct states.
class Flow {
 public:
  Flow(ModelParams params, CouplingSequence coupling, FlowSettings settings);

  const ModelParams& params() const { return params_; }
  const CouplingSequence& coupling() const { return coupling_; }
  const FlowSettings& settings() const { return settings_; }

  double c0A0() const { return c0a0_; }
  std::optional<int> N() const { return N_; }

  FlowState init_q0() const;
  FlowState step(const FlowState& s) const;

  /// p_n as a from-zero RadialDensity in absolute units.
  RadialDensity to_p(const FlowState& s) const;
  /// Axis profile qbar_n (HalfLine normalized) as a from-zero density.
  RadialDensity qbar(const FlowState& s) const;

  /// (beta_{n+1}, alpha_{n+1}) from level-n data; returns empty below N.
  std::optional<std::pair<double, double>> update_beta_alpha(
      int n, double beta_n, double alpha_n, double M_n_abs) const;

  Region classify(int n, double beta_prev, double D2) const;

  /// Iterates step() until the practical high threshold is met (then
  /// continues continue_past_high more levels), n_max is reached, or a
  /// numerical failure surfaces.
  Trajectory run(int n_max,
                 const std::function<void(const FlowState&)>& observer = {},
                 int continue_past_high = 0) const;

 private:
  friend class LowTempAnalysis;
  FlowState make_state(int n, FlowProfile q, double Z, double beta_prev,
                       double beta, double alpha) const;
  FlowProfile initial_profile() const;

  ModelParams params_;
  CouplingSequence coupling_;
  FlowSettings settings_;
  double c0a0_ = 0.0;
  std::optional<int> N_;
};

/// Run the map f over i = 0..n-1 on up to `threads` workers. The work must
/// be a pure per-index computation; results do not depend on partitioning.
void parallel_for(int n, int threads, const std::function<void(int)>& f);

}  // namespace hrg
