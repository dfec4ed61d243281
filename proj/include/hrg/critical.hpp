#pragma once

#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "hrg/rg_flow.hpp"

namespace hrg {

/// First level whose state is not tagged Low; empty when Low throughout.
std::optional<int> nbar(const Trajectory& traj);

struct CriticalSettings {
  double tol_T = 2e-5;  // absolute bisection tolerance on T
  int n_levels = 8;     // how many boundary levels past the plateau
  int pre_scan = 8;     // monotonicity validation points per bisection
  int mag_temps = 8;
  int mag_levels = 150;    // run depth for M_infinity estimates
  double mag_window_lo = 0.03, mag_window_hi = 0.30;  // (Tc - T)/Tc decade
  int chi_temps = 8;
  int n_cap = 500;  // probe depth treated as "low throughout"
  int threads = 1;
};

struct ScanPoint {
  double T = 0.0;
  std::string verdict;  // reached_high | low | left_low_not_high
  std::optional<int> nbar;
  double chi_log2 = std::numeric_limits<double>::quiet_NaN();
  double M_inf = std::numeric_limits<double>::quiet_NaN();  // q-coordinate limit
  double M_T = std::numeric_limits<double>::quiet_NaN();    // sqrt(T) M_inf
};

struct CriticalScan {
  std::string coupling_json;
  double eta = 0.0;
  std::vector<std::pair<int, double>> T_n;
  double Tc = 0.0, Tc_lo = 0.0, Tc_hi = 0.0;
  std::vector<std::pair<int, double>> cn_dT;  // c^{(n)} (T_n - T_{n+1})
  std::vector<ScanPoint> points;
  double mag_slope = std::numeric_limits<double>::quiet_NaN();
  double mag_residual = 0.0;
  // (T - Tc) / sum_{k >= nbar} 1/c^{(k)} per above-Tc point
  std::vector<double> gap_ratio;
  // chi / (2^{nbar} / c^{(nbar)}) per above-Tc point
  std::vector<double> chi_ratio;
  bool all_high = false;  // divergent coupling verdict
  bool degenerate_low = false;  // low through the cap at every probe

  std::string to_json() const;
  void write_csv(std::ostream& os) const;
};

/// Finite-difference report of the temperature derivatives of M_n.
struct DmdtReport {
  double T = 0.0, deltaT = 0.0;
  struct Row {
    int n;
    double dM;          // central difference
    double dM_half;     // half-step estimate (step-independence check)
    double ratio;       // dM_{n+1} / dM_n
    double predicted;   // 1 + (r-1)/(4 c^{(n)} M_n^2)
    double band;        // (beta_{n+1}/c^{(n+1)}) beta_n / c^{(n)}
    double M_n, c_big_n;
  };
  std::vector<Row> rows;
  bool all_negative = true;  // dM_n/dT < 0 throughout
  double part_a_value = 0.0;  // -dM_N/dT * sqrt(kappa) T^2 at the last pre-N level
  std::string to_json() const;
};

/// Shared-probe critical-temperature machinery. Each probe runs the flow at
/// one temperature until it leaves the Low region; results are cached, so
/// bisections for different levels reuse each other's work.
class CriticalScanner {
 public:
  CriticalScanner(ModelParams base, CouplingSequence coupling,
                  FlowSettings flow, CriticalSettings critical);

  /// First level not Low (n_cap+1 when Low through the cap). Cached.
  int exit_level(double T) const;
  bool low_through(double T, int n) const { return exit_level(T) > n; }

  /// Boundary temperature of "Low through level n" by bisection; the
  /// bracket is validated by a monotone pre-scan.
  double bisect_Tn(int n, double T_lo, double T_hi, double tol_T) const;

  CriticalScan estimate_Tc() const;

  DmdtReport dM_dT_check(double T, int n_levels) const;

  /// M_infinity estimate: M_n at depth n corrected by the analytic tail
  /// decrement (r-1)/2 sum_{k>=n} 1/c^{(k)}. Requires the run to stay Low.
  std::optional<double> estimate_M_inf(double T, int depth) const;

  const CouplingSequence& coupling() const { return coupling_; }
  Flow flow_at(double T) const;

 private:
  ModelParams base_;
  CouplingSequence coupling_;
  FlowSettings flow_;
  CriticalSettings crit_;
  mutable std::map<double, int> probe_cache_;
  mutable std::mutex cache_mu_;
};

}  // namespace hrg
