#pragma once

#include <optional>
#include <string>
#include <vector>

namespace hrg {

enum class CouplingForm { Constant, PolyLog, Explicit };

/// Verdict of the phase-transition series sum B = sum_{n>=1} 1/l_n.
struct DysonResult {
  enum class Verdict { Converged, Diverged, Undecided };
  Verdict verdict = Verdict::Undecided;
  double sum = 0.0;  // certified value when Converged
};

struct Condition2Entry {
  double eps;
  int K;           // smallest K making the bound hold over [L, horizon]; -1 if none
  double min_lhs;  // min over n of l_n * sum_{j=n}^{n+K} 1/l_j at the found K
  bool pass;
};

/// Pass/fail per condition together with the numeric witness that decided it.
struct ConditionReport {
  struct Entry {
    bool pass = false;
    double witness = 0.0;
    std::string detail;
  };
  Entry c1, c3, c4, c5;
  std::vector<Condition2Entry> c2;
  double eta_bar = 0.0, kappa = 0.0;
  int L = 0, horizon = 0;

  bool c2_pass() const;
  bool all_pass() const;
  std::string to_json() const;
};

/// The sequence l_n = l(2^n) together with everything derived from it:
/// ratios c_n, the series A_n, the kernel coefficients c^{(n)}, Dyson
/// partial sums and condition checks. Immutable after construction; values
/// beyond the eager cache are recomputed from the closed form.
class CouplingSequence {
 public:
  static CouplingSequence constant();
  static CouplingSequence poly_log(double a, double lambda);
  static CouplingSequence explicit_list(std::vector<double> values);
  static CouplingSequence from_json(const std::string& json);
  std::string to_json() const;

  CouplingForm form() const { return form_; }
  double param_a() const { return a_; }
  double param_lambda() const { return lambda_; }

  /// l_n (n >= 0); l(-1) = 1 by convention.
  double l(int n) const;
  /// c_n = l_n / l_{n-1}.
  double c(int n) const;
  /// A_n = 1 + l_n^{-1} sum_{j>=1} 2^{-j} l_{n+j}, truncated once the next
  /// term drops below tol * partial sum.
  double a_seq(int n, double tol = 1e-12) const;
  /// c^{(n)} = (1 + A_{n+1}) l_n.
  double c_big(int n, double tol = 1e-12) const;

  DysonResult dyson_sum(double abs_tol = 1e-9, long n_budget = 4000000) const;

  /// N = min{n : l_n > 1/eta}; empty when l_n is bounded below 1/eta.
  std::optional<int> try_n_of_eta(double eta) const;
  /// Same, but throws NoSuchLevel.
  int n_of_eta(double eta) const;

  /// Certified sum_{k>=n} 1/c^{(k)} (requires a convergent Dyson sum).
  double c_big_tail_sum(int n, double rel_tol = 1e-10) const;
  /// Certified sum_{j>=n} 1/l_j (requires a convergent Dyson sum).
  double inv_l_tail_sum(int n, double rel_tol = 1e-10) const;

  ConditionReport check_conditions(double eta_bar, double kappa, int L,
                                   int horizon) const;

 private:
  CouplingSequence() = default;

  CouplingForm form_ = CouplingForm::Constant;
  double a_ = 0.0;
  double lambda_ = 0.0;
  std::vector<double> explicit_values_;
  std::vector<double> cache_;  // eager l_n table
  int series_budget_ = 2048;   // j budget before declaring DivergentSeries
};

}  // namespace hrg
