#include "hrg/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "hrg/errors.hpp"

namespace hrg {

using nlohmann::json;

namespace {
constexpr int kEagerCache = 1024;
constexpr double kDivergenceCeiling = 1e6;
}  // namespace

CouplingSequence CouplingSequence::constant() {
  CouplingSequence s;
  s.form_ = CouplingForm::Constant;
  return s;
}

CouplingSequence CouplingSequence::poly_log(double a, double lambda) {
  if (!(a > 0.0)) fail(ErrorCode::InvalidConfig, "poly_log: a must be > 0");
  if (!(lambda > 1.0))
    fail(ErrorCode::InvalidConfig, "poly_log: lambda must be > 1");
  CouplingSequence s;
  s.form_ = CouplingForm::PolyLog;
  s.a_ = a;
  s.lambda_ = lambda;
  s.cache_.resize(kEagerCache);
  for (int n = 0; n < kEagerCache; ++n)
    s.cache_[n] = std::pow(1.0 + a * n, lambda);
  return s;
}

CouplingSequence CouplingSequence::explicit_list(std::vector<double> values) {
  if (values.empty())
    fail(ErrorCode::InvalidConfig, "explicit coupling: empty value list");
  for (double v : values)
    if (!(v > 0.0))
      fail(ErrorCode::InvalidConfig, "explicit coupling: values must be > 0");
  CouplingSequence s;
  s.form_ = CouplingForm::Explicit;
  s.explicit_values_ = std::move(values);
  return s;
}

CouplingSequence CouplingSequence::from_json(const std::string& text) {
  json j = json::parse(text);
  if (!j.is_object() || !j.contains("form"))
    fail(ErrorCode::InvalidConfig, "coupling: expected object with \"form\"");
  std::string form = j.at("form").get<std::string>();
  if (form == "constant") {
    for (auto& [k, v] : j.items())
      if (k != "form") fail(ErrorCode::InvalidConfig, "coupling: unknown key " + k);
    return constant();
  }
  if (form == "polylog") {
    for (auto& [k, v] : j.items())
      if (k != "form" && k != "a" && k != "lambda")
        fail(ErrorCode::InvalidConfig, "coupling: unknown key " + k);
    return poly_log(j.at("a").get<double>(), j.at("lambda").get<double>());
  }
  if (form == "explicit") {
    for (auto& [k, v] : j.items())
      if (k != "form" && k != "values" && k != "tail")
        fail(ErrorCode::InvalidConfig, "coupling: unknown key " + k);
    if (j.contains("tail") && j.at("tail").get<std::string>() != "constant")
      fail(ErrorCode::InvalidConfig, "coupling: only \"constant\" tail supported");
    return explicit_list(j.at("values").get<std::vector<double>>());
  }
  fail(ErrorCode::InvalidConfig, "coupling: unknown form " + form);
}

std::string CouplingSequence::to_json() const {
  json j;
  switch (form_) {
    case CouplingForm::Constant:
      j["form"] = "constant";
      break;
    case CouplingForm::PolyLog:
      j["form"] = "polylog";
      j["a"] = a_;
      j["lambda"] = lambda_;
      break;
    case CouplingForm::Explicit:
      j["form"] = "explicit";
      j["values"] = explicit_values_;
      j["tail"] = "constant";
      break;
  }
  return j.dump();
}

double CouplingSequence::l(int n) const {
  if (n < 0) return 1.0;  // l_{-1} = 1 convention
  switch (form_) {
    case CouplingForm::Constant:
      return 1.0;
    case CouplingForm::PolyLog:
      if (n < static_cast<int>(cache_.size())) return cache_[n];
      return std::pow(1.0 + a_ * n, lambda_);
    case CouplingForm::Explicit:
      if (n < static_cast<int>(explicit_values_.size()))
        return explicit_values_[n];
      return explicit_values_.back();  // constant tail
  }
  return 1.0;
}

double CouplingSequence::c(int n) const { return l(n) / l(n - 1); }

double CouplingSequence::a_seq(int n, double tol) const {
  if (n < 0) fail(ErrorCode::InvalidConfig, "a_seq: n must be >= 0");
  const double ln = l(n);
  double sum = 1.0;  // leading 1
  double pow2 = 1.0;
  for (int j = 1; j <= series_budget_; ++j) {
    pow2 *= 0.5;
    double term = pow2 * l(n + j) / ln;
    sum += term;
    if (term < tol * sum) return sum;
  }
  fail(ErrorCode::DivergentSeries,
       "a_seq: terms 2^{-j} l_{n+j}/l_n failed to decay within budget at n=" +
           std::to_string(n));
}

double CouplingSequence::c_big(int n, double tol) const {
  return (1.0 + a_seq(n + 1, tol)) * l(n);
}

DysonResult CouplingSequence::dyson_sum(double abs_tol, long n_budget) const {
  DysonResult r;
  switch (form_) {
    case CouplingForm::Constant:
      // sum of ones
      r.verdict = DysonResult::Verdict::Diverged;
      return r;
    case CouplingForm::PolyLog: {
      if (lambda_ <= 1.0) {  // rejected at construction, kept for safety
        r.verdict = DysonResult::Verdict::Diverged;
        return r;
      }
      // Integral tail bound: sum_{n>m} (1+an)^-L <= (1+am)^{1-L} / (a(L-1)).
      double s = 0.0;
      for (long n = 1; n <= n_budget; ++n) {
        s += 1.0 / l(static_cast<int>(std::min<long>(n, 1 << 30)));
        double tail_bound =
            std::pow(1.0 + a_ * double(n), 1.0 - lambda_) / (a_ * (lambda_ - 1.0));
        if (tail_bound < abs_tol) {
          r.verdict = DysonResult::Verdict::Converged;
          r.sum = s + 0.5 * tail_bound;  // midpoint of [s, s+bound]
          return r;
        }
      }
      r.verdict = DysonResult::Verdict::Undecided;
      r.sum = s;
      return r;
    }
    case CouplingForm::Explicit: {
      // Constant tail: once past the list the increments are a fixed
      // positive number, so the series diverges -- unless the budget ends
      // inside the list, which leaves the verdict open.
      if (static_cast<long>(explicit_values_.size()) > n_budget) {
        double s = 0.0;
        for (long n = 1; n <= n_budget; ++n) {
          s += 1.0 / l(static_cast<int>(n));
          if (s > kDivergenceCeiling) {
            r.verdict = DysonResult::Verdict::Diverged;
            return r;
          }
        }
        r.verdict = DysonResult::Verdict::Undecided;
        r.sum = s;
        return r;
      }
      r.verdict = DysonResult::Verdict::Diverged;
      return r;
    }
  }
  return r;
}

std::optional<int> CouplingSequence::try_n_of_eta(double eta) const {
  if (!(eta > 0.0 && eta < 1.0))
    fail(ErrorCode::InvalidConfig, "n_of_eta: eta must be in (0,1)");
  const double bound = 1.0 / eta;
  switch (form_) {
    case CouplingForm::Constant:
      return std::nullopt;  // l_n == 1 <= 1/eta
    case CouplingForm::PolyLog: {
      // l increasing and unbounded: solve directly.
      double base = std::pow(bound, 1.0 / lambda_);
      int n = std::max(0, static_cast<int>(std::ceil((base - 1.0) / a_)) - 2);
      while (l(n) <= bound) ++n;
      return n;
    }
    case CouplingForm::Explicit: {
      for (int n = 0; n < static_cast<int>(explicit_values_.size()); ++n)
        if (l(n) > bound) return n;
      return std::nullopt;  // constant tail stays at the last value
    }
  }
  return std::nullopt;
}

int CouplingSequence::n_of_eta(double eta) const {
  auto n = try_n_of_eta(eta);
  if (!n)
    fail(ErrorCode::NoSuchLevel,
         "n_of_eta: l_n bounded below 1/eta = " + std::to_string(1.0 / eta));
  return *n;
}

double CouplingSequence::c_big_tail_sum(int n, double rel_tol) const {
  if (form_ == CouplingForm::Constant || form_ == CouplingForm::Explicit)
    fail(ErrorCode::DivergentSeries, "c_big_tail_sum: divergent tail");
  // c^{(k)} = (1+A_{k+1}) l_k and A >= 2 for increasing l, so the remainder
  // is at most one third of the integral tail bound for sum 1/l_k.
  double s = 0.0;
  for (int k = n;; ++k) {
    s += 1.0 / c_big(k);
    double lk_tail =
        std::pow(1.0 + a_ * double(k + 1), 1.0 - lambda_) / (a_ * (lambda_ - 1.0));
    double tail_hi = lk_tail / 3.0;
    if (tail_hi < rel_tol * s + 1e-300) return s + 0.5 * tail_hi;
    if (k - n > 40000000)
      fail(ErrorCode::DivergentSeries, "c_big_tail_sum: budget exhausted");
  }
}

double CouplingSequence::inv_l_tail_sum(int n, double rel_tol) const {
  if (form_ == CouplingForm::Constant || form_ == CouplingForm::Explicit)
    fail(ErrorCode::DivergentSeries, "inv_l_tail_sum: divergent tail");
  double s = 0.0;
  for (int k = n;; ++k) {
    s += 1.0 / l(k);
    double tail =
        std::pow(1.0 + a_ * double(k + 1), 1.0 - lambda_) / (a_ * (lambda_ - 1.0));
    if (tail < rel_tol * s + 1e-300) return s + 0.5 * tail;
    if (k - n > 40000000)
      fail(ErrorCode::DivergentSeries, "inv_l_tail_sum: budget exhausted");
  }
}

bool ConditionReport::c2_pass() const {
  if (c2.empty()) return false;
  return std::all_of(c2.begin(), c2.end(),
                     [](const Condition2Entry& e) { return e.pass; });
}

bool ConditionReport::all_pass() const {
  return c1.pass && c2_pass() && c3.pass && c4.pass && c5.pass;
}

std::string ConditionReport::to_json() const {
  json j;
  j["params"] = {{"eta_bar", eta_bar}, {"kappa", kappa}, {"L", L}, {"horizon", horizon}};
  auto entry = [](const Entry& e) {
    return json{{"pass", e.pass}, {"witness", e.witness}, {"detail", e.detail}};
  };
  j["condition1"] = entry(c1);
  j["condition3"] = entry(c3);
  j["condition4"] = entry(c4);
  j["condition5"] = entry(c5);
  j["condition2"] = json::array();
  for (const auto& e : c2)
    j["condition2"].push_back({{"eps", e.eps},
                               {"K", e.K},
                               {"min_lhs", e.min_lhs},
                               {"pass", e.pass}});
  j["condition2_pass"] = c2_pass();
  j["all_pass"] = all_pass();
  return j.dump(2);
}

ConditionReport CouplingSequence::check_conditions(double eta_bar, double kappa,
                                                   int L, int horizon) const {
  if (horizon < std::max(L, 8))
    fail(ErrorCode::InvalidConfig, "check_conditions: horizon too small");
  ConditionReport rep;
  rep.eta_bar = eta_bar;
  rep.kappa = kappa;
  rep.L = L;
  rep.horizon = horizon;

  // Condition 1: l_0 = 1, 1 <= c_n <= 1.01 for all n, c_n -> 1 (tested as
  // c_n <= 1.001 on the tail half of the horizon).
  {
    bool pass = std::fabs(l(0) - 1.0) < 1e-12;
    std::string detail;
    if (!pass) detail = "l_0 != 1";
    double worst_c = 1.0;
    int worst_n = 0;
    for (int n = 1; n <= horizon; ++n) {
      double cn = c(n);
      if (cn > worst_c) {
        worst_c = cn;
        worst_n = n;
      }
      if (cn < 1.0 - 1e-12 || cn > 1.01) pass = false;
    }
    for (int n = horizon / 2; n <= horizon; ++n)
      if (c(n) > 1.001) {
        pass = false;
        if (detail.empty()) detail = "tail c_n above 1.001 at n=" + std::to_string(n);
      }
    rep.c1.pass = pass;
    rep.c1.witness = worst_c;
    if (detail.empty())
      detail = "max c_n = " + std::to_string(worst_c) + " at n=" + std::to_string(worst_n);
    rep.c1.detail = detail;
  }

  // Condition 2: for each eps find K with l_n sum_{j=n}^{n+K} 1/l_j >= 1/eps
  // for all n in [L, horizon].
  for (double eps : {1.0, 0.5, 0.1}) {
    Condition2Entry e;
    e.eps = eps;
    e.K = -1;
    e.min_lhs = 0.0;
    e.pass = false;
    const double target = 1.0 / eps;
    const int k_max = 4 * static_cast<int>(std::ceil(target)) + 64;
    for (int K = 1; K <= k_max; ++K) {
      double min_lhs = std::numeric_limits<double>::infinity();
      for (int n = L; n <= horizon; ++n) {
        double s = 0.0;
        for (int j = n; j <= n + K; ++j) s += 1.0 / l(j);
        min_lhs = std::min(min_lhs, l(n) * s);
      }
      if (min_lhs >= target) {
        e.K = K;
        e.min_lhs = min_lhs;
        e.pass = true;
        break;
      }
      e.min_lhs = min_lhs;
    }
    rep.c2.push_back(e);
  }

  // Condition 3: sup_n sum_{k=1}^n (l_k sum_{j=k}^n 1/l_j)^{-2}. Bounded
  // sequences saturate early; pass iff the sup over the full horizon grew
  // less than 10% beyond the half-horizon sup.
  {
    double sup_half = 0.0, sup_full = 0.0;
    std::vector<double> inv_l(horizon + 1);
    for (int j = 0; j <= horizon; ++j) inv_l[j] = 1.0 / l(j);
    for (int n = 2; n <= horizon; ++n) {
      double total = 0.0;
      double suffix = 0.0;
      // suffix sums from n down to k
      std::vector<double> srev(n + 1);
      for (int k = n; k >= 1; --k) {
        suffix += inv_l[k];
        srev[k] = suffix;
      }
      for (int k = 1; k <= n; ++k) {
        double t = l(k) * srev[k];
        total += 1.0 / (t * t);
      }
      sup_full = std::max(sup_full, total);
      if (n <= horizon / 2) sup_half = std::max(sup_half, total);
    }
    rep.c3.pass = sup_full <= 1.10 * sup_half;
    rep.c3.witness = sup_full;
    std::ostringstream os;
    os << "sup(horizon)=" << sup_full << " sup(horizon/2)=" << sup_half;
    rep.c3.detail = os.str();
  }

  // Condition 4: sum_{n>=1} 1/l_n > 400/kappa.
  {
    const double target = 400.0 / kappa;
    DysonResult d = dyson_sum(1e-9, 4000000);
    if (d.verdict == DysonResult::Verdict::Diverged) {
      rep.c4.pass = true;
      rep.c4.witness = std::numeric_limits<double>::infinity();
      rep.c4.detail = "divergent sum";
    } else if (d.verdict == DysonResult::Verdict::Converged) {
      rep.c4.pass = d.sum > target;
      rep.c4.witness = d.sum;
      std::ostringstream os;
      os << "B=" << d.sum << " vs 400/kappa=" << target;
      rep.c4.detail = os.str();
    } else {
      rep.c4.pass = false;
      rep.c4.witness = d.sum;
      rep.c4.detail = "undecided partial sum";
    }
  }

  // Condition 5: l_n / l_{n+k} > eta_bar for n <= horizon, k <= L.
  {
    double worst = std::numeric_limits<double>::infinity();
    for (int n = 0; n <= horizon; ++n)
      for (int k = 1; k <= L; ++k)
        worst = std::min(worst, l(n) / l(n + k));
    rep.c5.pass = worst > eta_bar;
    rep.c5.witness = worst;
    std::ostringstream os;
    os << "min l_n/l_{n+k}=" << worst << " vs eta_bar=" << eta_bar;
    rep.c5.detail = os.str();
  }

  return rep;
}

}  // namespace hrg
