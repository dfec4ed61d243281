#include "hrg/critical.hpp"

#include <algorithm>
#include <cmath>
#include <array>
#include <cstdio>

#include <json.hpp>

#include "hrg/errors.hpp"
#include "hrg/numerics.hpp"

namespace hrg {

using nlohmann::json;

std::optional<int> nbar(const Trajectory& traj) { return traj.first_not_low(); }

CriticalScanner::CriticalScanner(ModelParams base, CouplingSequence coupling,
                                 FlowSettings flow, CriticalSettings critical)
    : base_(base), coupling_(std::move(coupling)), flow_(flow), crit_(critical) {}

Flow CriticalScanner::flow_at(double T) const {
  ModelParams p = base_;
  p.T = T;
  return Flow(p, coupling_, flow_);
}

int CriticalScanner::exit_level(double T) const {
  {
    std::lock_guard<std::mutex> lock(cache_mu_);
    auto it = probe_cache_.find(T);
    if (it != probe_cache_.end()) return it->second;
  }
  Flow fl = flow_at(T);
  int exit = crit_.n_cap + 1;
  FlowState s = fl.init_q0();
  for (;;) {
    if (s.region != Region::Low) {
      exit = s.n;
      break;
    }
    if (s.n >= crit_.n_cap) break;
    s = fl.step(s);
  }
  {
    std::lock_guard<std::mutex> lock(cache_mu_);
    probe_cache_.emplace(T, exit);
  }
  return exit;
}

double CriticalScanner::bisect_Tn(int n, double T_lo, double T_hi,
                                  double tol_T) const {
  if (!(T_lo < T_hi)) fail(ErrorCode::BracketInvalid, "bisect_Tn: empty bracket");
  if (!low_through(T_lo, n) || low_through(T_hi, n))
    fail(ErrorCode::BracketInvalid,
         "bisect_Tn: endpoints do not straddle the boundary at level " +
             std::to_string(n));
  // monotone validation: the predicate must flip exactly once
  {
    std::vector<double> ts(crit_.pre_scan);
    for (int i = 0; i < crit_.pre_scan; ++i)
      ts[i] = T_lo + (T_hi - T_lo) * (i + 1.0) / (crit_.pre_scan + 1.0);
    parallel_for(crit_.pre_scan, crit_.threads,
                 [&](int i) { (void)exit_level(ts[i]); });
    int flips = 0;
    bool prev = true;
    for (double t : ts) {
      bool cur = low_through(t, n);
      if (cur != prev) ++flips;
      prev = cur;
    }
    if (prev) ++flips;  // final segment toward T_hi (not low)
    if (flips != 1)
      fail(ErrorCode::BracketInvalid,
           "bisect_Tn: predicate flips " + std::to_string(flips) +
               " times in the bracket at level " + std::to_string(n));
  }
  double lo = T_lo, hi = T_hi;
  while (hi - lo > tol_T) {
    double mid = 0.5 * (lo + hi);
    if (low_through(mid, n))
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

CriticalScan CriticalScanner::estimate_Tc() const {
  CriticalScan scan;
  scan.coupling_json = coupling_.to_json();
  scan.eta = base_.eta;

  auto dyson = coupling_.dyson_sum();
  if (dyson.verdict != DysonResult::Verdict::Converged) {
    scan.all_high = true;
    return scan;
  }

  Flow probe0 = flow_at(1.0);
  const double c0a0 = probe0.c0A0();
  auto N = probe0.N();
  if (!N)
    fail(ErrorCode::NoSuchLevel,
         "estimate_Tc: coupling never exceeds 1/eta, no boundary levels");

  // level window past the bootstrap plateau
  const int n_start = *N + 2;
  const int n_end = n_start + crit_.n_levels - 1;
  if (n_end + 5 > crit_.n_cap)
    fail(ErrorCode::InvalidConfig, "estimate_Tc: n_cap too small");

  // lower anchor: a temperature that stays Low through every level probed
  double T_hi0 = 0.4999 * c0a0;
  double T_lo0 = 0.02 * c0a0;
  int guard = 0;
  while (!low_through(T_lo0, n_end) && ++guard < 12) T_lo0 *= 0.5;
  if (guard >= 12)
    fail(ErrorCode::BracketInvalid,
         "estimate_Tc: no low anchor found below c0 A0 / 2");
  if (low_through(T_hi0, n_end)) {
    // Low everywhere up to the cap: the scan cannot see the boundary
    scan.degenerate_low = true;
    return scan;
  }

  double hi = T_hi0;
  for (int n = n_start; n <= n_end; ++n) {
    // T_n is nonincreasing in n: inherit the upper end
    double tn = bisect_Tn(n, T_lo0, hi, crit_.tol_T);
    scan.T_n.emplace_back(n, tn);
    hi = std::min(hi, tn + 8.0 * crit_.tol_T);
  }

  const auto& tn = scan.T_n;
  double t_last = tn.back().second;
  double t_prev = tn[tn.size() - 2].second;
  scan.Tc_lo = t_last - (t_prev - t_last);
  scan.Tc_hi = t_last;
  scan.Tc = 0.5 * (scan.Tc_lo + scan.Tc_hi);

  for (size_t i = 0; i + 1 < tn.size(); ++i) {
    double d = tn[i].second - tn[i + 1].second;
    scan.cn_dT.emplace_back(tn[i].first,
                            coupling_.c_big(tn[i].first) * d);
  }

  // magnetization points below Tc
  std::vector<double> mag_T(crit_.mag_temps);
  for (int i = 0; i < crit_.mag_temps; ++i) {
    double f = crit_.mag_window_lo *
               std::pow(crit_.mag_window_hi / crit_.mag_window_lo,
                        double(i) / (crit_.mag_temps - 1));
    mag_T[i] = scan.Tc_lo * (1.0 - f);
  }
  std::vector<ScanPoint> mag_pts(crit_.mag_temps);
  parallel_for(crit_.mag_temps, crit_.threads, [&](int i) {
    ScanPoint p;
    p.T = mag_T[i];
    auto mi = estimate_M_inf(p.T, crit_.mag_levels);
    if (mi) {
      p.verdict = "low";
      p.M_inf = *mi;
      p.M_T = std::sqrt(p.T) * *mi;
    } else {
      p.verdict = "left_low_not_high";
    }
    mag_pts[i] = p;
  });

  // susceptibility points above Tc
  std::vector<double> chi_T(crit_.chi_temps);
  for (int i = 0; i < crit_.chi_temps; ++i) {
    double f = crit_.mag_window_lo *
               std::pow(crit_.mag_window_hi / crit_.mag_window_lo,
                        double(i) / (crit_.chi_temps - 1));
    chi_T[i] = scan.Tc_hi * (1.0 + f);
  }
  std::vector<ScanPoint> chi_pts(crit_.chi_temps);
  parallel_for(crit_.chi_temps, crit_.threads, [&](int i) {
    ScanPoint p;
    p.T = chi_T[i];
    Flow fl = flow_at(p.T);
    Trajectory tr = fl.run(crit_.n_cap, {}, 12);
    p.verdict = stop_reason_name(tr.stop);
    p.nbar = nbar(tr);
    if (tr.stop == StopReason::ReachedHigh) p.chi_log2 = tr.rows.back().chi_log2;
    chi_pts[i] = p;
  });

  for (auto& p : mag_pts) scan.points.push_back(p);
  for (auto& p : chi_pts) scan.points.push_back(p);

  // magnetization exponent fit on the valid below-Tc points
  {
    std::vector<double> lx, ly;
    for (const auto& p : mag_pts)
      if (std::isfinite(p.M_T) && p.M_T > 0.0 && p.T < scan.Tc) {
        lx.push_back(std::log(scan.Tc - p.T));
        ly.push_back(std::log(p.M_T));
      }
    if (lx.size() >= 6) {
      auto f = fit_line(lx, ly);
      scan.mag_slope = f.slope;
      scan.mag_residual = f.residual_rms;
    }
  }

  // near-critical gap and susceptibility ratios
  for (const auto& p : chi_pts) {
    if (!p.nbar || *p.nbar <= 0) continue;
    double tail = coupling_.c_big_tail_sum(*p.nbar);
    scan.gap_ratio.push_back((p.T - scan.Tc) / tail);
    if (std::isfinite(p.chi_log2)) {
      double log2_ratio =
          p.chi_log2 - double(*p.nbar) + std::log2(coupling_.c_big(*p.nbar));
      scan.chi_ratio.push_back(exp2_sat(log2_ratio));
    }
  }
  return scan;
}

std::optional<double> CriticalScanner::estimate_M_inf(double T,
                                                      int depth) const {
  Flow fl = flow_at(T);
  FlowState s = fl.init_q0();
  for (int n = 0; n < depth; ++n) {
    if (s.region != Region::Low) return std::nullopt;
    s = fl.step(s);
  }
  if (s.region != Region::Low) return std::nullopt;
  double m2 = s.M * s.M -
              0.5 * (base_.r - 1) * coupling_.c_big_tail_sum(s.n);
  if (!(m2 > 0.0)) return std::nullopt;
  return std::sqrt(m2);
}

DmdtReport CriticalScanner::dM_dT_check(double T, int n_levels) const {
  DmdtReport rep;
  rep.T = T;
  rep.deltaT = std::max(1e-4, 1e-3 * T);

  auto run_M = [&](double t) {
    Flow fl = flow_at(t);
    std::vector<double> M;
    std::vector<double> beta;
    FlowState s = fl.init_q0();
    M.push_back(s.M);
    beta.push_back(s.beta);
    for (int n = 0; n < n_levels; ++n) {
      s = fl.step(s);
      M.push_back(s.M);
      beta.push_back(s.beta);
    }
    return std::pair{M, beta};
  };

  double d = rep.deltaT;
  std::array<std::pair<std::vector<double>, std::vector<double>>, 5> runs;
  const double offsets[5] = {-d, -0.5 * d, 0.0, 0.5 * d, d};
  parallel_for(5, crit_.threads,
               [&](int i) { runs[i] = run_M(T + offsets[i]); });
  const auto& [Mm, bm] = runs[0];
  const auto& [Mmh, bmh] = runs[1];
  const auto& [M0, b0] = runs[2];
  const auto& [Mph, bph] = runs[3];
  const auto& [Mp, bp] = runs[4];

  Flow fl = flow_at(T);
  auto N = fl.N();
  std::vector<double> dM(n_levels + 1), dMh(n_levels + 1);
  for (int n = 0; n <= n_levels; ++n) {
    dM[n] = (Mp[n] - Mm[n]) / (2.0 * d);
    dMh[n] = (Mph[n] - Mmh[n]) / d;
    if (!(dM[n] < 0.0)) rep.all_negative = false;
  }
  for (int n = 0; n < n_levels; ++n) {
    DmdtReport::Row row;
    row.n = n;
    row.dM = dM[n];
    row.dM_half = dMh[n];
    row.ratio = dM[n + 1] / dM[n];
    row.M_n = M0[n];
    row.c_big_n = coupling_.c_big(n);
    row.predicted =
        1.0 + 0.25 * (base_.r - 1) / (row.c_big_n * M0[n] * M0[n]);
    double beta_n = b0[n], beta_n1 = b0[n + 1];
    if (std::isfinite(beta_n) && std::isfinite(beta_n1))
      row.band = (beta_n1 / coupling_.c_big(n + 1)) * beta_n / row.c_big_n;
    else
      row.band = std::numeric_limits<double>::quiet_NaN();
    rep.rows.push_back(row);
  }
  if (N && *N <= n_levels && *N >= 1)
    rep.part_a_value = -dM[*N] * std::sqrt(base_.kappa) * T * T;
  else
    rep.part_a_value = -dM[std::min(1, n_levels)] * std::sqrt(base_.kappa) * T * T;
  return rep;
}

std::string DmdtReport::to_json() const {
  json j;
  j["T"] = T;
  j["deltaT"] = deltaT;
  j["all_negative"] = all_negative;
  j["part_a_value"] = part_a_value;
  j["rows"] = json::array();
  for (const auto& r : rows)
    j["rows"].push_back({{"n", r.n},
                         {"dM", r.dM},
                         {"dM_half", r.dM_half},
                         {"ratio", r.ratio},
                         {"predicted", r.predicted},
                         {"band", r.band},
                         {"M_n", r.M_n},
                         {"c_big_n", r.c_big_n}});
  return j.dump(2);
}

std::string CriticalScan::to_json() const {
  json j;
  j["coupling"] = json::parse(coupling_json);
  j["eta"] = eta;
  j["all_high"] = all_high;
  j["degenerate_low"] = degenerate_low;
  if (!all_high && !degenerate_low) {
    j["T_n"] = json::array();
    for (auto [n, t] : T_n) j["T_n"].push_back({{"n", n}, {"T", t}});
    j["Tc"] = Tc;
    j["Tc_bracket"] = {Tc_lo, Tc_hi};
    j["cn_dT"] = json::array();
    for (auto [n, v] : cn_dT) j["cn_dT"].push_back({{"n", n}, {"value", v}});
    j["mag_slope"] = mag_slope;
    j["mag_residual"] = mag_residual;
    j["gap_ratio"] = gap_ratio;
    j["chi_ratio"] = chi_ratio;
  }
  return j.dump(2);
}

void CriticalScan::write_csv(std::ostream& os) const {
  os << "T,verdict,nbar,chi_log2,M_inf,M_T\n";
  char buf[256];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof buf, "%.17g,%s,%d,%.17g,%.17g,%.17g\n", p.T,
                  p.verdict.c_str(), p.nbar ? *p.nbar : -1, p.chi_log2,
                  p.M_inf, p.M_T);
    os << buf;
  }
}

}  // namespace hrg
