#include "hrg/high_temp.hpp"

#include <algorithm>
#include <cmath>

#include "hrg/errors.hpp"
#include "hrg/numerics.hpp"

namespace hrg {

RadialDensity h_of_q(const Flow& flow, const FlowState& s) {
  const WindowGrid& w = s.q.grid();
  double c_n = flow.coupling().c_big(s.n);
  double scale = std::sqrt(c_n) * exp2_sat(s.q.log2_scale());
  if (!(scale > 0.0) || !std::isfinite(scale))
    fail(ErrorCode::GridOverflow, "h_of_q: scale not representable");
  double h = w.h() * scale;
  int pad = static_cast<int>(std::floor(w.lo / w.h() + 0.5));
  long total = static_cast<long>(pad) + w.m;
  if (total > 4000000)
    fail(ErrorCode::GridOverflow, "h_of_q: materialization too large");
  std::vector<double> v(total, 0.0);
  for (int i = 0; i < w.m; ++i) v[pad + i] = s.q.values()[i];
  RadialGrid g{h * (total - 1), static_cast<int>(total)};
  return RadialDensity(g, std::move(v), s.q.r(), NormMode::FullSpace, true);
}

HighObservables track_high_moments(const Trajectory& traj) {
  int entry = -1;
  for (const auto& r : traj.rows)
    if (r.region == Region::High) {
      entry = r.n;
      break;
    }
  if (entry < 0)
    fail(ErrorCode::NotInHighRegion,
         "track_high_moments: trajectory never met the high threshold");

  HighObservables out;
  out.entry_level = entry;
  double log2_c_entry = 0.0;
  std::vector<double> c_small;  // c_{entry+l} per kept row
  for (const auto& r : traj.rows) {
    if (r.n < entry) continue;
    int l = r.n - entry;
    double log2_c = std::log2(r.c_big_n);
    if (l == 0) log2_c_entry = log2_c;
    HighObservables::Row row;
    row.l = l;
    row.M2 = exp2_sat(log2_c + r.mom2_abs_log2);
    row.M4 = exp2_sat(2.0 * log2_c + r.mom4_abs_log2);
    row.sigma2 = exp2_sat(double(l) + log2_c_entry - log2_c +
                          std::log2(std::max(row.M2, 1e-300)));
    out.rows.push_back(row);
    c_small.push_back(r.c_small_n);
  }
  out.eta_star = std::max(out.rows[0].M2, out.rows[0].M4);

  for (size_t i = 0; i + 1 < out.rows.size(); ++i) {
    int l = out.rows[i].l;
    // Lemma-6.1 shape: M2(l+1) <= (c_{entry+l+1}/2)(1 + 10 sqrt(eta*)(5/6)^l) M2(l)
    double bound = 0.5 * c_small[i + 1] *
                   (1.0 + 10.0 * std::sqrt(out.eta_star) * std::pow(5.0 / 6.0, l)) *
                   out.rows[i].M2;
    if (out.rows[i + 1].M2 > bound * (1.0 + 1e-9)) out.contraction_ok = false;
    double dsig = std::fabs(out.rows[i + 1].sigma2 - out.rows[i].sigma2);
    if (dsig > 5.0 * out.eta_star * std::pow(0.75, l) +
                   1e-12 * out.rows[i].sigma2)
      out.cauchy_ok = false;
  }
  out.sigma2_limit = out.rows.back().sigma2;
  size_t k0 = out.rows.size() > 5 ? out.rows.size() - 5 : 0;
  out.sigma2_limit_lo = out.sigma2_limit_hi = out.rows[k0].sigma2;
  for (size_t i = k0; i < out.rows.size(); ++i) {
    out.sigma2_limit_lo = std::min(out.sigma2_limit_lo, out.rows[i].sigma2);
    out.sigma2_limit_hi = std::max(out.sigma2_limit_hi, out.rows[i].sigma2);
  }
  return out;
}

double gaussian_distance(const FlowState& s) {
  const FlowProfile& q = s.q;
  if (!(q.mom2() > 1e-250))
    fail(ErrorCode::DegenerateDensity, "gaussian_distance: D^2 below floor");
  const int r = q.r();
  double ratio = q.mom4() / (q.mom2() * q.mom2());
  double dist = std::fabs(ratio - double(r + 2) / double(r));

  if (r == 2) {
    // radial CDF against the Rayleigh law with sigma^2 = E|x|^2 / 2,
    // integrated per cell with a 3-point rule (exact for the cubic
    // interpolant times x)
    const WindowGrid& w = q.grid();
    double sig2 = 0.5 * q.mom2();
    const auto& g3 = gauss_legendre(3);
    double acc = 0.0;
    double total = 0.0;
    std::vector<double> cum(w.m, 0.0);
    for (int i = 0; i + 1 < w.m; ++i) {
      double a = w.x(i), b = w.x(i + 1);
      double seg = 0.0;
      for (int k = 0; k < 3; ++k) {
        double x = 0.5 * (a + b) + 0.5 * (b - a) * g3.x[k];
        seg += 0.5 * (b - a) * g3.w[k] * x * q.interpolate(x);
      }
      acc += seg;
      cum[i + 1] = acc;
    }
    total = acc;
    if (total > 0.0) {
      double sup = 0.0;
      for (int i = 0; i < w.m; ++i) {
        double x = w.x(i);
        double emp = cum[i] / total;
        double ray = -std::expm1(-0.5 * x * x / sig2);
        // the region below the window carries no mass by construction
        sup = std::max(sup, std::fabs(emp - ray));
      }
      dist = std::max(dist, sup);
    }
  }
  return dist;
}

}  // namespace hrg
