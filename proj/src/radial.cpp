#include "hrg/radial.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "hrg/errors.hpp"
#include "hrg/numerics.hpp"

namespace hrg {

namespace {

double norm_integral(const RadialGrid& g, std::span<const double> v, int r,
                     NormMode mode) {
  const int m = g.m;
  std::vector<double> f(m);
  if (mode == NormMode::FullSpace) {
    for (int i = 0; i < m; ++i) f[i] = std::pow(g.x(i), r - 1) * v[i];
    return surface_area(r) * simpson_sum(f, g.h());
  }
  for (int i = 0; i < m; ++i) f[i] = v[i];
  return simpson_sum(f, g.h());
}

}  // namespace

double surface_area(int r) {
  return 2.0 * std::pow(M_PI, 0.5 * r) / std::tgamma(0.5 * r);
}

RadialDensity::RadialDensity(RadialGrid grid, std::vector<double> values, int r,
                             NormMode mode, bool renormalize)
    : grid_(grid), values_(std::move(values)), r_(r), mode_(mode) {
  if (grid_.m < 64) fail(ErrorCode::InvalidConfig, "RadialGrid: m must be >= 64");
  if (!(grid_.x_max > 0.0))
    fail(ErrorCode::InvalidConfig, "RadialGrid: x_max must be > 0");
  if (static_cast<int>(values_.size()) != grid_.m)
    fail(ErrorCode::InvalidConfig, "RadialDensity: value count != grid size");
  if (r_ < 2) fail(ErrorCode::InvalidConfig, "RadialDensity: r must be >= 2");

  for (double& v : values_) {
    if (!std::isfinite(v))
      fail(ErrorCode::QuadratureDivergence, "RadialDensity: non-finite value");
    if (v < 0.0) v = 0.0;
  }
  if (renormalize) {
    double z = norm_integral(grid_, values_, r_, mode_);
    if (!(z > 0.0) || !std::isfinite(z))
      fail(ErrorCode::DegenerateDensity, "RadialDensity: zero or invalid mass");
    for (double& v : values_) v /= z;
  }
  slopes_ = hermite_slopes(values_, grid_.h());
}

double RadialDensity::interpolate(double x) const {
  if (x < 0.0) fail(ErrorCode::InvalidConfig, "interpolate: x must be >= 0");
  if (x > grid_.x_max) return 0.0;
  const double h = grid_.h();
  double u = x / h;
  int i = std::min(static_cast<int>(u), grid_.m - 2);
  double t = u - i;
  const double y0 = values_[i], y1 = values_[i + 1];
  const double m0 = slopes_[i] * h, m1 = slopes_[i + 1] * h;
  const double t2 = t * t, t3 = t2 * t;
  double y = (2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + t) * m0 +
             (-2 * t3 + 3 * t2) * y1 + (t3 - t2) * m1;
  return y > 0.0 ? y : 0.0;
}

std::pair<int, int> RadialDensity::support(double floor) const {
  double peak = *std::max_element(values_.begin(), values_.end());
  double cut = floor * peak;
  int lo = 0, hi = grid_.m - 1;
  while (lo < hi && values_[lo] <= cut) ++lo;
  while (hi > lo && values_[hi] <= cut) --hi;
  return {std::max(0, lo - 1), std::min(grid_.m - 1, hi + 1)};
}

RadialDensity RadialDensity::with_mode(NormMode mode) const {
  return RadialDensity(grid_, values_, r_, mode, true);
}

double mass_full(const RadialDensity& d) {
  std::vector<double> f(d.grid().m);
  for (int i = 0; i < d.grid().m; ++i)
    f[i] = std::pow(d.grid().x(i), d.r() - 1) * d.value(i);
  return surface_area(d.r()) * simpson_sum(f, d.grid().h());
}

double moment_full(const RadialDensity& d, int k, bool* tail_truncated) {
  if (k < 0) fail(ErrorCode::InvalidConfig, "moment_full: k must be >= 0");
  const int m = d.grid().m;
  std::vector<double> f(m);
  for (int i = 0; i < m; ++i)
    f[i] = std::pow(d.grid().x(i), k + d.r() - 1) * d.value(i);
  double total = surface_area(d.r()) * simpson_sum(f, d.grid().h());
  if (tail_truncated) {
    // contribution of the top 10% of the radius range
    int cut = static_cast<int>(0.9 * (m - 1));
    std::vector<double> tail(f.begin() + cut, f.end());
    double t = surface_area(d.r()) * simpson_sum(tail, d.grid().h());
    *tail_truncated = std::fabs(t) > 1e-6 * std::fabs(total);
  }
  return total;
}

double halfline_mean(const RadialDensity& d) {
  const int m = d.grid().m;
  std::vector<double> f(m);
  for (int i = 0; i < m; ++i) f[i] = d.grid().x(i) * d.value(i);
  return simpson_sum(f, d.grid().h());
}

RadialDensity regrid(const RadialDensity& d, const RadialGrid& new_grid) {
  std::vector<double> v(new_grid.m);
  for (int i = 0; i < new_grid.m; ++i) v[i] = d.interpolate(new_grid.x(i));
  RadialDensity out(new_grid, std::move(v), d.r(), d.mode(), false);
  double before = norm_integral(d.grid(), d.values(), d.r(), d.mode());
  double after = norm_integral(new_grid, out.values(), d.r(), d.mode());
  if (std::fabs(after - before) > 1e-8 * std::fabs(before) + 1e-300)
    fail(ErrorCode::SupportEscape, "regrid: interpolated mass changed by " +
                                       std::to_string((after - before) / before));
  return RadialDensity(new_grid, std::vector<double>(out.values().begin(),
                                                     out.values().end()),
                       d.r(), d.mode(), true);
}

void write_csv(const RadialDensity& d, std::ostream& os) {
  os << "x,value\n";
  char buf[96];
  for (int i = 0; i < d.grid().m; ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", d.grid().x(i), d.value(i));
    os << buf;
  }
}

}  // namespace hrg
