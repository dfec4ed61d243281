#pragma once

#include <ostream>
#include <span>
#include <vector>

namespace hrg {

/// Uniform grid 0 = x_0 < x_1 < ... < x_{m-1} = x_max.
struct RadialGrid {
  double x_max = 1.0;
  int m = 64;

  double h() const { return x_max / (m - 1); }
  double x(int i) const { return i * h(); }
  bool operator==(const RadialGrid&) const = default;
};

enum class NormMode { FullSpace, HalfLine };

/// Rotationally symmetric density on R^r stored as a radial profile.
/// Values are clamped nonnegative; the declared normalization is enforced
/// at construction. Immutable afterwards, so concurrent reads are safe.
class RadialDensity {
 public:
  RadialDensity(RadialGrid grid, std::vector<double> values, int r,
                NormMode mode, bool renormalize = true);

  const RadialGrid& grid() const { return grid_; }
  std::span<const double> values() const { return values_; }
  double value(int i) const { return values_[i]; }
  int r() const { return r_; }
  NormMode mode() const { return mode_; }

  /// Monotone-safe cubic interpolation, clamped to >= 0; 0 beyond x_max.
  double interpolate(double x) const;

  /// Index range [lo, hi] outside of which values are below
  /// floor * max(values).
  std::pair<int, int> support(double floor = 1e-14) const;

  /// Same values renormalized under another mode.
  RadialDensity with_mode(NormMode mode) const;

 private:
  RadialGrid grid_;
  std::vector<double> values_;
  std::vector<double> slopes_;
  int r_;
  NormMode mode_;
};

/// Surface area of the unit sphere in R^r: 2 pi^{r/2} / Gamma(r/2).
double surface_area(int r);

/// Integral over R^r: S_{r-1} int x^{r-1} d(x) dx (composite order-4 rule).
double mass_full(const RadialDensity& d);

/// int_{R^r} |x|^k d = S_{r-1} int x^{k+r-1} d(x) dx. If tail_truncated is
/// non-null it is set when the last decade of the grid contributes more
/// than 1e-6 of the total.
double moment_full(const RadialDensity& d, int k, bool* tail_truncated = nullptr);

/// int_0^inf t d(t) dt (HalfLine profiles).
double halfline_mean(const RadialDensity& d);

/// Resample onto a new grid and renormalize; throws SupportEscape when the
/// interpolated mass loss exceeds 1e-8 relative.
RadialDensity regrid(const RadialDensity& d, const RadialGrid& new_grid);

/// CSV emission: header "x,value", 17 significant digits.
void write_csv(const RadialDensity& d, std::ostream& os);

}  // namespace hrg
