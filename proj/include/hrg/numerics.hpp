#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace hrg {

/// Nodes and weights of an n-point Gauss-Legendre rule on [-1, 1].
/// Tables are cached per n; thread-safe after first use.
struct GaussLegendre {
  std::vector<double> x;
  std::vector<double> w;
};
const GaussLegendre& gauss_legendre(int n);

/// Composite Simpson weights on a uniform grid of m points (m >= 4).
/// For even m the last three intervals use the 3/8 rule, keeping the
/// compound rule at order 4.
std::vector<double> simpson_weights(int m, double h);

/// sum_i w_i f_i with Simpson weights, fixed summation order.
double simpson_sum(std::span<const double> f, double h);

/// Slopes for a monotonicity-limited cubic Hermite interpolant on a
/// uniform grid (4th-order interior estimates, Hyman-style limiting).
std::vector<double> hermite_slopes(std::span<const double> y, double h);

/// Slope and intercept of an ordinary least-squares line through (x, y).
struct LineFit {
  double slope;
  double intercept;
  double residual_rms;
};
LineFit fit_line(std::span<const double> x, std::span<const double> y);

/// Deterministic 64-bit generator (splitmix64 core). Used wherever the
/// library needs reproducible randomness across platforms.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  /// Uniform in [0, 1).
  double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }
  /// Uniform in (a, b).
  double uniform(double a, double b) { return a + (b - a) * next_double(); }
  /// Standard normal via the polar method.
  double normal();

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

/// exp2 of possibly large magnitudes, saturating instead of trapping.
double exp2_sat(double x);

}  // namespace hrg
