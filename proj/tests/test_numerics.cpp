#include <doctest.h>

#include <cmath>
#include <vector>

#include "hrg/numerics.hpp"

using namespace hrg;

TEST_CASE("simpson integrates cubics exactly") {
  for (int m : {65, 64, 129, 200}) {
    double h = 2.0 / (m - 1);
    std::vector<double> f(m);
    for (int i = 0; i < m; ++i) {
      double x = i * h;
      f[i] = 1.0 + x - 2.0 * x * x + 0.5 * x * x * x;
    }
    // int_0^2 = 2 + 2 - 16/3 + 2 = 2/3
    CHECK(simpson_sum(f, h) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  }
}

TEST_CASE("simpson converges at order >= 4 (Richardson)") {
  auto integral = [](int m) {
    double h = 1.0 / (m - 1);
    std::vector<double> f(m);
    for (int i = 0; i < m; ++i) f[i] = std::exp(std::sin(3.0 * i * h));
    return simpson_sum(f, h);
  };
  double ref = integral(16385);
  double e1 = std::fabs(integral(129) - ref);
  double e2 = std::fabs(integral(257) - ref);
  CHECK(e1 / e2 > 12.0);  // halving h shrinks the error by ~16
}

TEST_CASE("gauss-legendre integrates high-degree polynomials") {
  const auto& gl = gauss_legendre(12);
  double s = 0.0;
  for (int i = 0; i < 12; ++i) s += gl.w[i] * std::pow(gl.x[i], 22);
  CHECK(s == doctest::Approx(2.0 / 23.0).epsilon(1e-12));
}

TEST_CASE("hermite slopes reproduce linear data") {
  std::vector<double> y(32);
  for (int i = 0; i < 32; ++i) y[i] = 3.0 + 0.25 * i;
  auto s = hermite_slopes(y, 0.5);
  for (double v : s) CHECK(v == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("line fit recovers exact lines") {
  std::vector<double> x{1, 2, 3, 4, 5}, y;
  for (double v : x) y.push_back(-2.0 + 0.5 * v);
  auto f = fit_line(x, y);
  CHECK(f.slope == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(f.intercept == doctest::Approx(-2.0).epsilon(1e-13));
}

TEST_CASE("splitmix is deterministic and roughly normal") {
  SplitMix64 a(42), b(42);
  for (int i = 0; i < 64; ++i) CHECK(a.next_u64() == b.next_u64());
  SplitMix64 g(7);
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    double v = g.normal();
    s += v;
    s2 += v * v;
  }
  CHECK(std::fabs(s / n) < 0.01);
  CHECK(s2 / n == doctest::Approx(1.0).epsilon(0.02));
}
