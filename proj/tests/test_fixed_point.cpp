#include <doctest.h>

#include <cmath>

#include "hrg/errors.hpp"
#include "hrg/fixed_point.hpp"

using namespace hrg;

namespace {

/// Independent cumulant oracle: iterate the scalar cumulant recursion of
/// the compensated spectral map,
///   kappa_k <- 2^{1-k} kappa_k + k! (r-1) (-1)^k / (k 2^{k+1})   (k >= 2),
/// to its fixed point.
std::array<double, 5> cumulant_oracle(int r) {
  std::array<double, 5> k{};
  for (int it = 0; it < 1000; ++it) {
    for (int j = 2; j <= 4; ++j) {
      double tgamma_j = 1.0;
      for (int q = 2; q <= j; ++q) tgamma_j *= q;  // j!
      double c = tgamma_j * (r - 1) * ((j % 2 == 0) ? 1.0 : -1.0) /
                 (j * std::pow(2.0, j + 1));
      k[j] = std::pow(2.0, 1 - j) * k[j] + c;
    }
  }
  return k;
}

}  // namespace

TEST_CASE("solve_g r=2: residual, cumulants against the oracle") {
  FixedPointSettings st;
  st.tol = 1e-12;
  auto sol = solve_g(2, st);
  CHECK(sol.residual < 1e-10);
  CHECK(std::fabs(sol.mean_drift) < 1e-9);

  auto oracle = cumulant_oracle(2);
  CHECK(oracle[2] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(oracle[3] == doctest::Approx(-1.0 / 6.0).epsilon(1e-12));

  CHECK(sol.cumulant[2] == doctest::Approx(oracle[2]).epsilon(4e-6));
  CHECK(sol.cumulant[3] == doctest::Approx(oracle[3]).epsilon(6e-6));
  CHECK(sol.cumulant[4] == doctest::Approx(oracle[4]).epsilon(1e-4));
  // centering convention: mean = -(r-1)/4
  CHECK(sol.cumulant[1] == doctest::Approx(-0.25).epsilon(1e-8));
  CHECK(sol.g.mean() == doctest::Approx(-0.25).epsilon(1e-7));
  CHECK(sol.g.mass() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("solve_g r=3: general-r cumulants") {
  auto sol = solve_g(3);
  auto oracle = cumulant_oracle(3);
  CHECK(oracle[2] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(oracle[3] == doctest::Approx(-1.0 / 3.0).epsilon(1e-12));
  CHECK(sol.cumulant[2] == doctest::Approx(oracle[2]).epsilon(2e-5));
  CHECK(sol.cumulant[3] == doctest::Approx(oracle[3]).epsilon(2e-5));
  CHECK(sol.g.mean() == doctest::Approx(-0.5).epsilon(1e-7));
}

TEST_CASE("cumulants agree with the real-space moment route") {
  auto sol = solve_g(2);
  const Profile1D& g = sol.g;
  double m[5] = {0, 0, 0, 0, 0};
  double mass = 0.0;
  for (int i = 0; i < g.size(); ++i) {
    double t = g.t(i), w = g.v[i];
    mass += w;
    double tp = t;
    for (int k = 1; k <= 4; ++k) {
      m[k] += tp * w;
      tp *= t;
    }
  }
  for (int k = 1; k <= 4; ++k) m[k] /= mass;
  double k2 = m[2] - m[1] * m[1];
  double k3 = m[3] - 3 * m[1] * m[2] + 2 * std::pow(m[1], 3);
  double k4 = m[4] - 4 * m[3] * m[1] - 3 * m[2] * m[2] +
              12 * m[2] * m[1] * m[1] - 6 * std::pow(m[1], 4);
  CHECK(sol.cumulant[2] == doctest::Approx(k2).epsilon(1e-8));
  CHECK(sol.cumulant[3] == doctest::Approx(k3).epsilon(1e-7));
  CHECK(sol.cumulant[4] == doctest::Approx(k4).epsilon(1e-4));
}

TEST_CASE("tail rates: left approaches 2, right super-exponential") {
  auto sol = solve_g(2);
  auto t = tail_rates(sol);
  CHECK(t.left_rate >= 1.8);
  CHECK(t.left_rate <= 2.0);
  CHECK(t.right_slope_far < t.right_slope_near);  // log g / t decreasing
}

TEST_CASE("operator is a contraction near the solution") {
  // re-applying the renormalized operator changes cumulants negligibly:
  // the residual bound transfers to the moments
  auto sol = solve_g(2);
  CHECK(sol.residual < 1e-10);
  // translation family: a re-centered solve lands on the same g
  FixedPointSettings st;
  st.grid_n = 1 << 13;
  auto sol2 = solve_g(2, st);
  double sup = 0.0;
  for (int i = 0; i < sol2.g.size(); ++i) {
    double t = sol2.g.t(i);
    if (std::fabs(t) < 30.0)
      sup = std::max(sup, std::fabs(sol2.g.v[i] - sol.g.interpolate(t)));
  }
  CHECK(sup < 1e-8);
}

TEST_CASE("literal operator: mass factor 2^{r-2}, mean shift -(r-1)/4") {
  for (int r : {2, 3}) {
    auto sol = solve_g(r);
    auto c = literal_operator_check(sol);
    CHECK(c.mass_factor == doctest::Approx(std::pow(2.0, r - 2)).epsilon(1e-8));
    CHECK(c.mean_shift == doctest::Approx(-0.25 * (r - 1)).epsilon(1e-6));
  }
}

TEST_CASE("real-space quadrature oracle at the final iterate") {
  auto sol = solve_g(2);
  CHECK(fixed_point_quadrature_residual(sol) < 5e-7);
}

TEST_CASE("build_pi: gaussian tilt identity and the solution's pi") {
  // harness: replace g by a standard normal; the e^{-2t/3} tilt of N(0,1)
  // is N(-2/3, 1), so a = 2/3 restores the zero mean
  FixedPointSolution fake;
  fake.r = 2;
  fake.g.t0 = -40.0;
  fake.g.dt = 1.0 / 32.0;
  int n = static_cast<int>(80.0 / fake.g.dt) + 1;
  fake.g.v.resize(n);
  for (int i = 0; i < n; ++i) {
    double t = fake.g.t(i);
    fake.g.v[i] = std::exp(-0.5 * t * t) / std::sqrt(2 * M_PI);
  }
  fake.g.finalize();
  auto pi = build_pi(fake);
  CHECK(pi.a == doctest::Approx(2.0 / 3.0).epsilon(1e-8));
  CHECK(pi.pi.mass() == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(std::fabs(pi.pi.mean()) < 1e-8);

  // tilt exponent zero: a = -mean(g) = 0 for the centered gaussian
  auto pi0 = build_pi(fake, 0.0);
  CHECK(pi0.a == doctest::Approx(0.0).epsilon(1e-8));
  CHECK(pi0.C == doctest::Approx(1.0).epsilon(1e-8));

  // the real solution
  auto sol = solve_g(2);
  auto pig = build_pi(sol);
  CHECK(pig.pi.mass() == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(std::fabs(pig.pi.mean()) < 1e-8);
}

TEST_CASE("compare_flow_to_g basic properties") {
  auto sol = solve_g(2);
  // identical input: wrap g(t - 1/4) as a ProfileF with M = 1
  ProfileF f;
  f.M = 1.0;
  f.c_n = 3.0;
  f.n = 0;
  f.prof.t0 = sol.g.t0 + 0.25;
  f.prof.dt = sol.g.dt;
  f.prof.v = sol.g.v;
  f.prof.finalize();
  double d0 = compare_flow_to_g(f, 1.0, sol, 6.0);
  CHECK(d0 < 1e-9);
  // window widening can only increase the weighted sup
  ProfileF g2 = f;
  for (auto& v : g2.prof.v) v *= 1.0;
  g2.prof.v[g2.prof.size() / 2] *= 1.02;
  g2.prof.finalize();
  double d1 = compare_flow_to_g(g2, 1.0, sol, 4.0);
  double d2 = compare_flow_to_g(g2, 1.0, sol, 8.0);
  CHECK(d2 >= d1 - 1e-12);
}

TEST_CASE("solver rejects bad settings") {
  FixedPointSettings st;
  st.grid_n = 1000;  // not a power of two
  CHECK_THROWS_AS((void)solve_g(2, st), Error);
  FixedPointSettings st2;
  st2.grid_n = 1024;  // half-width 16 < 20
  CHECK_THROWS_AS((void)solve_g(2, st2), Error);
}
