#include <doctest.h>

#include <cmath>

#include "hrg/errors.hpp"
#include "hrg/numerics.hpp"
#include "hrg/oracle.hpp"

using namespace hrg;

TEST_CASE("hierarchical distance values and ultrametric property") {
  CHECK(hier_distance(1, 2) == 1.0);
  CHECK(hier_distance(2, 3) == 2.0);
  CHECK(hier_distance(1, 8) == 4.0);
  CHECK(hier_distance(5, 5) == 0.0);
  CHECK(hier_distance(1, 16) == 8.0);

  SplitMix64 rng(5);
  for (int t = 0; t < 400; ++t) {
    long j = 1 + (rng.next_u64() % 64);
    long k = 1 + (rng.next_u64() % 64);
    long m = 1 + (rng.next_u64() % 64);
    if (j == k || k == m || j == m) continue;
    CHECK(hier_distance(j, k) <=
          std::max(hier_distance(j, m), hier_distance(m, k)) + 1e-12);
  }
}

TEST_CASE("hamiltonian: single pair, zeros, rotation invariance") {
  auto coupling = CouplingSequence::poly_log(0.01, 1.5);
  HierVolume v1(1, 2, coupling, 1.0);
  // sigma(1) = sigma(2) = e1: H = -l_0 / 1 = -1
  std::vector<double> spins{1.0, 0.0, 1.0, 0.0};
  CHECK(v1.hamiltonian(spins) == doctest::Approx(-1.0).epsilon(1e-14));

  std::vector<double> zero(4, 0.0);
  CHECK(v1.hamiltonian(zero) == 0.0);

  HierVolume v3(3, 2, coupling, 1.0);
  SplitMix64 rng(17);
  std::vector<double> s(16);
  for (auto& x : s) x = rng.normal();
  double h0 = v3.hamiltonian(s);
  double th = rng.uniform(0.0, 2.0 * M_PI);
  double cth = std::cos(th), sth = std::sin(th);
  std::vector<double> rot(16);
  for (int i = 0; i < 8; ++i) {
    rot[2 * i] = cth * s[2 * i] - sth * s[2 * i + 1];
    rot[2 * i + 1] = sth * s[2 * i] + cth * s[2 * i + 1];
  }
  CHECK(v3.hamiltonian(rot) == doctest::Approx(h0).epsilon(1e-12));
}

TEST_CASE("mc decoupled limit matches 1-D quadrature") {
  auto coupling = CouplingSequence::poly_log(0.01, 1.5);
  HierVolume vol(2, 2, coupling, 1.0);
  vol.zero_couplings();

  McSettings st;
  st.sweeps = 200000;
  st.seed = 12345;
  st.kappa = 0.05;
  auto res = mc_sample(vol, st);

  double e_sigma2 = single_site_second_moment(2, 0.05, {});
  double expect = e_sigma2 / 4.0;  // E|m|^2 = E|sigma|^2 / 2^n
  CHECK(std::fabs(res.m2.value - expect) <= 3.0 * res.m2.std_error);
  CHECK_FALSE(res.nonergodic_warning);
  CHECK(res.acceptance > 0.25);
  CHECK(res.acceptance < 0.75);
}

TEST_CASE("mc estimates are seed-stable within 3 sigma") {
  auto coupling = CouplingSequence::poly_log(0.01, 1.5);
  HierVolume vol(1, 2, coupling, 2.0);
  McSettings a;
  a.sweeps = 150000;
  a.seed = 1;
  a.kappa = 0.05;
  McSettings b = a;
  b.seed = 987654321;
  auto ra = mc_sample(vol, a);
  auto rb = mc_sample(vol, b);
  double se = std::hypot(ra.m2.std_error, rb.m2.std_error);
  CHECK(std::fabs(ra.m2.value - rb.m2.value) <= 3.0 * se);
  // identical seeds reproduce bitwise
  auto ra2 = mc_sample(vol, a);
  CHECK(ra.m2.value == ra2.m2.value);
  CHECK(ra.hist_density == ra2.hist_density);
}

TEST_CASE("direct_p1 agrees with the flow path") {
  ModelParams p;
  p.r = 2;
  p.kappa = 0.05;
  p.T = 2.0;
  auto coupling = CouplingSequence::poly_log(0.01, 1.5);

  RadialDensity direct = direct_p1(p, coupling, 801, 200);
  CHECK(mass_full(direct) == doctest::Approx(1.0).epsilon(1e-7));

  FlowSettings fs;
  fs.quad_u = 96;
  fs.quad_rho = 64;
  fs.threads = 2;
  Flow flow(p, coupling, fs);
  FlowState s1 = flow.step(flow.init_q0());
  REQUIRE(s1.Mbar_valid);
  RadialDensity via_flow = flow.to_p(s1);

  double sup = 0.0, peak = 0.0;
  for (int i = 0; i < direct.grid().m; ++i) {
    double y = direct.grid().x(i);
    double a = direct.value(i);
    double b = via_flow.interpolate(y);
    sup = std::max(sup, std::fabs(a - b));
    peak = std::max(peak, a);
  }
  CHECK(sup < 1e-5 * peak);
  CHECK(sup < 1e-5);  // densities are O(1) here
}

TEST_CASE("mc vs flow at n=1 (reference parameters, reduced sweeps)") {
  ModelParams p;
  p.r = 2;
  p.kappa = 0.05;
  p.T = 2.0;
  auto coupling = CouplingSequence::poly_log(0.01, 1.5);

  FlowSettings fs;
  fs.threads = 2;
  Flow flow(p, coupling, fs);
  FlowState s1 = flow.step(flow.init_q0());
  double flow_m2 = s1.Mbar * s1.Mbar;

  HierVolume vol(1, 2, coupling, p.T);
  McSettings st;
  st.sweeps = 400000;
  st.seed = 77;
  st.kappa = p.kappa;
  auto res = mc_sample(vol, st);
  CHECK(std::fabs(res.m2.value - flow_m2) <= 3.0 * res.m2.std_error);
}

TEST_CASE("volume validation") {
  auto c = CouplingSequence::constant();
  CHECK_THROWS_AS(HierVolume(-1, 2, c, 1.0), Error);
  CHECK_THROWS_AS(HierVolume(2, 1, c, 1.0), Error);
  CHECK_THROWS_AS(HierVolume(2, 2, c, -1.0), Error);
}
