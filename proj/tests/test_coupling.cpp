#include <doctest.h>

#include <cmath>

#include "hrg/coupling.hpp"
#include "hrg/errors.hpp"
#include "hrg/numerics.hpp"

using namespace hrg;

namespace {

/// Independent Dyson oracle: high-precision partial sums plus an integral
/// tail bound for the polylog family.
double dyson_oracle_polylog(double a, double lambda, double tol) {
  double s = 0.0;
  long n = 1;
  for (;; ++n) {
    s += std::pow(1.0 + a * n, -lambda);
    double tail = std::pow(1.0 + a * n, 1.0 - lambda) / (a * (lambda - 1.0));
    if (tail < tol) return s + 0.5 * tail;
  }
}

}  // namespace

TEST_CASE("l values per form") {
  auto c = CouplingSequence::constant();
  CHECK(c.l(7) == 1.0);
  auto p = CouplingSequence::poly_log(1.0, 2.0);
  CHECK(p.l(3) == doctest::Approx(16.0).epsilon(1e-14));
  auto p2 = CouplingSequence::poly_log(0.01, 2.0);
  CHECK(p2.l(1) == doctest::Approx(1.0201).epsilon(1e-14));
  CHECK(p.l(-1) == 1.0);  // l_{-1} convention
  CHECK(p.c(0) == doctest::Approx(1.0));
}

TEST_CASE("A_n: constant sequence gives exactly 2, c_big gives 3") {
  auto c = CouplingSequence::constant();
  for (int n : {0, 3, 17}) {
    CHECK(c.a_seq(n) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(c.c_big(n) == doctest::Approx(3.0).epsilon(1e-12));
  }
}

TEST_CASE("A_n band [2, 2.03] for slow polylog growth") {
  auto p = CouplingSequence::poly_log(0.005, 1.5);
  double a20 = p.a_seq(20);
  CHECK(a20 >= 2.0);
  CHECK(a20 <= 2.03);
  double ratio = p.c_big(10) / p.l(10);
  CHECK(ratio >= 3.0);
  CHECK(ratio <= 3.03);
}

TEST_CASE("A_n telescoping identity l_n A_n = l_n + l_{n+1} A_{n+1}/2") {
  const double tol = 1e-12;
  SplitMix64 rng(2024);
  for (int trial = 0; trial < 24; ++trial) {
    double a = rng.uniform(0.002, 0.3);
    double lambda = rng.uniform(1.1, 3.0);
    auto p = CouplingSequence::poly_log(a, lambda);
    for (int n : {0, 1, 5, 12, 40}) {
      double lhs = p.l(n) * p.a_seq(n, tol);
      double rhs = p.l(n) + 0.5 * p.l(n + 1) * p.a_seq(n + 1, tol);
      CHECK(std::fabs(lhs - rhs) <= 10.0 * tol * std::fabs(lhs) + 1e-13);
    }
  }
}

TEST_CASE("polylog ratios c_n decrease to 1") {
  SplitMix64 rng(7);
  for (int trial = 0; trial < 12; ++trial) {
    double a = rng.uniform(0.005, 0.4);
    double lambda = rng.uniform(1.05, 3.0);
    auto p = CouplingSequence::poly_log(a, lambda);
    double prev = p.c(1);
    for (int n = 2; n <= 400; ++n) {
      double cn = p.c(n);
      CHECK(cn <= prev + 1e-15);
      CHECK(cn >= 1.0);
      prev = cn;
    }
    CHECK(p.c(100000) == doctest::Approx(1.0).epsilon(1e-3));
  }
}

TEST_CASE("divergent A-series is rejected") {
  // l_{n+j} = 2^j l_n sits exactly on the geometric boundary: the series
  // terms never decay while the list lasts
  std::vector<double> vals(4096);
  for (size_t i = 0; i < vals.size(); ++i) vals[i] = std::pow(2.0, double(i));
  auto e = CouplingSequence::explicit_list(vals);
  CHECK_THROWS_AS((void)e.a_seq(0), Error);
}

TEST_CASE("dyson verdicts") {
  CHECK(CouplingSequence::constant().dyson_sum().verdict ==
        DysonResult::Verdict::Diverged);
  CHECK_THROWS_AS(CouplingSequence::poly_log(1.0, 1.0), Error);  // lambda > 1

  auto p = CouplingSequence::poly_log(1.0, 2.0);
  auto d = p.dyson_sum(1e-8);
  REQUIRE(d.verdict == DysonResult::Verdict::Converged);
  // zeta(2) - 1, cross-checked against the in-test oracle
  double oracle = dyson_oracle_polylog(1.0, 2.0, 1e-10);
  CHECK(d.sum == doctest::Approx(oracle).epsilon(1e-7));
  CHECK(d.sum == doctest::Approx(M_PI * M_PI / 6.0 - 1.0).epsilon(1e-6));

  SplitMix64 rng(99);
  for (int t = 0; t < 8; ++t) {
    double a = rng.uniform(0.01, 2.0), lambda = rng.uniform(1.2, 3.5);
    auto q = CouplingSequence::poly_log(a, lambda);
    auto dq = q.dyson_sum(1e-8);
    REQUIRE(dq.verdict == DysonResult::Verdict::Converged);
    CHECK(dq.sum ==
          doctest::Approx(dyson_oracle_polylog(a, lambda, 1e-10)).epsilon(1e-6));
  }
}

TEST_CASE("n_of_eta") {
  auto p = CouplingSequence::poly_log(1.0, 2.0);
  CHECK(p.n_of_eta(0.5) == 1);   // l_1 = 4 > 2
  CHECK(p.n_of_eta(0.05) == 4);  // l_4 = 25 > 20, l_3 = 16 <= 20
  auto c = CouplingSequence::constant();
  CHECK_THROWS_AS((void)c.n_of_eta(0.5), Error);
  CHECK_FALSE(c.try_n_of_eta(0.5).has_value());
}

TEST_CASE("tail sums are certified") {
  const double a = 0.12, lambda = 2.0;
  auto p = CouplingSequence::poly_log(a, lambda);
  // brute partial sum plus the same integral remainder the library certifies
  const int K = 200000;
  double ref = 0.0, ref_l = 0.0;
  for (int k = 10; k < K; ++k) {
    ref += 1.0 / p.c_big(k);
    ref_l += 1.0 / p.l(k);
  }
  double lk_tail = std::pow(1.0 + a * K, 1.0 - lambda) / (a * (lambda - 1.0));
  CHECK(p.c_big_tail_sum(10) == doctest::Approx(ref + lk_tail / 3.0).epsilon(2e-3));
  CHECK(p.inv_l_tail_sum(10) == doctest::Approx(ref_l + lk_tail).epsilon(2e-3));
}

TEST_CASE("condition checks") {
  // fast growth: condition 1 fails at c_1 = 4
  auto p = CouplingSequence::poly_log(1.0, 2.0);
  auto rep = p.check_conditions(0.05, 0.1, 6, 300);
  CHECK_FALSE(rep.c1.pass);
  CHECK(rep.c1.witness == doctest::Approx(4.0));
  // condition 4 fails: B ~ 0.645 < 400/0.1
  CHECK_FALSE(rep.c4.pass);
  CHECK(rep.c4.witness == doctest::Approx(M_PI * M_PI / 6.0 - 1.0).epsilon(1e-4));

  // slow growth passes condition 1 at a long horizon (a < 1.01^{1/2} - 1)
  auto slow = CouplingSequence::poly_log(0.004, 2.0);
  auto rep2 = slow.check_conditions(0.5, 0.05, 6, 4200);
  CHECK(rep2.c1.pass);
  CHECK(rep2.c2_pass());
  CHECK(rep2.c3.pass);
  CHECK(rep2.c5.pass);

  // constant sequence: divergent sum makes condition 4 pass trivially
  auto repc = CouplingSequence::constant().check_conditions(0.5, 0.05, 6, 300);
  CHECK(repc.c4.pass);

  // report serializes
  CHECK(rep2.to_json().find("condition1") != std::string::npos);
}

TEST_CASE("json round trip") {
  auto p = CouplingSequence::poly_log(0.005, 1.5);
  auto q = CouplingSequence::from_json(p.to_json());
  CHECK(q.l(17) == doctest::Approx(p.l(17)).epsilon(1e-15));
  CHECK_THROWS_AS(CouplingSequence::from_json("{\"form\":\"nope\"}"), Error);
  CHECK_THROWS_AS(
      CouplingSequence::from_json("{\"form\":\"polylog\",\"a\":1,\"lambda\":2,\"x\":1}"),
      Error);
}
