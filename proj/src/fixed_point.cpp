#include "hrg/fixed_point.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <array>
#include <complex>
#include <mutex>

#include <json.hpp>

#include "hrg/errors.hpp"
#include "hrg/numerics.hpp"

namespace hrg {

namespace {

std::mutex fftw_mutex;  // FFTW planning is not thread-safe

/// One application of the mean-compensated operator in real space:
///   c = g*g; D = Gamma-kernel smoothing of c; out(t) = D(2t - (r-1)/2).
/// The returned array is un-normalized (mass 1/2 for unit-mass input).
std::vector<double> apply_compensated(const std::vector<double>& g, int r,
                                      double h) {
  const int n = static_cast<int>(g.size());
  const int n2 = 2 * n;
  std::vector<double> pad(n2, 0.0);
  std::copy(g.begin(), g.end(), pad.begin());

  std::vector<std::complex<double>> spec(n2 / 2 + 1);
  {
    std::lock_guard<std::mutex> lock(fftw_mutex);
    fftw_plan fwd = fftw_plan_dft_r2c_1d(
        n2, pad.data(), reinterpret_cast<fftw_complex*>(spec.data()),
        FFTW_ESTIMATE);
    fftw_execute(fwd);
    fftw_destroy_plan(fwd);
  }
  // convolution (times h), then the analytic Gamma-kernel transform
  // conj(K(xi)) with K(xi) = (1 + i xi)^{-(r-1)/2}
  const double half_power = 0.5 * (r - 1);
  for (int k = 0; k <= n2 / 2; ++k) {
    double xi = 2.0 * M_PI * k / (n2 * h);
    std::complex<double> kk =
        std::pow(std::complex<double>(1.0, -xi), -half_power);
    spec[k] = spec[k] * spec[k] * h * kk;
  }
  std::vector<double> conv(n2);
  {
    std::lock_guard<std::mutex> lock(fftw_mutex);
    fftw_plan bwd = fftw_plan_dft_c2r_1d(
        n2, reinterpret_cast<fftw_complex*>(spec.data()), conv.data(),
        FFTW_ESTIMATE);
    fftw_execute(bwd);
    fftw_destroy_plan(bwd);
  }
  for (double& x : conv) x /= n2;

  // sample at 2t and shift by +(r-1)/4 (an exact lattice move)
  const int cells = static_cast<int>(std::lround((r - 1) / 4.0 / h));
  if (std::fabs(cells * h - (r - 1) / 4.0) > 1e-12)
    fail(ErrorCode::InvalidConfig,
         "solve_g: (r-1)/4 must be an integer number of grid cells");
  std::vector<double> out(n, 0.0);
  for (int i = 0; i < n; ++i) {
    long m = 2L * i - 2L * cells;
    out[i] = (m >= 0 && m < n2) ? conv[m] : 0.0;
  }
  return out;
}

double sup_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i)
    s = std::max(s, std::fabs(a[i] - b[i]));
  return s;
}

void riemann_normalize(std::vector<double>& v, double h) {
  double mass = 0.0;
  for (double x : v) mass += x;
  mass *= h;
  if (!(mass > 0.0))
    fail(ErrorCode::DegenerateDensity, "solve_g: zero-mass iterate");
  for (double& x : v) x /= mass;
}

}  // namespace

FixedPointSolution solve_g(int r, const FixedPointSettings& st) {
  if (r < 2) fail(ErrorCode::InvalidConfig, "solve_g: r must be >= 2");
  if (st.grid_n < 1024 || (st.grid_n & (st.grid_n - 1)) != 0)
    fail(ErrorCode::InvalidConfig, "solve_g: grid_n must be a power of two");
  if (!(st.tol >= 1e-14))
    fail(ErrorCode::InvalidConfig, "solve_g: tol too small");
  const int n = st.grid_n;
  const double h = st.h;
  if (0.25 * n * h < 20.0)
    fail(ErrorCode::InvalidConfig, "solve_g: grid half-width below 20");
  auto t_of = [&](int i) { return (i - n / 2) * h; };

  // Gaussian start with the fixed-point variance (r-1)/4, mean zero
  std::vector<double> g(n);
  const double var0 = 0.25 * (r - 1);
  for (int i = 0; i < n; ++i) {
    double t = t_of(i);
    g[i] = std::exp(-0.5 * t * t / var0) / std::sqrt(2.0 * M_PI * var0);
  }

  FixedPointSolution sol;
  sol.r = r;
  double diff = 0.0;
  int it = 0;
  for (; it < st.max_iter; ++it) {
    std::vector<double> next = apply_compensated(g, r, h);
    double mn = *std::min_element(next.begin(), next.end());
    double mx = *std::max_element(next.begin(), next.end());
    if (mn < -1e3 * st.tol * mx)
      fail(ErrorCode::NegativeDensity,
           "solve_g: operator image dips below -tol (grid too narrow)");
    for (double& x : next)
      if (x < 0.0) x = 0.0;
    riemann_normalize(next, h);
    diff = sup_abs_diff(next, g);
    g.swap(next);
    if (diff < st.tol) break;
  }
  if (diff >= st.tol)
    fail(ErrorCode::NoConvergence,
         "solve_g: no convergence in " + std::to_string(st.max_iter) +
             " iterations (sup diff " + std::to_string(diff) + ")");
  sol.iterations = it + 1;

  // residual of the renormalized operator at the converged iterate
  {
    std::vector<double> img = apply_compensated(g, r, h);
    for (double& x : img)
      if (x < 0.0) x = 0.0;
    riemann_normalize(img, h);
    sol.residual = sup_abs_diff(img, g);
  }

  // measured mean of the mean-zero form
  {
    double m1 = 0.0;
    for (int i = 0; i < n; ++i) m1 += t_of(i) * g[i];
    sol.mean_drift = m1 * h;
  }

  // cumulants from central differences of log G at 0 (Richardson pair),
  // G evaluated by direct sums so the stencil step is free of the FFT grid
  {
    auto G = [&](double xi) {
      std::complex<double> s{0.0, 0.0};
      for (int i = 0; i < n; ++i) {
        double t = t_of(i);
        s += g[i] * std::complex<double>(std::cos(xi * t), std::sin(xi * t));
      }
      return s * h;
    };
    auto cums_at = [&](double d) {
      std::complex<double> lg[5];
      for (int j = -2; j <= 2; ++j) lg[j + 2] = std::log(G(j * d));
      std::array<double, 5> c{};
      std::complex<double> i1 = (lg[3] - lg[1]) / (2.0 * d);
      std::complex<double> i2 = (lg[3] - 2.0 * lg[2] + lg[1]) / (d * d);
      std::complex<double> i3 =
          (lg[4] - 2.0 * lg[3] + 2.0 * lg[1] - lg[0]) / (2.0 * d * d * d);
      std::complex<double> i4 =
          (lg[4] - 4.0 * lg[3] + 6.0 * lg[2] - 4.0 * lg[1] + lg[0]) /
          (d * d * d * d);
      c[1] = i1.imag();
      c[2] = -i2.real();
      c[3] = -i3.imag();
      c[4] = i4.real();
      return c;
    };
    auto ca = cums_at(0.20), cb = cums_at(0.10);
    for (int k = 1; k <= 4; ++k)
      sol.cumulant[k] = (4.0 * cb[k] - ca[k]) / 3.0;
    sol.cumulant[1] -= 0.25 * (r - 1);  // shift to the g convention
  }

  sol.g.t0 = t_of(0) - 0.25 * (r - 1);
  sol.g.dt = h;
  sol.g.v = std::move(g);
  sol.g.finalize();
  return sol;
}

TailRates tail_rates(const FixedPointSolution& sol) {
  const Profile1D& g = sol.g;
  std::vector<double> ts, ls;
  for (int i = 0; i < g.size(); ++i) {
    double t = g.t(i);
    if (t >= -15.0 && t <= -5.0 && g.v[i] > 0.0) {
      ts.push_back(t);
      ls.push_back(std::log(g.v[i]));
    }
  }
  if (ts.size() < 16)
    fail(ErrorCode::FitWindowTooNarrow, "tail_rates: left window too sparse");
  TailRates out;
  out.left_rate = fit_line(ts, ls).slope;

  auto log_over_t = [&](double t) {
    double v = g.interpolate(t);
    if (!(v > 0.0))
      fail(ErrorCode::FitWindowTooNarrow,
           "tail_rates: right tail vanished before the probe point");
    return std::log(v) / t;
  };
  out.right_slope_near = log_over_t(5.0);
  out.right_slope_far = log_over_t(10.0);
  return out;
}

TiltedPi build_pi(const FixedPointSolution& sol, double tilt_rate) {
  const Profile1D& g = sol.g;
  // the tilt must lose against the left tail
  double edge = std::exp(-tilt_rate * g.t0) * g.v[1];
  double peak = *std::max_element(g.v.begin(), g.v.end());
  if (edge > 1e-6 * peak)
    fail(ErrorCode::TiltOverflow,
         "build_pi: e^{-tilt t} overwhelms the left tail on the grid");

  auto tilted_mean = [&](double a) {
    double s0 = 0.0, s1 = 0.0;
    for (int i = 0; i < g.size(); ++i) {
      double t = g.t(i);
      double w = std::exp(-tilt_rate * t) * g.interpolate(t - a);
      s0 += w;
      s1 += t * w;
    }
    return s1 / s0;
  };
  // the tilted mean is monotone increasing in a; bisect to zero
  double lo = -20.0, hi = 20.0;
  if (!(tilted_mean(lo) < 0.0 && tilted_mean(hi) > 0.0))
    fail(ErrorCode::BracketInvalid, "build_pi: bisection bracket invalid");
  for (int it = 0; it < 80; ++it) {
    double mid = 0.5 * (lo + hi);
    if (tilted_mean(mid) < 0.0) lo = mid; else hi = mid;
  }
  double a = 0.5 * (lo + hi);

  TiltedPi out;
  out.a = a;
  out.pi.t0 = g.t0;
  out.pi.dt = g.dt;
  out.pi.v.resize(g.size());
  for (int i = 0; i < g.size(); ++i) {
    double t = g.t(i);
    out.pi.v[i] = std::exp(-tilt_rate * t) * g.interpolate(t - a);
  }
  out.pi.finalize();
  double mass = out.pi.mass();
  out.C = 1.0 / mass;
  for (double& x : out.pi.v) x /= mass;
  out.pi.finalize();
  return out;
}

double compare_flow_to_g(const ProfileF& f, double M_n,
                         const FixedPointSolution& sol, double window) {
  const double off = 0.25 * (sol.r - 1);
  double sup = 0.0;
  const int steps = 2400;
  for (int i = 0; i <= steps; ++i) {
    double t = -window + 2.0 * window * i / steps;
    double lhs = f.prof.interpolate(t / M_n) / M_n;
    double rhs = sol.g.interpolate(t - off);
    sup = std::max(sup, std::exp(std::fabs(t)) * std::fabs(lhs - rhs));
  }
  return sup;
}

LiteralOpCheck literal_operator_check(const FixedPointSolution& sol) {
  // literal(t) = 2^{r-1} D(2t) where D is the Gamma-smoothed self
  // convolution; its mass is 2^{r-2} and its mean drifts by -(r-1)/4.
  const int n = sol.g.size();
  const double h = sol.g.dt;
  std::vector<double> g1 = sol.g.v;  // values; grid origin is immaterial here
  std::vector<double> img = apply_compensated(g1, sol.r, h);
  // undo the compensation shift to recover the literal image
  const int cells = static_cast<int>(std::lround((sol.r - 1) / 4.0 / h));
  std::vector<double> lit(n, 0.0);
  for (int i = 0; i < n; ++i) {
    int j = i + cells;
    lit[i] = (j >= 0 && j < n) ? img[j] : 0.0;
  }
  double pref = std::pow(2.0, sol.r - 1);
  double mass = 0.0, m1 = 0.0;
  for (int i = 0; i < n; ++i) {
    double t = sol.g.t(i);
    mass += pref * lit[i];
    m1 += t * pref * lit[i];
  }
  mass *= h;
  m1 *= h;
  LiteralOpCheck c;
  c.mass_factor = mass;
  c.mean_shift = m1 / mass - (sol.g.mean());
  return c;
}

double fixed_point_quadrature_residual(const FixedPointSolution& sol) {
  const int r = sol.r;
  const Profile1D& g = sol.g;
  const double pref = std::pow(2.0 / std::sqrt(M_PI), r - 1) *
                      surface_area(std::max(r - 1, 1));
  const auto& glu = gauss_legendre(220);
  const auto& glr = gauss_legendre(64);
  const double lo = g.t0, hi = g.t_max();

  auto image = [&](double t) {
    // (2/sqrt(pi))^{r-1} S_{r-2} int_0^inf rho^{r-2} e^{-rho^2}
    //   int_0^inf 2 g(t-u+rho^2/2) g(t+u+rho^2/2) du drho
    double acc = 0.0;
    for (int j = 0; j < 64; ++j) {
      double rho = 0.5 * 6.0 * (glr.x[j] + 1.0);
      double wr = 3.0 * glr.w[j] * std::pow(rho, r - 2) * std::exp(-rho * rho);
      double a = t + 0.5 * rho * rho;
      double W = std::min(hi - a, a - lo);
      if (W <= 0.0) continue;
      double su = 0.0;
      for (int k = 0; k < 220; ++k) {
        double u = 0.5 * W * (glu.x[k] + 1.0);
        su += 0.5 * W * glu.w[k] * g.interpolate(a + u) * g.interpolate(a - u);
      }
      acc += wr * 2.0 * su;
    }
    return pref * acc;
  };

  // renormalized comparison at a handful of abscissas: the literal image
  // carries mass 2^{r-2} and a -(r-1)/4 mean drift
  const double scale = std::pow(2.0, r - 2);
  const double shift = 0.25 * (r - 1);
  double resid = 0.0;
  for (double t : {-4.0, -2.0, -1.0, -0.25, 0.0, 0.5, 1.0, 2.0, 4.0}) {
    double lhs = image(t - shift) / scale;
    resid = std::max(resid, std::fabs(lhs - g.interpolate(t)));
  }
  return resid;
}

std::string FixedPointSolution::metadata_json(double left_rate,
                                              double right_slope_near,
                                              double right_slope_far) const {
  nlohmann::json j;
  j["r"] = r;
  j["iterations"] = iterations;
  j["residual"] = residual;
  j["mean_drift"] = mean_drift;
  j["cumulants"] = {cumulant[1], cumulant[2], cumulant[3], cumulant[4]};
  j["tail"] = {{"left_rate", left_rate},
               {"right_log_slope_t5", right_slope_near},
               {"right_log_slope_t10", right_slope_far}};
  return j.dump(2);
}

}  // namespace hrg
