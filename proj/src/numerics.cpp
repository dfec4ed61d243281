#include "hrg/numerics.hpp"

#include <gsl/gsl_integration.h>

#include <cmath>
#include <map>
#include <mutex>

#include "hrg/errors.hpp"

namespace hrg {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::DivergentSeries: return "DivergentSeries";
    case ErrorCode::NoSuchLevel: return "NoSuchLevel";
    case ErrorCode::GridOverflow: return "GridOverflow";
    case ErrorCode::QuadratureDivergence: return "QuadratureDivergence";
    case ErrorCode::SupportEscape: return "SupportEscape";
    case ErrorCode::MeanViolation: return "MeanViolation";
    case ErrorCode::NotInHighRegion: return "NotInHighRegion";
    case ErrorCode::DegenerateDensity: return "DegenerateDensity";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::NegativeDensity: return "NegativeDensity";
    case ErrorCode::FitWindowTooNarrow: return "FitWindowTooNarrow";
    case ErrorCode::TiltOverflow: return "TiltOverflow";
    case ErrorCode::BracketInvalid: return "BracketInvalid";
    case ErrorCode::InsufficientPoints: return "InsufficientPoints";
    case ErrorCode::AutotuneFailed: return "AutotuneFailed";
    case ErrorCode::Internal: return "Internal";
  }
  return "Unknown";
}

const GaussLegendre& gauss_legendre(int n) {
  static std::mutex mu;
  static std::map<int, GaussLegendre> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;

  gsl_integration_glfixed_table* t =
      gsl_integration_glfixed_table_alloc(static_cast<size_t>(n));
  GaussLegendre gl;
  gl.x.resize(n);
  gl.w.resize(n);
  for (int i = 0; i < n; ++i) {
    double xi, wi;
    gsl_integration_glfixed_point(-1.0, 1.0, static_cast<size_t>(i), &xi, &wi, t);
    gl.x[i] = xi;
    gl.w[i] = wi;
  }
  gsl_integration_glfixed_table_free(t);
  return cache.emplace(n, std::move(gl)).first->second;
}

std::vector<double> simpson_weights(int m, double h) {
  if (m < 4) fail(ErrorCode::InvalidConfig, "simpson_weights: need m >= 4");
  std::vector<double> w(m, 0.0);
  int n_simpson = (m % 2 == 1) ? m : m - 3;  // odd count covers 1/3-rule part
  for (int i = 0; i + 2 < n_simpson; i += 2) {
    w[i] += h / 3.0;
    w[i + 1] += 4.0 * h / 3.0;
    w[i + 2] += h / 3.0;
  }
  if (m % 2 == 0) {
    // Simpson 3/8 on the final three intervals.
    int i = m - 4;
    w[i] += 3.0 * h / 8.0;
    w[i + 1] += 9.0 * h / 8.0;
    w[i + 2] += 9.0 * h / 8.0;
    w[i + 3] += 3.0 * h / 8.0;
  }
  return w;
}

double simpson_sum(std::span<const double> f, double h) {
  auto w = simpson_weights(static_cast<int>(f.size()), h);
  double s = 0.0;
  for (size_t i = 0; i < f.size(); ++i) s += w[i] * f[i];
  return s;
}

std::vector<double> hermite_slopes(std::span<const double> y, double h) {
  const int m = static_cast<int>(y.size());
  std::vector<double> s(m, 0.0);
  if (m < 2) return s;
  auto secant = [&](int i) { return (y[i + 1] - y[i]) / h; };

  for (int i = 0; i < m; ++i) {
    double d;
    if (i >= 2 && i + 2 < m) {
      d = (y[i - 2] - 8.0 * y[i - 1] + 8.0 * y[i + 1] - y[i + 2]) / (12.0 * h);
    } else if (i >= 1 && i + 1 < m) {
      d = (y[i + 1] - y[i - 1]) / (2.0 * h);
    } else if (i == 0) {
      d = secant(0);
    } else {
      d = secant(m - 2);
    }
    s[i] = d;
  }

  // Hyman limiting: keep |slope| <= 3 min(|adjacent secants|) and zero it
  // where the secants disagree in sign. Keeps interpolation overshoot-free
  // without losing accuracy away from extrema.
  for (int i = 0; i < m; ++i) {
    double sl = (i > 0) ? secant(i - 1) : secant(0);
    double sr = (i + 1 < m) ? secant(i) : secant(m - 2);
    if (sl * sr <= 0.0 && i > 0 && i + 1 < m) {
      s[i] = 0.0;
    } else {
      double bound = 3.0 * std::min(std::fabs(sl), std::fabs(sr));
      if (std::fabs(s[i]) > bound) s[i] = (s[i] > 0 ? bound : -bound);
    }
  }
  return s;
}

LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  const size_t n = x.size();
  if (n < 2 || y.size() != n)
    fail(ErrorCode::InsufficientPoints, "fit_line: need >= 2 points");
  double sx = 0, sy = 0;
  for (size_t i = 0; i < n; ++i) {
    sx += x[i];
    sy += y[i];
  }
  double mx = sx / double(n), my = sy / double(n);
  double sxx = 0, sxy = 0;
  for (size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) fail(ErrorCode::FitWindowTooNarrow, "fit_line: degenerate x");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double rss = 0;
  for (size_t i = 0; i < n; ++i) {
    double r = y[i] - (f.intercept + f.slope * x[i]);
    rss += r * r;
  }
  f.residual_rms = std::sqrt(rss / double(n));
  return f;
}

double SplitMix64::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = uniform(-1.0, 1.0);
    v = uniform(-1.0, 1.0);
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  double k = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * k;
  have_spare_ = true;
  return u * k;
}

double exp2_sat(double x) {
  if (x > 1020.0) return std::numeric_limits<double>::infinity();
  if (x < -1070.0) return 0.0;
  return std::exp2(x);
}

}  // namespace hrg
