#include "hrg/low_temp.hpp"

#include <algorithm>
#include <cmath>

#include "hrg/errors.hpp"
#include "hrg/numerics.hpp"

namespace hrg {

void Profile1D::finalize() {
  for (double& x : v) {
    if (!std::isfinite(x))
      fail(ErrorCode::QuadratureDivergence, "Profile1D: non-finite value");
    if (x < 0.0) x = 0.0;
  }
  slopes = hermite_slopes(v, dt);
}

double Profile1D::interpolate(double x) const {
  if (x < t0 || x > t_max()) return 0.0;
  double u = (x - t0) / dt;
  int i = std::min(static_cast<int>(u), size() - 2);
  double s = u - i;
  const double y0 = v[i], y1 = v[i + 1];
  const double m0 = slopes[i] * dt, m1 = slopes[i + 1] * dt;
  const double s2 = s * s, s3 = s2 * s;
  double y = (2 * s3 - 3 * s2 + 1) * y0 + (s3 - 2 * s2 + s) * m0 +
             (-2 * s3 + 3 * s2) * y1 + (s3 - s2) * m1;
  return y > 0.0 ? y : 0.0;
}

double Profile1D::mass() const { return simpson_sum(v, dt); }

double Profile1D::mean() const {
  std::vector<double> f(v.size());
  for (size_t i = 0; i < v.size(); ++i) f[i] = t(static_cast<int>(i)) * v[i];
  return simpson_sum(f, dt) / mass();
}

double Profile1D::variance() const {
  double mu = mean();
  std::vector<double> f(v.size());
  for (size_t i = 0; i < v.size(); ++i) {
    double d = t(static_cast<int>(i)) - mu;
    f[i] = d * d * v[i];
  }
  return simpson_sum(f, dt) / mass();
}

void Profile1D::normalize() {
  double z = mass();
  if (!(z > 0.0))
    fail(ErrorCode::DegenerateDensity, "Profile1D: zero mass");
  for (double& x : v) x /= z;
}

ProfileF LowTempAnalysis::extract_f(const FlowState& s) const {
  if (!(s.M > 0.0))
    fail(ErrorCode::InvalidConfig, "extract_f: state has M_n <= 0");
  const WindowGrid& w = s.q.grid();
  const double scale = exp2_sat(s.q.log2_scale());
  if (!(scale > 0.0) || !std::isfinite(scale))
    fail(ErrorCode::GridOverflow, "extract_f: scale not representable");
  const double c_n = flow_->coupling().c_big(s.n);

  // t = c^{(n)} (x_abs - M_n); the axis profile is renormalized to unit
  // half-line mass, which makes f mass-1 automatically.
  ProfileF f;
  f.n = s.n;
  f.M = s.M;
  f.c_n = c_n;
  f.prof.dt = c_n * scale * w.h();
  f.prof.t0 = c_n * (scale * w.lo - s.M);
  double hl_mass = simpson_sum(s.q.values(), w.h());
  f.prof.v.resize(w.m);
  for (int i = 0; i < w.m; ++i)
    f.prof.v[i] = s.q.values()[i] / (hl_mass * scale * c_n);
  f.prof.finalize();

  double mu = f.prof.mean();
  if (std::fabs(mu) > 1e-3 * std::max(1.0, std::sqrt(f.prof.variance())))
    fail(ErrorCode::MeanViolation,
         "extract_f: first moment " + std::to_string(mu) +
             " signals an M_n inconsistency");
  return f;
}

TbarResult LowTempAnalysis::apply_Tbar(const ProfileF& f, double M,
                                       double c_next) const {
  const Profile1D& p = f.prof;
  const int r = flow_->params().r;
  const double lo = p.t0, hi = p.t_max();

  // output grid: image support is roughly c_next * (input support) plus the
  // v^2/2M drift toward negative t
  const int m = p.size();
  Profile1D out;
  out.dt = p.dt * c_next;
  out.t0 = c_next * (lo - 18.0 / std::max(M, 1e-6) - 2.0 * p.dt);
  int m_out = static_cast<int>(std::ceil((c_next * hi - out.t0) / out.dt)) + 2;
  out.v.assign(m_out, 0.0);

  const auto& glu = gauss_legendre(96);
  const auto& glr = gauss_legendre(48);
  const double R = 6.0;  // exp(-rho^2) cut

  for (int i = 0; i < m_out; ++i) {
    double t = out.t0 + i * out.dt;
    double acc = 0.0;
    for (int j = 0; j < 48; ++j) {
      double rho = 0.5 * R * (glr.x[j] + 1.0);
      double wr = 0.5 * R * glr.w[j] * std::pow(rho, r - 2) *
                  std::exp(-rho * rho);
      double a = t / c_next + 0.5 * rho * rho / M;
      double W = std::min(hi - a, a - lo);
      if (W <= 0.0) continue;
      double su = 0.0;
      for (int k = 0; k < 96; ++k) {
        double u = 0.5 * W * (glu.x[k] + 1.0);
        su += 0.5 * W * glu.w[k] * p.interpolate(a + u) * p.interpolate(a - u);
      }
      acc += wr * 2.0 * su;
    }
    out.v[i] = acc * surface_area(std::max(r - 1, 1));
  }
  out.finalize();

  TbarResult res;
  res.Z = out.mass();
  if (!(res.Z > 0.0))
    fail(ErrorCode::QuadratureDivergence, "apply_Tbar: empty image");
  res.m_shift = out.mean();
  // center by relabeling the grid origin, then normalize
  out.t0 -= res.m_shift;
  for (double& x : out.v) x /= res.Z;
  res.image = std::move(out);
  return res;
}

double LowTempAnalysis::m_shift(const ProfileF& f, double M,
                                double c_next) const {
  return apply_Tbar(f, M, c_next).m_shift;
}

double LowTempAnalysis::hypothesis_I_constant(const ProfileF& f,
                                              double beta) const {
  if (!(beta > 0.0) || !std::isfinite(beta))
    fail(ErrorCode::InvalidConfig, "hypothesis_I_constant: invalid beta");
  const double rb = std::sqrt(beta);
  double c_fit = 0.0;
  for (int i = 0; i < f.prof.size(); ++i) {
    double t = f.prof.t(i);
    double env = std::exp(-std::fabs(2.0 * t + t * t / (f.c_n * f.M)) / rb) / rb;
    if (env > 0.0) c_fit = std::max(c_fit, f.prof.v[i] / env);
  }
  return c_fit;
}

PiProfile LowTempAnalysis::build_pi_n(const FlowState& s) const {
  if (!s.Mbar_valid || !(s.Mbar > 0.0))
    fail(ErrorCode::DegenerateDensity, "build_pi_n: Mbar not available");
  const Flow& fl = *flow_;
  const ModelParams& mp = fl.params();
  const WindowGrid& w = s.q.grid();
  const double lam = s.q.log2_scale();
  const double y_scale = std::sqrt(mp.T) * exp2_sat(lam);
  if (!(y_scale > 0.0) || !std::isfinite(y_scale))
    fail(ErrorCode::GridOverflow, "build_pi_n: scale not representable");

  // windowed p profile (log-space reweighting of q)
  const double g_coef = fl.coupling().a_seq(s.n) * fl.coupling().l(s.n) *
                        exp2_sat(2.0 * lam);
  const int m = w.m;
  std::vector<double> lp(m);
  double lmax = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < m; ++i) {
    double x = w.x(i);
    lp[i] = (s.q.values()[i] > 0.0
                 ? std::log(s.q.values()[i])
                 : -std::numeric_limits<double>::infinity()) -
            0.5 * g_coef * x * x;
    lmax = std::max(lmax, lp[i]);
  }
  std::vector<double> pv(m);
  for (int i = 0; i < m; ++i)
    pv[i] = std::isfinite(lp[i]) ? std::exp(lp[i] - lmax) : 0.0;

  // half-line normalized radial profile of p_n in absolute units
  double hl = simpson_sum(pv, w.h()) * y_scale;
  PiProfile out;
  out.Mbar = s.Mbar;
  {
    std::vector<double> f2(m);
    for (int i = 0; i < m; ++i) {
      double y = y_scale * w.x(i);
      double d = y - s.Mbar;
      f2[i] = d * d * pv[i];
    }
    out.V = std::sqrt(simpson_sum(f2, w.h()) * y_scale / hl);
  }
  out.M_tilde = std::sqrt(mp.T) * s.M;
  out.V_tilde = std::sqrt(mp.T) / (fl.coupling().c_big(s.n) * s.M);

  // pi_n(t) = L^{-1} p_hat(Mbar + V t): same nodes, relabeled and renormalized
  out.pi.dt = y_scale * w.h() / out.V;
  out.pi.t0 = (y_scale * w.lo - s.Mbar) / out.V;
  out.pi.v = pv;
  out.pi.finalize();
  out.pi.normalize();

  // tilted profile: f-tilde per the asymptotic rescalings, then shifted to
  // zero mean with a mass-1 norming
  ProfileF f = extract_f(s);
  const double An_ln = fl.coupling().a_seq(s.n) * fl.coupling().l(s.n);
  const double c_n = fl.coupling().c_big(s.n);
  const double k1 = An_ln / c_n;
  const double k2 = An_ln / (2.0 * c_n * c_n * s.M * s.M);
  Profile1D ft;
  ft.dt = f.prof.dt * s.M;
  ft.t0 = f.prof.t0 * s.M;
  ft.v.resize(f.prof.size());
  for (int i = 0; i < f.prof.size(); ++i) {
    double t = ft.t0 + i * ft.dt;
    ft.v[i] = f.prof.v[i] / s.M * std::exp(-k1 * t - k2 * t * t);
  }
  ft.finalize();
  ft.normalize();
  double a0 = -ft.mean();
  ft.t0 += a0;
  out.a0 = a0;
  out.C = 1.0;  // mass-1 norming already applied
  out.pi_tilde = std::move(ft);
  return out;
}

std::optional<int> detect_N1(const Trajectory& traj) {
  if (!traj.N) return std::nullopt;
  for (size_t i = 0; i + 1 < traj.rows.size(); ++i) {
    const auto& row = traj.rows[i];
    const auto& next = traj.rows[i + 1];
    if (row.n < *traj.N) continue;
    if (!std::isfinite(next.beta) || !(row.M > 0.0)) continue;
    if (next.beta <= 100.0 / (row.M * row.M)) return row.n;
  }
  return std::nullopt;
}

}  // namespace hrg
