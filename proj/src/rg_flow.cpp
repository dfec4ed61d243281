#include "hrg/rg_flow.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <atomic>
#include <span>
#include <thread>

#include "hrg/errors.hpp"
#include "hrg/numerics.hpp"

namespace hrg {

namespace {

double eval_poly(const std::vector<double>& c, double t) {
  double v = 0.0;
  for (size_t i = c.size(); i-- > 0;) v = v * t + c[i];
  return v;
}

/// Full-space mass of a windowed radial profile in stored units.
double window_mass_full(const WindowGrid& g, std::span<const double> v, int r) {
  std::vector<double> f(g.m);
  for (int i = 0; i < g.m; ++i) f[i] = std::pow(g.x(i), r - 1) * v[i];
  return surface_area(r) * simpson_sum(f, g.h());
}

}  // namespace

void ModelParams::validate() const {
  if (r < 2) fail(ErrorCode::InvalidConfig, "params: r must be >= 2");
  if (!(kappa > 0.0 && kappa < 1.0))
    fail(ErrorCode::InvalidConfig, "params: kappa must be in (0,1)");
  if (!(T > 0.0)) fail(ErrorCode::InvalidConfig, "params: T must be > 0");
  if (!(eta > 0.0 && eta < 1.0))
    fail(ErrorCode::InvalidConfig, "params: eta must be in (0,1)");
  if (!(eta_bar > 0.0 && eta_bar <= eta))
    fail(ErrorCode::InvalidConfig, "params: eta_bar must be in (0, eta]");
  for (double c : eps_poly)
    if (std::fabs(c) >= 0.01)
      fail(ErrorCode::InvalidConfig,
           "params: eps coefficient bound 0.01 violated");
}

const char* region_name(Region r) {
  switch (r) {
    case Region::Low: return "low";
    case Region::High: return "high";
    case Region::Intermediate: return "intermediate";
    case Region::PreN: return "pre_n";
  }
  return "?";
}

const char* stop_reason_name(StopReason s) {
  switch (s) {
    case StopReason::ReachedHigh: return "reached_high";
    case StopReason::MaxLevel: return "max_level";
    case StopReason::LeftLowNotHigh: return "left_low_not_high";
  }
  return "?";
}

FlowProfile::FlowProfile(WindowGrid g, std::vector<double> values, int r,
                         double log2_scale)
    : g_(g), v_(std::move(values)), r_(r), s_(log2_scale) {
  if (static_cast<int>(v_.size()) != g_.m)
    fail(ErrorCode::Internal, "FlowProfile: value count mismatch");
  if (g_.m < 65) fail(ErrorCode::Internal, "FlowProfile: window too coarse");
  for (double& x : v_) {
    if (!std::isfinite(x))
      fail(ErrorCode::QuadratureDivergence, "FlowProfile: non-finite value");
    if (x < 0.0) x = 0.0;
  }
  double mass = window_mass_full(g_, v_, r_);
  if (!(mass > 0.0) || !std::isfinite(mass))
    fail(ErrorCode::DegenerateDensity, "FlowProfile: zero mass");
  for (double& x : v_) x /= mass;

  const double h = g_.h();
  slopes_ = hermite_slopes(v_, h);

  // full-space moments
  {
    std::vector<double> f2(g_.m), f4(g_.m);
    for (int i = 0; i < g_.m; ++i) {
      double xr = std::pow(g_.x(i), r_ - 1) * v_[i];
      double x2 = g_.x(i) * g_.x(i);
      f2[i] = xr * x2;
      f4[i] = xr * x2 * x2;
    }
    double s = surface_area(r_);
    mom2_ = s * simpson_sum(f2, h);
    mom4_ = s * simpson_sum(f4, h);
  }
  // axis (half-line) statistics
  {
    std::vector<double> f0(v_.begin(), v_.end()), f1(g_.m), f2(g_.m);
    for (int i = 0; i < g_.m; ++i) {
      f1[i] = g_.x(i) * v_[i];
      f2[i] = g_.x(i) * g_.x(i) * v_[i];
    }
    double m0 = simpson_sum(f0, h);
    double m1 = simpson_sum(f1, h);
    double m2 = simpson_sum(f2, h);
    mean_hl_ = m1 / m0;
    sd_hl_ = std::sqrt(std::max(m2 / m0 - mean_hl_ * mean_hl_, 1e-300));
  }
  int ipk = 0;
  for (int i = 1; i < g_.m; ++i)
    if (v_[i] > v_[ipk]) ipk = i;
  peak_x_ = g_.x(ipk);
  peak_v_ = v_[ipk];
  double msl = 0.0;
  for (int i = 0; i + 1 < g_.m; ++i) {
    if (v_[i] > 0 && v_[i + 1] > 0) {
      double sl = std::fabs(std::log(v_[i + 1] / v_[i])) / h;
      msl = std::max(msl, sl);
    }
  }
  max_log_slope_ = msl;
}

double FlowProfile::interpolate(double x) const {
  if (x < g_.lo || x > g_.hi) return 0.0;
  const double h = g_.h();
  double u = (x - g_.lo) / h;
  int i = std::min(static_cast<int>(u), g_.m - 2);
  double t = u - i;
  const double y0 = v_[i], y1 = v_[i + 1];
  const double m0 = slopes_[i] * h, m1 = slopes_[i + 1] * h;
  const double t2 = t * t, t3 = t2 * t;
  double y = (2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + t) * m0 +
             (-2 * t3 + 3 * t2) * y1 + (t3 - t2) * m1;
  return y > 0.0 ? y : 0.0;
}

void parallel_for(int n, int threads, const std::function<void(int)>& f) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<int> next{0};
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (;;) {
        int i = next.fetch_add(16);
        if (i >= n) return;
        int e = std::min(n, i + 16);
        for (int k = i; k < e; ++k) f(k);
      }
    });
  for (auto& th : pool) th.join();
}

Flow::Flow(ModelParams params, CouplingSequence coupling, FlowSettings settings)
    : params_(std::move(params)),
      coupling_(std::move(coupling)),
      settings_(settings) {
  params_.validate();
  c0a0_ = coupling_.c(0) * coupling_.a_seq(0);
  N_ = coupling_.try_n_of_eta(params_.eta);
}

std::optional<int> Trajectory::first_not_low() const {
  for (const auto& row : rows)
    if (row.region != Region::Low) return row.n;
  return std::nullopt;
}

void Trajectory::write_csv(std::ostream& os) const {
  os << "n,T,M_n,Mbar_n,chi_est,beta_n,alpha_n,D2_n,region,Z_n\n";
  char buf[360];
  for (const auto& r : rows) {
    double chi = r.Mbar_valid ? exp2_sat(r.chi_log2) : 0.0;
    std::snprintf(buf, sizeof buf,
                  "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%s,%.17g\n",
                  r.n, r.T, r.M, r.Mbar_valid ? r.Mbar : 0.0, chi, r.beta,
                  r.alpha, r.D2, region_name(r.region), r.Z);
    os << buf;
  }
}

FlowProfile Flow::initial_profile() const {
  const double T = params_.T;
  const double kT2 = params_.kappa * T * T;
  auto E = [&](double x) {
    double x2 = x * x;
    double e = 0.5 * (c0a0_ - T) * x2 - 0.25 * kT2 * x2 * x2;
    if (!params_.eps_poly.empty()) {
      double p = eval_poly(params_.eps_poly, x2);
      if (p <= -1.0)
        fail(ErrorCode::InvalidConfig, "init_q0: 1 + eps(x^2) not positive");
      e += std::log1p(p);
    }
    return e;
  };

  // radial maximizer of the profile
  double xhat = 0.0;
  if (c0a0_ > T) {
    xhat = std::sqrt((c0a0_ - T) / kT2);
    if (!params_.eps_poly.empty()) {
      // golden-section refinement around the eps-free maximizer
      double a = 0.5 * xhat, b = 1.5 * xhat;
      const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
      double c = b - gr * (b - a), d = a + gr * (b - a);
      for (int it = 0; it < 120; ++it) {
        if (E(c) > E(d)) b = d; else a = c;
        c = b - gr * (b - a);
        d = a + gr * (b - a);
      }
      xhat = 0.5 * (a + b);
    }
  }
  const double Emax = E(xhat);
  if (xhat > settings_.x_max_ceiling)
    fail(ErrorCode::GridOverflow, "init_q0: radial mode beyond x_max ceiling");

  const double depth = settings_.window_log_depth;
  auto solve_drop = [&](double a, double b) {
    // find x in [a,b] with Emax - E(x) = depth (E monotone on the side)
    for (int it = 0; it < 200; ++it) {
      double mid = 0.5 * (a + b);
      if (Emax - E(mid) < depth) a = mid; else b = mid;
    }
    return 0.5 * (a + b);
  };
  double hi = xhat + 1.0;
  while (Emax - E(hi) < depth) {
    hi *= 1.5;
    hi += 1.0;
    if (hi > 4.0 * settings_.x_max_ceiling)
      fail(ErrorCode::GridOverflow, "init_q0: support exceeds ceiling");
  }
  hi = solve_drop(xhat, hi);
  if (hi > settings_.x_max_ceiling)
    fail(ErrorCode::GridOverflow, "init_q0: support exceeds x_max ceiling");
  double lo = 0.0;
  if (xhat > 0.0 && Emax - E(0.0) > depth) lo = solve_drop(0.0, xhat) * 0.999;
  lo = std::max(0.0, lo);

  // feature width: half-maximum drop around the mode
  double sigma;
  {
    double a = xhat, b = hi;
    for (int it = 0; it < 100; ++it) {
      double mid = 0.5 * (a + b);
      if (Emax - E(mid) < 0.5) a = mid; else b = mid;
    }
    sigma = std::max(0.5 * (a + b) - xhat, 1e-12);
  }
  double slope = std::max(std::fabs(E(hi) - E(hi * 0.999)) / (0.001 * hi),
                          std::fabs(depth) / std::max(hi - xhat, 1e-12));

  int m = settings_.grid_m;
  double h = std::min(sigma / settings_.spp, 0.55 / std::max(slope, 1e-12));
  if (m <= 0) {
    m = static_cast<int>(std::ceil((hi - lo) / h)) + 1;
    m = std::clamp(m, 129, settings_.max_grid_m);
  }
  if (m % 2 == 0) ++m;

  WindowGrid g{lo, hi, m};
  std::vector<double> v(m);
  for (int i = 0; i < m; ++i) v[i] = std::exp(E(g.x(i)) - Emax);
  return FlowProfile(g, std::move(v), params_.r, 0.0);
}

FlowState Flow::make_state(int n, FlowProfile q, double Z, double beta_prev,
                           double beta, double alpha) const {
  FlowState s{.n = n, .q = std::move(q), .Z = Z};
  const FlowProfile& p = s.q;
  const double lam = p.log2_scale();

  s.log2_M = lam + std::log2(std::max(p.mean_hl(), 1e-300));
  s.M = exp2_sat(s.log2_M);

  // p_n observables via pointwise reweighting in log space:
  //   p(x) ~ q(x) exp(-A_n l_n 4^lam x^2 / 2) on the stored window.
  {
    const double g_coef =
        coupling_.a_seq(n) * coupling_.l(n) * exp2_sat(2.0 * lam);
    const auto& grid = p.grid();
    const int m = grid.m;
    std::vector<double> lp(m);
    int imax = 0;
    for (int i = 0; i < m; ++i) {
      double x = grid.x(i);
      lp[i] = (p.values()[i] > 0.0 ? std::log(p.values()[i])
                                   : -std::numeric_limits<double>::infinity()) -
              0.5 * g_coef * x * x;
      if (lp[i] > lp[imax]) imax = i;
    }
    bool valid = std::isfinite(lp[imax]);
    if (grid.lo > 0.0) {
      if (imax == 0) valid = false;  // shell escaped the stored window
      else if (lp[0] > lp[imax] - 25.0) valid = false;
    }
    s.Mbar_valid = valid;
    if (valid) {
      auto w = simpson_weights(m, grid.h());
      double s0 = 0.0, s2 = 0.0;
      for (int i = 0; i < m; ++i) {
        double pe = std::exp(lp[i] - lp[imax]);
        double xr = std::pow(grid.x(i), params_.r - 1) * pe;
        s0 += w[i] * xr;
        s2 += w[i] * xr * grid.x(i) * grid.x(i);
      }
      if (s0 > 0.0 && s2 > 0.0) {
        double E2 = s2 / s0;  // E|x|^2 of p in stored units
        s.log2_Mbar = 0.5 * (std::log2(params_.T) + std::log2(E2)) + lam;
        s.Mbar = exp2_sat(s.log2_Mbar);
      } else {
        s.Mbar_valid = false;
      }
    }
  }

  s.log2_D2 =
      std::log2(coupling_.c_big(n)) + 2.0 * lam + std::log2(std::max(p.mom2(), 1e-300));
  s.D2 = exp2_sat(s.log2_D2);

  s.beta_prev = beta_prev;
  s.beta = beta;
  s.alpha = alpha;
  s.region = classify(n, beta_prev, s.D2);
  // theoretical threshold e^{-1/eta^2}, compared in log2 space
  s.high_theoretical =
      s.log2_D2 < -1.0 / (params_.eta * params_.eta * M_LN2);
  return s;
}

FlowState Flow::init_q0() const {
  FlowProfile q = initial_profile();
  double beta = std::numeric_limits<double>::quiet_NaN();
  double alpha = std::numeric_limits<double>::quiet_NaN();
  if (N_ && *N_ == 0) {
    double cb = coupling_.c_big(0);
    beta = cb * cb;
    alpha = beta / 200.0;
  }
  return make_state(0, std::move(q), 1.0,
                    std::numeric_limits<double>::quiet_NaN(), beta, alpha);
}

std::optional<std::pair<double, double>> Flow::update_beta_alpha(
    int n, double beta_n, double alpha_n, double M_n_abs) const {
  if (!N_ || n < *N_) return std::nullopt;
  if (n == *N_ && !std::isfinite(beta_n)) {
    // caller asking for the seed at N
    double cb = coupling_.c_big(n);
    double seed = cb * cb * exp2_sat(-double(n));
    return std::make_pair(seed, seed / 200.0);
  }
  double inv_M2 = 0.0;
  if (M_n_abs > 0.0 && std::isfinite(M_n_abs))
    inv_M2 = 1.0 / (M_n_abs * M_n_abs);
  else
    inv_M2 = std::numeric_limits<double>::infinity();
  double cn1 = coupling_.c(n + 1);
  double root = std::sqrt(std::max(beta_n / coupling_.c_big(n), 0.0));
  double beta_next = (0.5 * cn1 * cn1 + root) * beta_n + 10.0 * inv_M2;
  double alpha_next = (0.5 * cn1 * cn1 - root) * alpha_n + 1e-12 * inv_M2;
  return std::make_pair(beta_next, alpha_next);
}

Region Flow::classify(int n, double beta_prev, double D2) const {
  const bool cold = params_.T <= 0.5 * c0a0_;
  bool low = false;
  if (!N_) {
    // bounded coupling: bootstrap branch applies at every level
    low = cold;
  } else if (n <= *N_) {
    low = cold;
  } else {
    low = cold && std::isfinite(beta_prev) &&
          beta_prev / coupling_.c_big(n - 1) <= params_.eta;
  }
  if (low) return Region::Low;
  if (D2 < settings_.theta_high) return Region::High;
  if (N_ && n <= *N_) return Region::PreN;
  if (!N_) return Region::PreN;
  return Region::Intermediate;
}

namespace {

/// Panel breakpoints for one u interval: cores of width ~4*sigma around the
/// anchors, geometric filler panels elsewhere.
void build_panels(double a, double b, std::span<const double> anchors,
                  double sigma, std::vector<double>& bps) {
  bps.clear();
  bps.push_back(a);
  bps.push_back(b);
  for (double c : anchors) {
    for (double e : {c - 2.0 * sigma, c + 2.0 * sigma})
      if (e > a + 0.25 * sigma && e < b - 0.25 * sigma) bps.push_back(e);
  }
  std::sort(bps.begin(), bps.end());
  std::vector<double> out;
  out.push_back(bps.front());
  for (size_t k = 0; k + 1 < bps.size(); ++k) {
    double p = bps[k], q = bps[k + 1];
    double len = q - p;
    if (len > 4.0 * sigma) {
      // symmetric geometric subdivision toward the middle of the gap
      double wl = 3.0 * sigma, wr = 3.0 * sigma;
      double tl = p, tr = q;
      std::vector<double> right;
      while (tl + wl < tr - wr) {
        tl += wl;
        out.push_back(tl);
        wl *= 1.8;
        if (tl + wl >= tr - wr) break;
        tr -= wr;
        right.push_back(tr);
        wr *= 1.8;
      }
      for (size_t i = right.size(); i-- > 0;) out.push_back(right[i]);
    }
    out.push_back(q);
  }
  bps = std::move(out);
}

}  // namespace

FlowState Flow::step(const FlowState& s) const {
  const FlowProfile& q = s.q;
  const WindowGrid& win = q.grid();

  // degenerate-input guard
  {
    int cells = 0;
    double cut = 1e-14 * q.peak_value();
    for (double v : q.values())
      if (v > cut) ++cells;
    if (cells < 3)
      fail(ErrorCode::QuadratureDivergence,
           "step: profile mass concentrated below 3 grid cells");
  }

  const double lam = q.log2_scale();
  const double c_n = coupling_.c_big(s.n);
  const double c_eff = c_n * exp2_sat(2.0 * lam);
  const double depth = settings_.window_log_depth;
  const double u_kernel =
      c_eff > 0.0 ? std::sqrt(1.2 * depth / c_eff)
                  : std::numeric_limits<double>::infinity();

  const double slo = win.lo, shi = win.hi;
  const double sigma = q.sd_hl();

  // output window: radius can only shrink; allow leftward motion by the
  // kernel range plus a few feature widths
  double spread = std::min(u_kernel + 6.0 * sigma, slo);
  double olo = std::max(0.0, slo - spread);
  double ohi = shi;

  double h_t = std::min(sigma / settings_.spp,
                        0.55 / std::max(q.max_log_slope(), 1e-12));
  int m_out = settings_.grid_m;
  if (m_out <= 0) {
    m_out = static_cast<int>(std::ceil((ohi - olo) / h_t)) + 1;
    m_out = std::clamp(m_out, 129, settings_.max_grid_m);
  }
  if (m_out % 2 == 0) ++m_out;
  WindowGrid gout{olo, ohi, m_out};

  // transverse nodes: weight rho^{r-2} e^{-c_eff rho^2} on [0, R]
  const double R = std::min(u_kernel, shi);
  const int nr = settings_.quad_rho;
  const auto& gl = gauss_legendre(nr);
  std::vector<double> rho(nr), wr(nr);
  for (int j = 0; j < nr; ++j) {
    rho[j] = 0.5 * R * (gl.x[j] + 1.0);
    wr[j] = 0.5 * R * gl.w[j] * std::pow(rho[j], params_.r - 2) *
            std::exp(-c_eff * rho[j] * rho[j]);
  }

  const double qpeak_x = q.peak_x();
  std::vector<double> out(m_out, 0.0);

  auto integrate_u = [&](double x, double rj, double wj, double& acc,
                         std::vector<double>& bps) {
    double L2 = slo * slo - rj * rj;
    double H2 = shi * shi - rj * rj;
    if (H2 <= 0.0) return;
    double L = L2 > 0.0 ? std::sqrt(L2) : 0.0;
    double H = std::sqrt(H2);
    // (x+u) in [L, H] for u >= 0
    double bLo = std::max(0.0, L - x), bHi = H - x;
    if (bHi <= bLo) return;
    bHi = std::min(bHi, u_kernel);
    if (bHi <= bLo) return;
    // |x-u| in [L, H]: two intervals
    double i1a = std::max(0.0, x - H), i1b = x - L;
    double i2a = x + L, i2b = x + H;
    double sp = std::sqrt(std::max(qpeak_x * qpeak_x - rj * rj, 0.0));
    double anchors[3] = {std::fabs(x - sp), x + sp, 0.0};
    for (auto [ia, ib] : {std::pair{i1a, i1b}, std::pair{i2a, i2b}}) {
      double a = std::max(ia, bLo), b = std::min(ib, bHi);
      if (b <= a) continue;
      if (b - a <= 12.0 * sigma) {
        int ng = std::clamp(8 + static_cast<int>(6.0 * (b - a) / sigma), 8,
                            settings_.quad_u);
        const auto& g2 = gauss_legendre(ng);
        double mid = 0.5 * (a + b), half = 0.5 * (b - a);
        for (int k = 0; k < ng; ++k) {
          double u = mid + half * g2.x[k];
          double A = std::sqrt((x - u) * (x - u) + rj * rj);
          double B = std::sqrt((x + u) * (x + u) + rj * rj);
          double f = q.interpolate(A);
          if (f == 0.0) continue;
          double g = q.interpolate(B);
          if (g == 0.0) continue;
          acc += wj * half * g2.w[k] * std::exp(-c_eff * u * u) * f * g;
        }
      } else {
        build_panels(a, b, std::span<const double>(anchors, 3), sigma, bps);
        const auto& g2 = gauss_legendre(settings_.panel_nodes);
        for (size_t pnl = 0; pnl + 1 < bps.size(); ++pnl) {
          double mid = 0.5 * (bps[pnl] + bps[pnl + 1]);
          double half = 0.5 * (bps[pnl + 1] - bps[pnl]);
          if (half <= 0.0) continue;
          for (int k = 0; k < static_cast<int>(g2.x.size()); ++k) {
            double u = mid + half * g2.x[k];
            double A = std::sqrt((x - u) * (x - u) + rj * rj);
            double B = std::sqrt((x + u) * (x + u) + rj * rj);
            double f = q.interpolate(A);
            if (f == 0.0) continue;
            double g = q.interpolate(B);
            if (g == 0.0) continue;
            acc += wj * half * g2.w[k] * std::exp(-c_eff * u * u) * f * g;
          }
        }
      }
    }
  };

  parallel_for(m_out, settings_.threads, [&](int i) {
    double x = gout.x(i);
    double acc = 0.0;
    std::vector<double> bps;
    for (int j = 0; j < nr; ++j) integrate_u(x, rho[j], wr[j], acc, bps);
    out[i] = acc;
  });

  // raw mass in stored units; factor 2 for the doubled u >= 0 half and the
  // (r-1)-sphere surface from the transverse reduction
  const double pref = 2.0 * surface_area(std::max(params_.r - 1, 1));
  double z_fine;
  {
    std::vector<double> f(m_out);
    for (int i = 0; i < m_out; ++i)
      f[i] = std::pow(gout.x(i), params_.r - 1) * out[i];
    z_fine = pref * surface_area(params_.r) * simpson_sum(f, gout.h());
    // coarse (stride-2) mass as a resolution self-check
    std::vector<double> fc;
    for (int i = 0; i < m_out; i += 2) fc.push_back(f[i]);
    double z_coarse =
        pref * surface_area(params_.r) * simpson_sum(fc, 2.0 * gout.h());
    if (!(z_fine > 0.0) || !std::isfinite(z_fine))
      fail(ErrorCode::QuadratureDivergence, "step: non-positive mass");
    if (std::fabs(z_coarse - z_fine) > settings_.mass_check_tol * z_fine)
      fail(ErrorCode::QuadratureDivergence,
           "step: mass check failed, grid under-resolves the profile");
  }

  // trim to the retained dynamic range, then relabel the scale if the
  // window has shrunk too far
  double pk = *std::max_element(out.begin(), out.end());
  double floor_v = std::exp(-depth) * pk;
  int i0 = 0, i1 = m_out - 1;
  while (i0 < i1 && out[i0] <= floor_v) ++i0;
  while (i1 > i0 && out[i1] <= floor_v) --i1;
  i0 = std::max(0, i0 - 2);
  i1 = std::min(m_out - 1, i1 + 2);
  if (i1 - i0 < 64) {
    // keep a minimal window around the peak
    i0 = std::max(0, i0 - (64 - (i1 - i0)) / 2 - 1);
    i1 = std::min(m_out - 1, i0 + 66);
  }
  WindowGrid gtrim{gout.x(i0), gout.x(i1), i1 - i0 + 1};
  std::vector<double> vtrim(out.begin() + i0, out.begin() + i1 + 1);

  double new_lam = lam;
  if (gtrim.hi < 1.0) {
    int k = static_cast<int>(std::ceil(std::log2(4.0 / gtrim.hi)));
    double f = std::exp2(double(k));
    gtrim.lo *= f;
    gtrim.hi *= f;
    new_lam -= k;
  }

  FlowProfile qn(gtrim, std::move(vtrim), params_.r, new_lam);

  // beta/alpha bookkeeping for level n+1
  double beta = std::numeric_limits<double>::quiet_NaN();
  double alpha = std::numeric_limits<double>::quiet_NaN();
  int n1 = s.n + 1;
  if (N_) {
    if (n1 == *N_) {
      double cb = coupling_.c_big(n1);
      beta = cb * cb * exp2_sat(-double(n1));
      alpha = beta / 200.0;
    } else if (n1 > *N_) {
      if (auto ba = update_beta_alpha(s.n, s.beta, s.alpha, s.M)) {
        beta = ba->first;
        alpha = ba->second;
      }
    }
  }
  return make_state(n1, std::move(qn), z_fine, s.beta, beta, alpha);
}

RadialDensity Flow::qbar(const FlowState& s) const {
  const WindowGrid& w = s.q.grid();
  double scale = exp2_sat(s.q.log2_scale());
  if (!(scale > 0.0) || !std::isfinite(scale))
    fail(ErrorCode::GridOverflow, "qbar: scale not representable");
  double h = w.h() * scale;
  int pad = static_cast<int>(std::floor(w.lo / w.h() + 0.5));
  long total = static_cast<long>(pad) + w.m;
  if (total > 4000000)
    fail(ErrorCode::GridOverflow, "qbar: from-zero materialization too large");
  std::vector<double> v(total, 0.0);
  for (int i = 0; i < w.m; ++i) v[pad + i] = s.q.values()[i];
  RadialGrid g{h * (total - 1), static_cast<int>(total)};
  return RadialDensity(g, std::move(v), params_.r, NormMode::HalfLine, true);
}

RadialDensity Flow::to_p(const FlowState& s) const {
  if (!s.Mbar_valid)
    fail(ErrorCode::GridOverflow,
         "to_p: p-shell not representable in the stored window at this level");
  const WindowGrid& w = s.q.grid();
  const double lam = s.q.log2_scale();
  double y_scale = std::sqrt(params_.T) * exp2_sat(lam);
  if (!(y_scale > 0.0) || !std::isfinite(y_scale))
    fail(ErrorCode::GridOverflow, "to_p: scale not representable");

  const double g_coef =
      coupling_.a_seq(s.n) * coupling_.l(s.n) * exp2_sat(2.0 * lam);
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
  int pad = static_cast<int>(std::floor(w.lo / w.h() + 0.5));
  long total = static_cast<long>(pad) + m;
  if (total > 4000000)
    fail(ErrorCode::GridOverflow, "to_p: from-zero materialization too large");
  std::vector<double> v(total, 0.0);
  for (int i = 0; i < m; ++i)
    v[pad + i] = std::isfinite(lp[i]) ? std::exp(lp[i] - lmax) : 0.0;
  RadialGrid g{w.h() * y_scale * (total - 1), static_cast<int>(total)};
  return RadialDensity(g, std::move(v), params_.r, NormMode::FullSpace, true);
}

Trajectory Flow::run(int n_max,
                     const std::function<void(const FlowState&)>& observer,
                     int continue_past_high) const {
  if (n_max < 0) fail(ErrorCode::InvalidConfig, "run: n_max must be >= 0");
  Trajectory traj;
  traj.N = N_;
  traj.T = params_.T;

  FlowState s = init_q0();
  auto record = [&](const FlowState& st) {
    TrajectoryRow r;
    r.n = st.n;
    r.T = params_.T;
    r.M = st.M;
    r.log2_M = st.log2_M;
    r.Mbar_valid = st.Mbar_valid;
    r.Mbar = st.Mbar;
    r.log2_Mbar = st.log2_Mbar;
    r.chi_log2 = st.chi_log2();
    r.beta = st.beta;
    r.alpha = st.alpha;
    r.D2 = st.D2;
    r.log2_D2 = st.log2_D2;
    r.Z = st.Z;
    r.region = st.region;
    r.high_theoretical = st.high_theoretical;
    double lam = st.q.log2_scale();
    r.mom2_abs_log2 = 2.0 * lam + std::log2(std::max(st.q.mom2(), 1e-300));
    r.mom4_abs_log2 = 4.0 * lam + std::log2(std::max(st.q.mom4(), 1e-300));
    r.c_big_n = coupling_.c_big(st.n);
    r.c_small_n = coupling_.c(st.n);
    traj.rows.push_back(r);
    if (observer) observer(st);
  };
  record(s);

  int past_high = -1;
  while (s.n < n_max) {
    if (s.region == Region::High) {
      if (past_high < 0) past_high = 0;
      if (past_high >= continue_past_high) {
        traj.stop = StopReason::ReachedHigh;
        return traj;
      }
      ++past_high;
    }
    try {
      s = step(s);
    } catch (const Error& e) {
      throw Error(e.code(), std::string(e.what()) + " (level " +
                                std::to_string(s.n + 1) + ", T=" +
                                std::to_string(params_.T) + ")");
    }
    record(s);
  }
  if (s.region == Region::High)
    traj.stop = StopReason::ReachedHigh;
  else if (s.region == Region::Low || s.region == Region::PreN)
    traj.stop = StopReason::MaxLevel;
  else
    traj.stop = StopReason::LeftLowNotHigh;
  return traj;
}

}  // namespace hrg
