#include "hrg/oracle.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "hrg/errors.hpp"
#include "hrg/numerics.hpp"

namespace hrg {

int hier_level(long j, long k) {
  if (j < 1 || k < 1) fail(ErrorCode::InvalidConfig, "hier_level: sites are 1-based");
  int n = 0;
  long a = j - 1, b = k - 1;
  while (a != b) {
    a >>= 1;
    b >>= 1;
    ++n;
  }
  return n;
}

double hier_distance(long j, long k) {
  if (j == k) return 0.0;
  return std::ldexp(1.0, hier_level(j, k) - 1);  // 2^{n(j,k)-1}
}

HierVolume::HierVolume(int n, int r, CouplingSequence coupling, double T)
    : n_(n), r_(r), T_(T), coupling_(std::move(coupling)) {
  if (n < 0 || n > 12) fail(ErrorCode::InvalidConfig, "HierVolume: n out of range");
  if (r < 2) fail(ErrorCode::InvalidConfig, "HierVolume: r must be >= 2");
  if (!(T > 0.0)) fail(ErrorCode::InvalidConfig, "HierVolume: T must be > 0");
  const int s = sites();
  J_.assign(static_cast<size_t>(s) * s, 0.0);
  for (int j = 1; j <= s; ++j)
    for (int k = 1; k <= s; ++k) {
      if (j == k) continue;
      double d = hier_distance(j, k);
      // l(d) with d = 2^{m-1} means l_{m-1}
      double lv = coupling_.l(hier_level(j, k) - 1);
      J_[(j - 1) * s + (k - 1)] = lv / (d * d);
    }
}

void HierVolume::zero_couplings() {
  std::fill(J_.begin(), J_.end(), 0.0);
}

double HierVolume::hamiltonian(std::span<const double> spins) const {
  const int s = sites();
  if (static_cast<int>(spins.size()) != s * r_)
    fail(ErrorCode::InvalidConfig, "hamiltonian: wrong spin count");
  double H = 0.0;
  for (int j = 0; j < s; ++j)
    for (int k = j + 1; k < s; ++k) {
      double dot = 0.0;
      for (int c = 0; c < r_; ++c)
        dot += spins[j * r_ + c] * spins[k * r_ + c];
      H -= J_[j * s + k] * dot;
    }
  return H;
}

namespace {

double site_log_density(std::span<const double> sigma, int r, double kappa,
                        const std::vector<double>& eps_poly) {
  double s2 = 0.0;
  for (int c = 0; c < r; ++c) s2 += sigma[c] * sigma[c];
  double lp = -0.5 * s2 - 0.25 * kappa * s2 * s2;
  if (!eps_poly.empty()) {
    double p = 0.0;
    for (size_t i = eps_poly.size(); i-- > 0;) p = p * s2 + eps_poly[i];
    lp += std::log1p(p);
  }
  return lp;
}

}  // namespace

double single_site_second_moment(int r, double kappa,
                                 const std::vector<double>& eps_poly) {
  // S_{r-1} cancels between numerator and denominator
  const int m = 4001;
  const double x_max = 12.0;
  const double h = x_max / (m - 1);
  std::vector<double> f0(m), f2(m);
  for (int i = 0; i < m; ++i) {
    double x = i * h;
    double x2 = x * x;
    double p = std::exp(-0.5 * x2 - 0.25 * kappa * x2 * x2);
    if (!eps_poly.empty()) {
      double e = 0.0;
      for (size_t k = eps_poly.size(); k-- > 0;) e = e * x2 + eps_poly[k];
      p *= 1.0 + e;
    }
    f0[i] = std::pow(x, r - 1) * p;
    f2[i] = f0[i] * x2;
  }
  return simpson_sum(f2, h) / simpson_sum(f0, h);
}

McResult mc_sample(const HierVolume& vol, const McSettings& st) {
  if (st.sweeps < 1000) fail(ErrorCode::InvalidConfig, "mc_sample: too few sweeps");
  if (st.batches < 20)
    fail(ErrorCode::InvalidConfig, "mc_sample: need >= 20 batches");
  const int s = vol.sites();
  const int r = vol.r();
  const double beta = 1.0 / vol.T();
  SplitMix64 rng(st.seed);

  std::vector<double> spins(static_cast<size_t>(s) * r, 0.0);
  for (int j = 0; j < s; ++j) spins[j * r] = 1.0;  // aligned start

  // local field of site j: sum_k J(j,k) sigma(k)
  std::vector<double> field(r);
  auto local_field = [&](int j) {
    std::fill(field.begin(), field.end(), 0.0);
    for (int k = 0; k < s; ++k) {
      if (k == j) continue;
      double Jjk = vol.J(j + 1, k + 1);
      if (Jjk == 0.0) continue;
      for (int c = 0; c < r; ++c) field[c] += Jjk * spins[k * r + c];
    }
  };

  std::vector<double> prop(r);
  double step_size = 1.0;
  long accepted = 0, proposed = 0;
  auto sweep = [&](bool count) {
    for (int j = 0; j < s; ++j) {
      local_field(j);
      double* sj = &spins[j * r];
      double lp_old = site_log_density(std::span<const double>(sj, r), r,
                                       st.kappa, st.eps_poly);
      double en_old = 0.0;
      for (int c = 0; c < r; ++c) en_old += field[c] * sj[c];

      bool rotate = (rng.next_u64() & 1) != 0;
      if (rotate) {
        // resample the direction, keep the radius
        double norm2 = 0.0;
        for (int c = 0; c < r; ++c) norm2 += sj[c] * sj[c];
        double radius = std::sqrt(norm2);
        double g2 = 0.0;
        for (int c = 0; c < r; ++c) {
          prop[c] = rng.normal();
          g2 += prop[c] * prop[c];
        }
        double inv = radius / std::sqrt(std::max(g2, 1e-300));
        for (int c = 0; c < r; ++c) prop[c] *= inv;
      } else {
        for (int c = 0; c < r; ++c) prop[c] = sj[c] + step_size * rng.normal();
      }
      double lp_new = site_log_density(prop, r, st.kappa, st.eps_poly);
      double en_new = 0.0;
      for (int c = 0; c < r; ++c) en_new += field[c] * prop[c];
      double dlog = (lp_new - lp_old) + beta * (en_new - en_old);
      if (count) ++proposed;
      if (dlog >= 0.0 || rng.next_double() < std::exp(dlog)) {
        std::copy(prop.begin(), prop.end(), sj);
        if (count) ++accepted;
      }
    }
  };

  // autotune the displacement step toward acceptance in [0.3, 0.6]
  {
    bool ok = false;
    for (int round = 0; round < 60 && !ok; ++round) {
      accepted = 0;
      proposed = 0;
      for (int t = 0; t < 200; ++t) sweep(true);
      double acc = double(accepted) / double(proposed);
      if (acc < 0.3)
        step_size *= 0.8;
      else if (acc > 0.6)
        step_size *= 1.25;
      else
        ok = true;
    }
    if (!ok)
      fail(ErrorCode::AutotuneFailed,
           "mc_sample: could not reach target acceptance window");
  }

  const long burn = static_cast<long>(st.burn_fraction * st.sweeps);
  for (long t = 0; t < burn; ++t) sweep(false);

  const long measured = st.sweeps - burn;
  const long per_batch = std::max<long>(1, measured / st.batches);
  std::vector<double> b_m2, b_m4;
  std::vector<std::vector<double>> b_hist;

  // histogram bounds: auto range from a short pre-pass
  double hist_max = st.hist_max;
  if (hist_max <= 0.0) {
    double peak = 0.0;
    for (int t = 0; t < 400; ++t) {
      sweep(false);
      double m2 = 0.0;
      for (int c = 0; c < r; ++c) {
        double mc = 0.0;
        for (int j = 0; j < s; ++j) mc += spins[j * r + c];
        mc /= s;
        m2 += mc * mc;
      }
      peak = std::max(peak, std::sqrt(m2));
    }
    hist_max = 2.5 * peak + 0.5;
  }
  const int nb = st.hist_bins;
  const double bw = hist_max / nb;

  accepted = 0;
  proposed = 0;
  double sum_m2 = 0.0, sum_m4 = 0.0;
  std::vector<double> hist(nb, 0.0);
  long in_batch = 0;
  for (long t = 0; t < per_batch * st.batches; ++t) {
    sweep(true);
    double m2 = 0.0;
    for (int c = 0; c < r; ++c) {
      double mc = 0.0;
      for (int j = 0; j < s; ++j) mc += spins[j * r + c];
      mc /= s;
      m2 += mc * mc;
    }
    sum_m2 += m2;
    sum_m4 += m2 * m2;
    double mag = std::sqrt(m2);
    int bin = static_cast<int>(mag / bw);
    if (bin >= 0 && bin < nb) hist[bin] += 1.0;
    if (++in_batch == per_batch) {
      b_m2.push_back(sum_m2 / per_batch);
      b_m4.push_back(sum_m4 / per_batch);
      for (double& x : hist) x /= (per_batch * bw);  // density units
      b_hist.push_back(hist);
      std::fill(hist.begin(), hist.end(), 0.0);
      sum_m2 = sum_m4 = 0.0;
      in_batch = 0;
    }
  }

  auto batch_stats = [&](const std::vector<double>& b) {
    double mean = 0.0;
    for (double x : b) mean += x;
    mean /= b.size();
    double var = 0.0;
    for (double x : b) var += (x - mean) * (x - mean);
    var /= (b.size() - 1.0);
    return std::pair{mean, std::sqrt(var / b.size())};
  };

  McResult out;
  out.sweeps = st.sweeps;
  out.seed = st.seed;
  out.acceptance = double(accepted) / double(proposed);
  out.proposal_step = step_size;
  auto [m2m, m2e] = batch_stats(b_m2);
  auto [m4m, m4e] = batch_stats(b_m4);
  out.m2 = {"mean_spin_sq", m2m, m2e};
  out.m4 = {"mean_spin_4", m4m, m4e};

  out.hist_edges.resize(nb + 1);
  for (int i = 0; i <= nb; ++i) out.hist_edges[i] = i * bw;
  out.hist_density.resize(nb);
  out.hist_std_error.resize(nb);
  for (int i = 0; i < nb; ++i) {
    std::vector<double> col(b_hist.size());
    for (size_t b = 0; b < b_hist.size(); ++b) col[b] = b_hist[b][i];
    auto [hm, he] = batch_stats(col);
    out.hist_density[i] = hm;
    out.hist_std_error[i] = he;
  }

  // stationarity heuristic: compare the two halves of the batch series
  {
    size_t half = b_m2.size() / 2;
    std::vector<double> h1(b_m2.begin(), b_m2.begin() + half);
    std::vector<double> h2(b_m2.begin() + half, b_m2.end());
    auto [a1, e1] = batch_stats(h1);
    auto [a2, e2] = batch_stats(h2);
    double se = std::sqrt(e1 * e1 + e2 * e2);
    out.nonergodic_warning = std::fabs(a1 - a2) > 5.0 * se;
  }
  return out;
}

std::string McResult::to_json() const {
  nlohmann::json j;
  j["seed"] = seed;
  j["sweeps"] = sweeps;
  j["acceptance"] = acceptance;
  j["proposal_step"] = proposal_step;
  j["nonergodic_warning"] = nonergodic_warning;
  j["m2"] = {{"value", m2.value}, {"std_error", m2.std_error}};
  j["m4"] = {{"value", m4.value}, {"std_error", m4.std_error}};
  j["hist_edges"] = hist_edges;
  j["hist_density"] = hist_density;
  j["hist_std_error"] = hist_std_error;
  return j.dump(2);
}

RadialDensity direct_p1(const ModelParams& params,
                        const CouplingSequence& coupling, int grid_m,
                        int quad_nodes) {
  if (params.r != 2)
    fail(ErrorCode::InvalidConfig, "direct_p1: reference case is r = 2");
  params.validate();
  const double T = params.T;
  const double l0 = coupling.l(0);

  // p_0 support: exp(-x^2/2 - kappa x^4/4); the raw kernel grows like
  // exp(l0 x^2 / T) but the quartic wins, so a finite box is exact to
  // rounding.
  auto log_p0 = [&](double x) {
    double x2 = x * x;
    double v = -0.5 * x2 - 0.25 * params.kappa * x2 * x2;
    if (!params.eps_poly.empty()) {
      double p = 0.0;
      for (size_t i = params.eps_poly.size(); i-- > 0;) p = p * x2 + params.eps_poly[i];
      v += std::log1p(p);
    }
    return v;
  };
  double s0 = 1.0;
  while (log_p0(s0) > -60.0) s0 *= 1.3;

  // output support: integrand ~ exp(l0 x^2/T - x^2 - kappa x^4/2 ...) in the
  // aligned direction; expand until the exponent drops far below the peak
  auto axis_log = [&](double x) { return l0 * x * x / T + 2.0 * log_p0(x); };
  double xpk = 0.0, fpk = axis_log(0.0);
  for (double x = 0.0; x < 50.0; x += 0.01) {
    double f = axis_log(x);
    if (f > fpk) {
      fpk = f;
      xpk = x;
    }
  }
  double x_max = xpk + 0.5;
  while (axis_log(x_max) > fpk - 60.0) x_max += 0.25;

  const auto& gl = gauss_legendre(quad_nodes);
  const double U = s0 + x_max;  // |x -+ u| <= s0 needs |u| <= x + s0
  RadialGrid grid{x_max, grid_m};
  std::vector<double> vals(grid_m, 0.0);
  for (int i = 0; i < grid_m; ++i) {
    double x = grid.x(i);
    double acc = 0.0;
    for (int a = 0; a < quad_nodes; ++a) {
      double u1 = U * gl.x[a];  // [-U, U]
      double du = U * gl.w[a];
      double dx1 = x - u1, dx2 = x + u1;
      for (int b = 0; b < quad_nodes; ++b) {
        double u2 = s0 * gl.x[b];
        double dv = s0 * gl.w[b];
        double q1 = std::sqrt(dx1 * dx1 + u2 * u2);
        double q2 = std::sqrt(dx2 * dx2 + u2 * u2);
        if (q1 > s0 || q2 > s0) continue;
        double lg = (l0 / T) * (x * x - u1 * u1 - u2 * u2) + log_p0(q1) +
                    log_p0(q2) - fpk;
        if (lg > -700.0) acc += du * dv * std::exp(lg);
      }
    }
    vals[i] = acc;
  }
  return RadialDensity(grid, std::move(vals), params.r, NormMode::FullSpace,
                       true);
}

}  // namespace hrg
