#include "hrg/runner.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "hrg/critical.hpp"
#include "hrg/errors.hpp"
#include "hrg/fixed_point.hpp"
#include "hrg/high_temp.hpp"
#include "hrg/low_temp.hpp"
#include "hrg/numerics.hpp"
#include "hrg/oracle.hpp"
#include "hrg/rg_flow.hpp"

namespace hrg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void require_keys(const json& j, const std::set<std::string>& allowed,
                  const std::set<std::string>& required,
                  const std::string& where) {
  if (!j.is_object())
    fail(ErrorCode::InvalidConfig, where + ": expected an object");
  for (auto& [k, v] : j.items())
    if (!allowed.count(k))
      fail(ErrorCode::InvalidConfig, where + ": unknown key \"" + k + "\"");
  for (const auto& k : required)
    if (!j.contains(k))
      fail(ErrorCode::InvalidConfig, where + ": missing key \"" + k + "\"");
}

ModelParams parse_model(const json& j) {
  require_keys(j, {"r", "kappa", "T", "eps_poly", "eta", "eta_bar"},
               {"r", "kappa"}, "model");
  ModelParams p;
  p.r = j.at("r").get<int>();
  p.kappa = j.at("kappa").get<double>();
  p.T = j.value("T", 1.0);
  p.eta = j.value("eta", 0.1);
  p.eta_bar = j.value("eta_bar", 0.5 * p.eta);
  if (j.contains("eps_poly")) p.eps_poly = j.at("eps_poly").get<std::vector<double>>();
  p.validate();
  return p;
}

FlowSettings parse_flow(const json& j, int threads) {
  FlowSettings s;
  if (!j.is_null()) {
    require_keys(j,
                 {"grid_m", "spp", "quad_u", "quad_rho", "panel_nodes",
                  "theta_high", "x_max_ceiling", "window_log_depth",
                  "mass_check_tol", "max_grid_m"},
                 {}, "flow");
    s.grid_m = j.value("grid_m", s.grid_m);
    s.spp = j.value("spp", s.spp);
    s.quad_u = j.value("quad_u", s.quad_u);
    s.quad_rho = j.value("quad_rho", s.quad_rho);
    s.panel_nodes = j.value("panel_nodes", s.panel_nodes);
    s.theta_high = j.value("theta_high", s.theta_high);
    s.x_max_ceiling = j.value("x_max_ceiling", s.x_max_ceiling);
    s.window_log_depth = j.value("window_log_depth", s.window_log_depth);
    s.mass_check_tol = j.value("mass_check_tol", s.mass_check_tol);
    s.max_grid_m = j.value("max_grid_m", s.max_grid_m);
    if (s.spp < 4 || s.quad_u < 8 || s.quad_rho < 8 || s.panel_nodes < 4)
      fail(ErrorCode::InvalidConfig, "flow: quadrature settings out of range");
  }
  s.threads = threads;
  return s;
}

CouplingSequence parse_coupling(const json& j) {
  return CouplingSequence::from_json(j.dump());
}

void write_file(const fs::path& p, const std::string& body) {
  std::ofstream os(p, std::ios::binary);
  if (!os) fail(ErrorCode::InvalidConfig, "cannot open output file " + p.string());
  os << body;
}

struct Manifest {
  json config;
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  json files = json::array();

  void add(const std::string& name) { files.push_back(name); }
  void write(const fs::path& dir) {
    json j;
    j["tool"] = "hrg";
    j["version"] = kVersion;
    j["config"] = config;
    j["outputs"] = files;
    j["wall_time_s"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    j["written_unix_ms"] =
        std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::system_clock::now().time_since_epoch())
            .count();
    write_file(dir / "manifest.json", j.dump(2) + "\n");
  }
};

void experiment_check_conditions(const json& cfg, const fs::path& out,
                                 Manifest& man) {
  require_keys(cfg, {"experiment", "coupling", "conditions", "threads"},
               {"coupling"}, "config");
  auto coupling = parse_coupling(cfg.at("coupling"));
  json c = cfg.value("conditions", json::object());
  require_keys(c, {"eta_bar", "kappa", "L", "horizon"}, {}, "conditions");
  double eta_bar = c.value("eta_bar", 0.05);
  double kappa = c.value("kappa", 0.05);
  int L = c.value("L", 8);
  int horizon = c.value("horizon", 4000);
  auto rep = coupling.check_conditions(eta_bar, kappa, L, horizon);
  write_file(out / "conditions.json", rep.to_json() + "\n");
  man.add("conditions.json");
}

void write_low_csv(std::ostream& os, const Flow& flow,
                   const std::vector<FlowState>& states,
                   std::optional<int> N1) {
  LowTempAnalysis low(flow);
  os << "n,V_n,ln_Vn,m_n,gamma_n,N1_flag,sup_gap_exact_vs_Tbar\n";
  char buf[256];
  const int r = flow.params().r;
  for (size_t i = 0; i + 1 < states.size(); ++i) {
    const FlowState& s = states[i];
    if (s.region != Region::Low && s.region != Region::PreN) break;
    double V = std::numeric_limits<double>::quiet_NaN();
    if (s.Mbar_valid) {
      try {
        V = low.build_pi_n(s).V;
      } catch (const Error&) {
      }
    }
    double m_n = std::numeric_limits<double>::quiet_NaN();
    double gap = std::numeric_limits<double>::quiet_NaN();
    try {
      ProfileF f = low.extract_f(s);
      auto tb = low.apply_Tbar(f, s.M, flow.coupling().c(s.n + 1));
      m_n = tb.m_shift;
      ProfileF fx = low.extract_f(states[i + 1]);
      double sup = 0.0;
      for (int k = 0; k < fx.prof.size(); ++k) {
        double t = fx.prof.t(k);
        sup = std::max(sup,
                       std::fabs(fx.prof.v[k] - tb.image.interpolate(t)));
      }
      gap = sup;
    } catch (const Error&) {
    }
    double gamma = flow.coupling().c_big(s.n) * (states[i + 1].M - s.M) +
                   0.25 * (r - 1) / s.M;
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%d,%.17g\n",
                  s.n, V, flow.coupling().l(s.n) * V, m_n, gamma,
                  (N1 && s.n >= *N1) ? 1 : 0, gap);
    os << buf;
  }
}

void write_high_csv(std::ostream& os, const Flow& flow, const Trajectory& traj,
                    const std::vector<FlowState>& states) {
  auto obs = track_high_moments(traj);
  os << "n,l,M2,M4,sigma2,gauss_dist,chi_est\n";
  char buf[256];
  for (const auto& row : obs.rows) {
    int n = obs.entry_level + row.l;
    double gd = std::numeric_limits<double>::quiet_NaN();
    for (const auto& s : states)
      if (s.n == n) {
        gd = gaussian_distance(s);
        break;
      }
    double chi = std::numeric_limits<double>::quiet_NaN();
    for (const auto& r2 : traj.rows)
      if (r2.n == n && r2.Mbar_valid) chi = exp2_sat(r2.chi_log2);
    std::snprintf(buf, sizeof buf, "%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", n,
                  row.l, row.M2, row.M4, row.sigma2, gd, chi);
    os << buf;
  }
}

void experiment_flow(const json& cfg, const fs::path& out, Manifest& man,
                     int threads) {
  require_keys(cfg,
               {"experiment", "model", "coupling", "flow", "temperatures",
                "n_max", "low_analysis", "high_analysis", "threads",
                "continue_past_high"},
               {"model", "coupling", "temperatures", "n_max"}, "config");
  ModelParams model = parse_model(cfg.at("model"));
  auto coupling = parse_coupling(cfg.at("coupling"));
  auto temps = cfg.at("temperatures").get<std::vector<double>>();
  if (temps.empty()) fail(ErrorCode::InvalidConfig, "flow: empty temperature list");
  int n_max = cfg.at("n_max").get<int>();
  bool low_analysis = cfg.value("low_analysis", false);
  bool high_analysis = cfg.value("high_analysis", false);
  int past_high = cfg.value("continue_past_high", high_analysis ? 12 : 0);
  if ((low_analysis || high_analysis) && n_max > 400)
    fail(ErrorCode::InvalidConfig,
         "flow: per-level analysis capped at n_max <= 400");

  int outer = std::max(1, std::min<int>(threads, temps.size()));
  int inner = std::max(1, threads / outer);
  json summary = json::array();
  std::vector<json> results(temps.size());
  std::vector<std::string> errors(temps.size());

  parallel_for(static_cast<int>(temps.size()), outer, [&](int i) {
    ModelParams p = model;
    p.T = temps[i];
    FlowSettings fls = parse_flow(cfg.value("flow", json()), inner);
    try {
      Flow flow(p, coupling, fls);
      std::vector<FlowState> states;
      bool keep = low_analysis || high_analysis;
      Trajectory traj = flow.run(
          n_max,
          keep ? std::function<void(const FlowState&)>(
                     [&](const FlowState& s) { states.push_back(s); })
               : std::function<void(const FlowState&)>(),
          past_high);
      std::string name = "flow_T" + std::to_string(i) + ".csv";
      std::ostringstream os;
      traj.write_csv(os);
      write_file(out / name, os.str());
      json r;
      r["T"] = temps[i];
      r["file"] = name;
      r["stop"] = stop_reason_name(traj.stop);
      r["levels"] = traj.rows.size();
      if (auto nb = nbar(traj)) r["nbar"] = *nb;
      if (auto n1 = detect_N1(traj)) r["N1"] = *n1;
      if (low_analysis) {
        std::string lname = "low_T" + std::to_string(i) + ".csv";
        std::ostringstream ls;
        write_low_csv(ls, flow, states, detect_N1(traj));
        write_file(out / lname, ls.str());
        r["low_file"] = lname;
      }
      if (high_analysis && traj.stop == StopReason::ReachedHigh) {
        std::string hname = "high_T" + std::to_string(i) + ".csv";
        std::ostringstream hs;
        write_high_csv(hs, flow, traj, states);
        write_file(out / hname, hs.str());
        r["high_file"] = hname;
      }
      results[i] = std::move(r);
    } catch (const Error& e) {
      errors[i] = e.what();
    }
  });
  for (size_t i = 0; i < temps.size(); ++i) {
    if (!errors[i].empty())
      fail(ErrorCode::QuadratureDivergence,
           "flow at T=" + std::to_string(temps[i]) + ": " + errors[i]);
    summary.push_back(results[i]);
    man.add(results[i].at("file").get<std::string>());
  }
  write_file(out / "flow_summary.json", summary.dump(2) + "\n");
  man.add("flow_summary.json");
}

void experiment_fixed_point(const json& cfg, const fs::path& out,
                            Manifest& man) {
  require_keys(cfg, {"experiment", "r", "fixed_point", "threads"}, {"r"},
               "config");
  int r = cfg.at("r").get<int>();
  FixedPointSettings st;
  json f = cfg.value("fixed_point", json::object());
  require_keys(f, {"grid_n", "h", "tol", "max_iter"}, {}, "fixed_point");
  st.grid_n = f.value("grid_n", st.grid_n);
  st.h = f.value("h", st.h);
  st.tol = f.value("tol", st.tol);
  st.max_iter = f.value("max_iter", st.max_iter);

  auto sol = solve_g(r, st);
  auto rates = tail_rates(sol);
  auto pi = build_pi(sol);

  std::ostringstream os;
  os << "t,g,pi\n";
  char buf[160];
  for (int i = 0; i < sol.g.size(); ++i) {
    double t = sol.g.t(i);
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", t, sol.g.v[i],
                  pi.pi.interpolate(t));
    os << buf;
  }
  write_file(out / "g.csv", os.str());
  man.add("g.csv");

  json meta = json::parse(sol.metadata_json(rates.left_rate,
                                            rates.right_slope_near,
                                            rates.right_slope_far));
  meta["pi"] = {{"C", pi.C}, {"a", pi.a}};
  write_file(out / "fixed_point.json", meta.dump(2) + "\n");
  man.add("fixed_point.json");
}

void experiment_critical(const json& cfg, const fs::path& out, Manifest& man,
                         int threads) {
  require_keys(cfg, {"experiment", "model", "coupling", "flow", "critical",
                     "threads"},
               {"model", "coupling"}, "config");
  ModelParams model = parse_model(cfg.at("model"));
  auto coupling = parse_coupling(cfg.at("coupling"));
  FlowSettings fset = parse_flow(cfg.value("flow", json()), 1);
  CriticalSettings cset;
  json c = cfg.value("critical", json::object());
  require_keys(c,
               {"tol_T", "n_levels", "pre_scan", "mag_temps", "mag_levels",
                "mag_window_lo", "mag_window_hi", "chi_temps", "n_cap"},
               {}, "critical");
  cset.tol_T = c.value("tol_T", cset.tol_T);
  cset.n_levels = c.value("n_levels", cset.n_levels);
  cset.pre_scan = c.value("pre_scan", cset.pre_scan);
  cset.mag_temps = c.value("mag_temps", cset.mag_temps);
  cset.mag_levels = c.value("mag_levels", cset.mag_levels);
  cset.mag_window_lo = c.value("mag_window_lo", cset.mag_window_lo);
  cset.mag_window_hi = c.value("mag_window_hi", cset.mag_window_hi);
  cset.chi_temps = c.value("chi_temps", cset.chi_temps);
  cset.n_cap = c.value("n_cap", cset.n_cap);
  cset.threads = threads;

  CriticalScanner scanner(model, coupling, fset, cset);
  auto scan = scanner.estimate_Tc();
  write_file(out / "critical.json", scan.to_json() + "\n");
  man.add("critical.json");
  std::ostringstream os;
  scan.write_csv(os);
  write_file(out / "critical.csv", os.str());
  man.add("critical.csv");
}

void experiment_oracle(const json& cfg, const fs::path& out, Manifest& man,
                       std::optional<std::uint64_t> seed_override) {
  require_keys(cfg, {"experiment", "model", "coupling", "oracle", "threads"},
               {"model", "coupling", "oracle"}, "config");
  ModelParams model = parse_model(cfg.at("model"));
  auto coupling = parse_coupling(cfg.at("coupling"));
  json o = cfg.at("oracle");
  require_keys(o, {"n", "sweeps", "seed", "hist_bins", "decoupled"}, {"n"},
               "oracle");
  int n = o.at("n").get<int>();
  McSettings st;
  st.sweeps = o.value("sweeps", 1000000L);
  st.seed = seed_override ? *seed_override : o.value("seed", 1ULL);
  st.hist_bins = o.value("hist_bins", 32);
  st.kappa = model.kappa;
  st.eps_poly = model.eps_poly;

  HierVolume vol(n, model.r, coupling, model.T);
  if (o.value("decoupled", false)) vol.zero_couplings();
  auto res = mc_sample(vol, st);
  write_file(out / "oracle.json", res.to_json() + "\n");
  man.add("oracle.json");

  std::ostringstream os;
  os << "bin_lo,bin_hi,density,std_error\n";
  char buf[200];
  for (size_t i = 0; i < res.hist_density.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n",
                  res.hist_edges[i], res.hist_edges[i + 1],
                  res.hist_density[i], res.hist_std_error[i]);
    os << buf;
  }
  write_file(out / "oracle_hist.csv", os.str());
  man.add("oracle_hist.csv");
}

void experiment_compare(const json& cfg, const fs::path& out, Manifest& man,
                        int threads,
                        std::optional<std::uint64_t> seed_override) {
  require_keys(cfg, {"experiment", "model", "coupling", "flow", "compare",
                     "threads"},
               {"model", "coupling", "compare"}, "config");
  ModelParams model = parse_model(cfg.at("model"));
  auto coupling = parse_coupling(cfg.at("coupling"));
  FlowSettings fset = parse_flow(cfg.value("flow", json()), threads);
  json c = cfg.at("compare");
  require_keys(c, {"n", "sweeps", "seed", "hist_bins"}, {"n"}, "compare");
  int n = c.at("n").get<int>();
  if (n < 1 || n > 4)
    fail(ErrorCode::InvalidConfig, "compare: n must be in [1, 4]");

  Flow flow(model, coupling, fset);
  FlowState s = flow.init_q0();
  for (int k = 0; k < n; ++k) s = flow.step(s);
  RadialDensity p_n = flow.to_p(s);

  McSettings st;
  st.sweeps = c.value("sweeps", 1000000L);
  st.seed = seed_override ? *seed_override : c.value("seed", 1ULL);
  st.hist_bins = c.value("hist_bins", 32);
  st.kappa = model.kappa;
  st.eps_poly = model.eps_poly;
  HierVolume vol(n, model.r, coupling, model.T);
  auto mc = mc_sample(vol, st);

  // flow-side E|m|^2 = Mbar^2 and the radial density binned like the MC
  double flow_m2 = s.Mbar * s.Mbar;
  double z_m2 = (mc.m2.value - flow_m2) / mc.m2.std_error;

  int nb = static_cast<int>(mc.hist_density.size());
  double chi2 = 0.0;
  int used = 0;
  json bins = json::array();
  for (int i = 0; i < nb; ++i) {
    double a = mc.hist_edges[i], b = mc.hist_edges[i + 1];
    // expected |m| density from p_n: integrate the radial mass in the bin
    int sub = 24;
    double mass = 0.0;
    for (int k2 = 0; k2 < sub; ++k2) {
      double y = a + (b - a) * (k2 + 0.5) / sub;
      mass += surface_area(model.r) * std::pow(y, model.r - 1) *
              p_n.interpolate(y) * (b - a) / sub;
    }
    double expected = mass / (b - a);
    double se = mc.hist_std_error[i];
    if (se > 0.0 && (mc.hist_density[i] > 0.0 || expected > 1e-12)) {
      double z = (mc.hist_density[i] - expected) / se;
      chi2 += z * z;
      ++used;
    }
    bins.push_back({{"lo", a},
                    {"hi", b},
                    {"mc", mc.hist_density[i]},
                    {"mc_se", mc.hist_std_error[i]},
                    {"flow", expected}});
  }
  json j;
  j["n"] = n;
  j["T"] = model.T;
  j["flow_Mbar_sq"] = flow_m2;
  j["mc_m2"] = {{"value", mc.m2.value}, {"std_error", mc.m2.std_error}};
  j["z_score_m2"] = z_m2;
  j["hist_chi2"] = chi2;
  j["hist_dof"] = used;
  j["hist_chi2_per_dof"] = used > 0 ? chi2 / used : 0.0;
  j["bins"] = bins;
  j["mc"] = json::parse(mc.to_json());
  write_file(out / "compare.json", j.dump(2) + "\n");
  man.add("compare.json");
}

}  // namespace

void run_experiment(const std::string& config_json, const std::string& out_dir,
                    int threads, std::optional<std::uint64_t> seed_override) {
  json cfg;
  try {
    cfg = json::parse(config_json);
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidConfig, std::string("config: ") + e.what());
  }
  if (!cfg.is_object() || !cfg.contains("experiment"))
    fail(ErrorCode::InvalidConfig, "config: missing \"experiment\"");
  std::string exp = cfg.at("experiment").get<std::string>();

  if (threads <= 0) threads = cfg.value("threads", 1);
  if (threads < 1 || threads > 256)
    fail(ErrorCode::InvalidConfig, "threads out of range");

  fs::path out(out_dir);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) fail(ErrorCode::InvalidConfig, "cannot create output dir " + out_dir);

  Manifest man;
  man.config = cfg;

  if (exp == "check-conditions")
    experiment_check_conditions(cfg, out, man);
  else if (exp == "flow")
    experiment_flow(cfg, out, man, threads);
  else if (exp == "fixed-point")
    experiment_fixed_point(cfg, out, man);
  else if (exp == "critical")
    experiment_critical(cfg, out, man, threads);
  else if (exp == "oracle")
    experiment_oracle(cfg, out, man, seed_override);
  else if (exp == "compare")
    experiment_compare(cfg, out, man, threads, seed_override);
  else
    fail(ErrorCode::InvalidConfig, "unknown experiment \"" + exp + "\"");

  man.write(out);
}

}  // namespace hrg
