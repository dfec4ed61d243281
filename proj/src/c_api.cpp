#include "hrg.h"

#include <cstring>
#include <string>

#include "hrg/coupling.hpp"
#include "hrg/errors.hpp"
#include "hrg/fixed_point.hpp"
#include "hrg/runner.hpp"

namespace {

thread_local std::string g_last_error;

hrg_status status_of(const hrg::Error& e) {
  return e.is_invalid_input() ? HRG_ERR_INVALID : HRG_ERR_NUMERIC;
}

template <typename F>
hrg_status guarded(F&& f) {
  try {
    f();
    return HRG_OK;
  } catch (const hrg::Error& e) {
    g_last_error = std::string(hrg::error_code_name(e.code())) + ": " + e.what();
    return status_of(e);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return HRG_ERR_NUMERIC;
  }
}

}  // namespace

struct hrg_coupling {
  hrg::CouplingSequence seq;
};

struct hrg_fixed_point {
  hrg::FixedPointSolution sol;
};

extern "C" {

const char* hrg_version(void) { return hrg::kVersion; }

const char* hrg_last_error(void) { return g_last_error.c_str(); }

hrg_status hrg_coupling_create(const char* json, hrg_coupling** out) {
  if (!json || !out) {
    g_last_error = "null argument";
    return HRG_ERR_INVALID;
  }
  return guarded([&] {
    *out = new hrg_coupling{hrg::CouplingSequence::from_json(json)};
  });
}

void hrg_coupling_destroy(hrg_coupling* c) { delete c; }

hrg_status hrg_coupling_l(const hrg_coupling* c, int n, double* out) {
  if (!c || !out || n < 0) {
    g_last_error = "null argument or negative level";
    return HRG_ERR_INVALID;
  }
  return guarded([&] { *out = c->seq.l(n); });
}

hrg_status hrg_coupling_a_seq(const hrg_coupling* c, int n, double tol,
                              double* out) {
  if (!c || !out) {
    g_last_error = "null argument";
    return HRG_ERR_INVALID;
  }
  return guarded([&] { *out = c->seq.a_seq(n, tol > 0 ? tol : 1e-12); });
}

hrg_status hrg_coupling_c_big(const hrg_coupling* c, int n, double tol,
                              double* out) {
  if (!c || !out) {
    g_last_error = "null argument";
    return HRG_ERR_INVALID;
  }
  return guarded([&] { *out = c->seq.c_big(n, tol > 0 ? tol : 1e-12); });
}

hrg_status hrg_coupling_dyson_sum(const hrg_coupling* c, double abs_tol,
                                  long n_budget, int* verdict, double* sum) {
  if (!c || !verdict || !sum) {
    g_last_error = "null argument";
    return HRG_ERR_INVALID;
  }
  return guarded([&] {
    auto r = c->seq.dyson_sum(abs_tol > 0 ? abs_tol : 1e-9,
                              n_budget > 0 ? n_budget : 4000000);
    *verdict = static_cast<int>(r.verdict);
    *sum = r.sum;
  });
}

hrg_status hrg_coupling_n_of_eta(const hrg_coupling* c, double eta, int* out) {
  if (!c || !out) {
    g_last_error = "null argument";
    return HRG_ERR_INVALID;
  }
  return guarded([&] { *out = c->seq.n_of_eta(eta); });
}

hrg_status hrg_coupling_check_conditions(const hrg_coupling* c, double eta_bar,
                                         double kappa, int L, int horizon,
                                         char** json_out) {
  if (!c || !json_out) {
    g_last_error = "null argument";
    return HRG_ERR_INVALID;
  }
  return guarded([&] {
    std::string s = c->seq.check_conditions(eta_bar, kappa, L, horizon).to_json();
    *json_out = static_cast<char*>(std::malloc(s.size() + 1));
    std::memcpy(*json_out, s.c_str(), s.size() + 1);
  });
}

void hrg_string_free(char* s) { std::free(s); }

hrg_status hrg_fixed_point_solve(int r, int grid_n, double h, double tol,
                                 int max_iter, hrg_fixed_point** out) {
  if (!out) {
    g_last_error = "null argument";
    return HRG_ERR_INVALID;
  }
  return guarded([&] {
    hrg::FixedPointSettings st;
    if (grid_n > 0) st.grid_n = grid_n;
    if (h > 0) st.h = h;
    if (tol > 0) st.tol = tol;
    if (max_iter > 0) st.max_iter = max_iter;
    *out = new hrg_fixed_point{hrg::solve_g(r, st)};
  });
}

void hrg_fixed_point_destroy(hrg_fixed_point* s) { delete s; }

hrg_status hrg_fixed_point_cumulant(const hrg_fixed_point* s, int k,
                                    double* out) {
  if (!s || !out || k < 1 || k > 4) {
    g_last_error = "null argument or cumulant order out of [1,4]";
    return HRG_ERR_INVALID;
  }
  *out = s->sol.cumulant[k];
  return HRG_OK;
}

hrg_status hrg_fixed_point_residual(const hrg_fixed_point* s, double* out) {
  if (!s || !out) {
    g_last_error = "null argument";
    return HRG_ERR_INVALID;
  }
  *out = s->sol.residual;
  return HRG_OK;
}

hrg_status hrg_fixed_point_tail_rates(const hrg_fixed_point* s,
                                      double* left_rate,
                                      double* right_slope_near,
                                      double* right_slope_far) {
  if (!s || !left_rate || !right_slope_near || !right_slope_far) {
    g_last_error = "null argument";
    return HRG_ERR_INVALID;
  }
  return guarded([&] {
    auto t = hrg::tail_rates(s->sol);
    *left_rate = t.left_rate;
    *right_slope_near = t.right_slope_near;
    *right_slope_far = t.right_slope_far;
  });
}

hrg_status hrg_fixed_point_eval(const hrg_fixed_point* s, double t,
                                double* out) {
  if (!s || !out) {
    g_last_error = "null argument";
    return HRG_ERR_INVALID;
  }
  *out = s->sol.g.interpolate(t);
  return HRG_OK;
}

hrg_status hrg_run_experiment(const char* config_json, const char* out_dir,
                              int threads, int has_seed, uint64_t seed) {
  if (!config_json || !out_dir) {
    g_last_error = "null argument";
    return HRG_ERR_INVALID;
  }
  return guarded([&] {
    std::optional<std::uint64_t> s;
    if (has_seed) s = seed;
    hrg::run_experiment(config_json, out_dir, threads, s);
  });
}

}  // extern "C"
