/* C interface to the hierarchical RG laboratory.
 *
 * All functions return hrg_status; on failure hrg_last_error() holds a
 * human-readable message for the calling thread. Handles are opaque and
 * must be released with the matching _destroy call.
 */
#ifndef HRG_H
#define HRG_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum {
  HRG_OK = 0,
  HRG_ERR_INVALID = 2, /* bad configuration or precondition */
  HRG_ERR_NUMERIC = 3  /* numerical failure */
} hrg_status;

typedef struct hrg_coupling hrg_coupling;
typedef struct hrg_fixed_point hrg_fixed_point;

const char* hrg_version(void);
const char* hrg_last_error(void);

/* ---- coupling sequences ------------------------------------------------ */

/* json: {"form":"constant"} | {"form":"polylog","a":..,"lambda":..}
 *     | {"form":"explicit","values":[..],"tail":"constant"} */
hrg_status hrg_coupling_create(const char* json, hrg_coupling** out);
void hrg_coupling_destroy(hrg_coupling* c);

hrg_status hrg_coupling_l(const hrg_coupling* c, int n, double* out);
hrg_status hrg_coupling_a_seq(const hrg_coupling* c, int n, double tol,
                              double* out);
hrg_status hrg_coupling_c_big(const hrg_coupling* c, int n, double tol,
                              double* out);

/* verdict: 0 converged, 1 diverged, 2 undecided */
hrg_status hrg_coupling_dyson_sum(const hrg_coupling* c, double abs_tol,
                                  long n_budget, int* verdict, double* sum);

/* N = min{n : l_n > 1/eta}; HRG_ERR_INVALID when no such level exists */
hrg_status hrg_coupling_n_of_eta(const hrg_coupling* c, double eta, int* out);

/* condition report as JSON; free with hrg_string_free */
hrg_status hrg_coupling_check_conditions(const hrg_coupling* c, double eta_bar,
                                         double kappa, int L, int horizon,
                                         char** json_out);
void hrg_string_free(char* s);

/* ---- fixed-point solver ------------------------------------------------ */

/* grid_n = 0 and h = 0 select the defaults (2^14 points, h = 1/32). */
hrg_status hrg_fixed_point_solve(int r, int grid_n, double h, double tol,
                                 int max_iter, hrg_fixed_point** out);
void hrg_fixed_point_destroy(hrg_fixed_point* s);

/* k in [1,4] */
hrg_status hrg_fixed_point_cumulant(const hrg_fixed_point* s, int k,
                                    double* out);
hrg_status hrg_fixed_point_residual(const hrg_fixed_point* s, double* out);
hrg_status hrg_fixed_point_tail_rates(const hrg_fixed_point* s,
                                      double* left_rate,
                                      double* right_slope_near,
                                      double* right_slope_far);
/* density value g(t) by interpolation */
hrg_status hrg_fixed_point_eval(const hrg_fixed_point* s, double t,
                                double* out);

/* ---- experiments ------------------------------------------------------- */

/* Runs one experiment described by config_json, writing outputs + manifest
 * into out_dir. threads <= 0 uses the config value (default 1). The
 * seed override applies when has_seed != 0. */
hrg_status hrg_run_experiment(const char* config_json, const char* out_dir,
                              int threads, int has_seed, uint64_t seed);

#ifdef __cplusplus
}
#endif

#endif /* HRG_H */
