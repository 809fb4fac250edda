/* Generated by cbindgen from dss-lab-ffi; do not edit. */

#ifndef DSS_LAB_H
#define DSS_LAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DssFlow {
  DSS_FLOW_SIMPLE_SHEAR = 0,
  DSS_FLOW_ELONGATION = 1,
} DssFlow;

/**
 * Result codes of every fallible call.
 */
typedef enum DssStatus {
  DSS_STATUS_OK = 0,
  DSS_STATUS_NULL_POINTER = 1,
  DSS_STATUS_INVALID_ARGUMENT = 2,
  DSS_STATUS_PRECONDITION = 3,
  DSS_STATUS_SOLVER_FAILURE = 4,
  DSS_STATUS_IO = 5,
  DSS_STATUS_PANIC = 6,
} DssStatus;

/**
 * Opaque kinetic run: state, configuration and forcing.
 */
typedef struct DssKinetic DssKinetic;

/**
 * Dimensionless parameters; `pe <= 0` or non-finite means Pe = infinity.
 */
typedef struct DssModelParams {
  double re;
  double pe;
  double eps;
  double lambda;
  double theta;
  double u0_swim;
  uint32_t dim;
} DssModelParams;

/**
 * Ordered-fluid coefficients in the homogeneous normalization.
 */
typedef struct DssCoefficients {
  double eta0;
  double eta1;
  double mu0;
  double gamma1;
  double gamma2;
  double kappa1;
  double kappa2;
  double kappa3;
  double mu1;
  double mu2;
} DssCoefficients;

/**
 * Second-order viscometric predictions; `nu20` is NaN in d = 2.
 */
typedef struct DssViscometrics {
  double zero_shear_viscosity;
  double nu10;
  double nu20;
  double elongational_intercept;
  double elongational_slope;
  double phase_shift;
} DssViscometrics;

/**
 * Steady homogeneous stress response; absent entries are NaN.
 */
typedef struct DssSteadyResponse {
  /**
   * Deviatoric total stress, row-major 3 x 3.
   */
  double stress[9];
  double eta;
  double n1;
  double n2;
  double eta_e;
} DssSteadyResponse;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Free with
 * [`dss_string_free`].
 */
char *dss_last_error_message(void);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must be null or a pointer obtained from this library, freed once.
 */
void dss_string_free(char *s);

/**
 * Second- and third-order coefficients (homogeneous normalization).
 *
 * # Safety
 * `params` and `out` must be valid pointers.
 */
enum DssStatus dss_coefficients(const struct DssModelParams *params, struct DssCoefficients *out);

/**
 * Second-order viscometric predictions at `params.eps`.
 *
 * # Safety
 * `params` and `out` must be valid pointers.
 */
enum DssStatus dss_predict_viscometric(const struct DssModelParams *params,
                                       struct DssViscometrics *out);

/**
 * Steady angular response to an imposed homogeneous flow of the given rate.
 *
 * # Safety
 * `params` and `out` must be valid pointers.
 */
enum DssStatus dss_steady_response(const struct DssModelParams *params,
                                   enum DssFlow flow,
                                   double rate,
                                   uint32_t degree,
                                   struct DssSteadyResponse *out);

/**
 * Creates a 2D kinetic run on an `n` x `n` grid with `m_max` angular modes,
 * started from the isotropic uniform state and driven by a named forcing
 * preset (`none`, `cellular`, `mixed`, `kolmogorov`). Writes null to `out`
 * on failure.
 *
 * # Safety
 * `params` and `forcing` must be valid, `out` writable.
 */
enum DssStatus dss_kinetic_new(const struct DssModelParams *params,
                               uint32_t n,
                               uint32_t m_max,
                               double dt,
                               const char *forcing,
                               double amp,
                               struct DssKinetic **out);

/**
 * Releases a kinetic run; null is ignored.
 *
 * # Safety
 * `h` must be null or a handle from [`dss_kinetic_new`], freed once.
 */
void dss_kinetic_free(struct DssKinetic *h);

/**
 * Advances the run to time `t_end`.
 *
 * # Safety
 * `h` must be a live handle.
 */
enum DssStatus dss_kinetic_advance(struct DssKinetic *h, double t_end);

/**
 * Current time of the run, NaN for a null handle.
 *
 * # Safety
 * `h` must be null or a live handle.
 */
double dss_kinetic_time(const struct DssKinetic *h);

/**
 * |integral of f - 1|, NaN for a null handle.
 *
 * # Safety
 * `h` must be null or a live handle.
 */
double dss_kinetic_mass_defect(const struct DssKinetic *h);

/**
 * Copies the nodal density (row-major, `n * n` values) into `buf`.
 *
 * # Safety
 * `h` must be a live handle and `buf` must hold `len` doubles.
 */
enum DssStatus dss_kinetic_density(const struct DssKinetic *h, double *buf, uintptr_t len);

/**
 * Runs a CLI subcommand (`coeffs`, `rheometry`, `simulate`, `convergence`,
 * `boussinesq-compare`) on a JSON configuration and stores the CLI exit
 * code (0 pass, 2 threshold failure) in `exit_code`.
 *
 * # Safety
 * `subcommand` and `config_json` must be valid C strings, `exit_code` writable.
 */
enum DssStatus dss_run_experiment(const char *subcommand,
                                  const char *config_json,
                                  int32_t *exit_code);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DSS_LAB_H */
