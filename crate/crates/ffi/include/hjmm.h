#ifndef HJMM_H
#define HJMM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of a call.
typedef enum HjmmStatus {
  HJMM_STATUS_OK = 0,
  // A parameter was rejected, or curves live on different grids.
  HJMM_STATUS_INVALID_ARGUMENT = 1,
  // The run configuration could not be parsed or validated.
  HJMM_STATUS_CONFIG_ERROR = 2,
  // Non-finite values, Picard non-convergence or a failed linear solve.
  HJMM_STATUS_NUMERICAL_ERROR = 3,
  HJMM_STATUS_IO_ERROR = 4,
  HJMM_STATUS_NULL_POINTER = 5,
  // A Rust panic was caught at the boundary.
  HJMM_STATUS_INTERNAL = 6,
} HjmmStatus;

// Validated run configuration.
typedef struct HjmmConfig HjmmConfig;

// Forward curve sampled on a grid.
typedef struct HjmmCurve HjmmCurve;

// Uniform grid on `[0, x_max]` with its space parameters.
typedef struct HjmmGrid HjmmGrid;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the next call.
const char *hjmm_last_error_message(void);

// Library version as a static string.
const char *hjmm_version(void);

// Releases a string returned by this library.
//
// # Safety
// `s` must come from this library and must not be used afterwards.
void hjmm_string_free(char *s);

// Grid with `n_cells` cells on `[0, x_max]`; `x_max <= 0` selects `40/nu`.
//
// # Safety
// `out_grid` must be valid for writes.
enum HjmmStatus hjmm_grid_new(double nu,
                              double p,
                              double x_max,
                              size_t n_cells,
                              struct HjmmGrid **out_grid);

// # Safety
// `grid` must come from [`hjmm_grid_new`] and must not be used afterwards.
void hjmm_grid_free(struct HjmmGrid *grid);

// Number of nodes, `n_cells + 1`; zero for a null grid.
//
// # Safety
// `grid` must be null or a live grid.
size_t hjmm_grid_len(const struct HjmmGrid *grid);

// Curve from `len` node values; `len` must equal the grid length.
//
// # Safety
// `values` must point to `len` readable doubles and `out_curve` must be valid for writes.
enum HjmmStatus hjmm_curve_new(const struct HjmmGrid *grid,
                               const double *values,
                               size_t len,
                               struct HjmmCurve **out_curve);

// # Safety
// `curve` must come from this library and must not be used afterwards.
void hjmm_curve_free(struct HjmmCurve *curve);

// Number of node values; zero for a null curve.
//
// # Safety
// `curve` must be null or a live curve.
size_t hjmm_curve_len(const struct HjmmCurve *curve);

// Copies the node values into `out_values`, which holds `len` doubles.
//
// # Safety
// `out_values` must point to `len` writable doubles.
enum HjmmStatus hjmm_curve_values(const struct HjmmCurve *curve, double *out_values, size_t len);

// Weighted Lebesgue norm of the curve.
//
// # Safety
// `curve` must be live and `out_norm` valid for writes.
enum HjmmStatus hjmm_lp_norm(const struct HjmmCurve *curve, double *out_norm);

// Weighted Sobolev norm of the curve.
//
// # Safety
// `curve` must be live and `out_norm` valid for writes.
enum HjmmStatus hjmm_sobolev_norm(const struct HjmmCurve *curve, double *out_norm);

// `f(· + t)` with zero beyond the grid.
//
// # Safety
// `curve` must be live and `out_curve` valid for writes.
enum HjmmStatus hjmm_shift(const struct HjmmCurve *curve, double t, struct HjmmCurve **out_curve);

// Zero-coupon bond price of maturity `maturity` for the curve observed at time `t`. The yield
// is NaN when `maturity == t`.
//
// # Safety
// `curve` must be live; the out-pointers must be valid for writes.
enum HjmmStatus hjmm_bond_price(const struct HjmmCurve *curve,
                                double t,
                                double maturity,
                                double *out_price,
                                double *out_yield);

// Parses and validates a JSON run configuration.
//
// # Safety
// `json` must be a nul-terminated string and `out_config` valid for writes.
enum HjmmStatus hjmm_config_from_json(const char *json, struct HjmmConfig **out_config);

// # Safety
// `config` must come from [`hjmm_config_from_json`] and must not be used afterwards.
void hjmm_config_free(struct HjmmConfig *config);

// The configuration with every default written out, as JSON.
//
// # Safety
// `config` must be live and `out_json` valid for writes.
enum HjmmStatus hjmm_config_effective_json(const struct HjmmConfig *config, char **out_json);

// Evaluates the invariant-measure condition. `out_holds` receives 1 or 0 and `out_json`,
// when not null, the full report.
//
// # Safety
// `config` must be live; `out_holds` valid for writes; `out_json` null or valid for writes.
enum HjmmStatus hjmm_check_invariant(const struct HjmmConfig *config,
                                     int32_t *out_holds,
                                     char **out_json);

// Simulates the configured path. `out_final` receives the terminal curve and `out_json`, when
// not null, the step times, norms and diagnostics.
//
// # Safety
// `config` must be live; `out_final` valid for writes; `out_json` null or valid for writes.
enum HjmmStatus hjmm_simulate(const struct HjmmConfig *config,
                              struct HjmmCurve **out_final,
                              char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HJMM_H */
