#ifndef CONGESTION_LAB_H
#define CONGESTION_LAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

// Result of every fallible call.
typedef enum cl_status {
  CL_STATUS_OK = 0,
  // A required pointer argument was null.
  CL_STATUS_NULL_POINTER = 1,
  // Bad argument: invalid UTF-8, zero length, out-of-range index.
  CL_STATUS_INVALID_ARGUMENT = 2,
  // Missing file or unreadable input.
  CL_STATUS_MISSING_INPUT = 3,
  // Inconsistent data (registry, matrix, split, model).
  CL_STATUS_DATA = 4,
  // Malformed CSV or header.
  CL_STATUS_SCHEMA = 5,
  // Degenerate input, non-convergence or timeout.
  CL_STATUS_NUMERICAL = 6,
  // A Rust panic was caught at the boundary.
  CL_STATUS_INTERNAL = 7,
} cl_status;

// Fitted ARIMA model.
typedef struct cl_arima_model cl_arima_model;

// Timestamps × intersections intensity matrix.
typedef struct cl_matrix cl_matrix;

// Road network loaded from a segment registry.
typedef struct cl_network cl_network;

// Pixel color palette.
typedef struct cl_palette cl_palette;

// Fitted ε-SVR regressor.
typedef struct cl_svr_model cl_svr_model;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null. The pointer stays
// valid until the next failing call on the same thread.
const char *cl_last_error(void);

// Library version as a static NUL-terminated string.
const char *cl_version(void);

// Default palette (#63D668, #FF974D, #F23C32, #811F1F, tolerance 30).
struct cl_palette *cl_palette_default(void);

// Palette from four `0xRRGGBB` level colors (level 1 first) and a
// Euclidean RGB tolerance.
//
// # Safety
// `colors` must point to 4 readable values; `out` must be writable.
enum cl_status cl_palette_new(const uint32_t *colors, double tolerance, struct cl_palette **out);

// # Safety
// `palette` must be null or a handle from this library, freed once.
void cl_palette_free(struct cl_palette *palette);

// Congestion level 0..=4 of one pixel; 0 when no color is within tolerance.
// A null palette means the default palette.
//
// # Safety
// `palette` must be null or a live handle.
uint8_t cl_classify_pixel(const struct cl_palette *palette, uint8_t r, uint8_t g, uint8_t b);

// Root mean squared error of two equal-length vectors.
//
// # Safety
// `truth` and `pred` must hold `len` values; `out` must be writable.
enum cl_status cl_rmse(const double *truth, const double *pred, size_t len, double *out);

// Mean absolute error of two equal-length vectors.
//
// # Safety
// As [`cl_rmse`].
enum cl_status cl_mae(const double *truth, const double *pred, size_t len, double *out);

// Pearson correlation. `*defined` is set to 0 (and `*out` to NaN) when
// either vector is constant.
//
// # Safety
// As [`cl_rmse`]; `defined` must be writable.
enum cl_status cl_corr(const double *truth,
                       const double *pred,
                       size_t len,
                       double *out,
                       int *defined);

// Loads a registry CSV file (`segment_id,color_hex,from_id,to_id`).
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum cl_status cl_network_load(const char *path, struct cl_network **out);

// Parses registry CSV text.
//
// # Safety
// As [`cl_network_load`].
enum cl_status cl_network_parse(const char *csv, struct cl_network **out);

// # Safety
// `net` must be a live handle.
size_t cl_network_intersection_count(const struct cl_network *net);

// # Safety
// `net` must be a live handle.
size_t cl_network_segment_count(const struct cl_network *net);

// Number of distinct upstream neighbors of `node`.
//
// # Safety
// `net` must be a live handle, `node` a NUL-terminated string and `out` writable.
enum cl_status cl_network_neighbor_count(const struct cl_network *net,
                                         const char *node,
                                         size_t *out);

// # Safety
// `net` must be null or a handle from this library, freed once.
void cl_network_free(struct cl_network *net);

// Reads a matrix CSV (`timestamp,<node>,...`).
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum cl_status cl_matrix_load(const char *path, struct cl_matrix **out);

// # Safety
// `m` must be a live handle.
size_t cl_matrix_rows(const struct cl_matrix *m);

// # Safety
// `m` must be a live handle.
size_t cl_matrix_columns(const struct cl_matrix *m);

// Cell value; `*present` is 0 for a missing cell.
//
// # Safety
// `m` must be a live handle; `value` and `present` writable.
enum cl_status cl_matrix_get(const struct cl_matrix *m,
                             size_t row,
                             size_t col,
                             uint64_t *value,
                             int *present);

// Decimates to `interval_secs` (a multiple of 30) into a new matrix.
//
// # Safety
// `m` must be a live handle; `out` writable.
enum cl_status cl_matrix_resample(const struct cl_matrix *m,
                                  uint32_t interval_secs,
                                  struct cl_matrix **out);

// # Safety
// `m` must be null or a handle from this library, freed once.
void cl_matrix_free(struct cl_matrix *m);

// Fits an RBF ε-SVR. `rows` is row-major `n × dim`. `sigma <= 0` selects
// the median heuristic; `tolerance <= 0` keeps the default 1e-3.
//
// # Safety
// `rows` must hold `n*dim` values, `targets` `n` values; `out` writable.
enum cl_status cl_svr_fit(const double *rows,
                          size_t n,
                          size_t dim,
                          const double *targets,
                          double c,
                          double epsilon,
                          double sigma,
                          double tolerance,
                          struct cl_svr_model **out);

// Predicts one raw (unstandardized) feature row of width `dim`.
//
// # Safety
// `model` must be a live handle, `x` must hold `dim` values, `out` writable.
enum cl_status cl_svr_predict(const struct cl_svr_model *model,
                              const double *x,
                              size_t dim,
                              double *out);

// Bandwidth actually used by the fit.
//
// # Safety
// `model` must be a live handle.
double cl_svr_sigma(const struct cl_svr_model *model);

// # Safety
// `model` must be null or a handle from this library, freed once.
void cl_svr_free(struct cl_svr_model *model);

// Fits ARIMA(p,d,q) to one contiguous series.
//
// # Safety
// `series` must hold `n` values; `out` writable.
enum cl_status cl_arima_fit(const double *series,
                            size_t n,
                            uint32_t p,
                            uint32_t d,
                            uint32_t q,
                            struct cl_arima_model **out);

// Writes `steps` forecasts continuing the training series into `out`.
//
// # Safety
// `model` must be a live handle; `out` must hold `steps` values.
enum cl_status cl_arima_forecast(const struct cl_arima_model *model, size_t steps, double *out);

// Writes `steps` forecasts continuing `history` (original scale).
//
// # Safety
// `history` must hold `len` values; `out` must hold `steps` values.
enum cl_status cl_arima_forecast_from(const struct cl_arima_model *model,
                                      const double *history,
                                      size_t len,
                                      size_t steps,
                                      double *out);

// Copies up to `cap` AR weights into `out`; returns the count available.
//
// # Safety
// `model` must be a live handle; `out` must hold `cap` values or be null.
size_t cl_arima_ar_weights(const struct cl_arima_model *model, double *out, size_t cap);

// Regression constant of the differenced process.
//
// # Safety
// `model` must be a live handle.
double cl_arima_intercept(const struct cl_arima_model *model);

// # Safety
// `model` must be null or a handle from this library, freed once.
void cl_arima_free(struct cl_arima_model *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONGESTION_LAB_H */
