#ifndef TELEPORT_SIM_H
#define TELEPORT_SIM_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Number of input states, in the order H, V, +, -, R, L.
 */
#define TS_NUM_STATES 6

/**
 * Rows of the error budget: double pair, distinguishability, polarization
 * distortion, background, all sources.
 */
#define TS_BUDGET_ROWS 5

/**
 * Status code of every fallible call.
 */
typedef enum TsStatus {
  TS_STATUS_OK = 0,
  TS_STATUS_NULL_POINTER = 1,
  TS_STATUS_INVALID_ARGUMENT = 2,
  TS_STATUS_CONFIG = 3,
  TS_STATUS_IO = 4,
  TS_STATUS_NON_CONVERGENCE = 5,
  TS_STATUS_INTERNAL = 6,
  TS_STATUS_PANIC = 7,
} TsStatus;

/**
 * Opaque campaign configuration.
 */
typedef struct TsConfig TsConfig;

/**
 * Opaque campaign result.
 */
typedef struct TsResult TsResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next call on the same thread.
 */
const char *ts_last_error(void);

/**
 * Library version as a static string.
 */
const char *ts_version(void);

/**
 * Releases a string returned by the library.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void ts_string_free(char *s);

/**
 * Built-in calibrated configuration.
 */
struct TsConfig *ts_config_default(void);

/**
 * Loads a TOML configuration file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum TsStatus ts_config_load(const char *path, struct TsConfig **out);

/**
 * Parses a TOML configuration held in memory.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum TsStatus ts_config_from_toml(const char *text, struct TsConfig **out);

/**
 * Serializes a configuration to TOML; free the string with [`ts_string_free`].
 *
 * # Safety
 * `config` must be a live handle and `out` a valid pointer.
 */
enum TsStatus ts_config_to_toml(const struct TsConfig *config, char **out);

/**
 * # Safety
 * `config` must be a live handle.
 */
enum TsStatus ts_config_set_seed(struct TsConfig *config, uint64_t seed);

/**
 * # Safety
 * `config` must come from this library and not be freed twice.
 */
void ts_config_free(struct TsConfig *config);

/**
 * Runs the Monte Carlo campaign.
 *
 * # Safety
 * `config` must be a live handle and `out` a valid pointer.
 */
enum TsStatus ts_run_campaign(const struct TsConfig *config, struct TsResult **out);

/**
 * # Safety
 * `result` must come from this library and not be freed twice.
 */
void ts_result_free(struct TsResult *result);

/**
 * Total four-photon counts and the mean fidelity with its sigma.
 *
 * # Safety
 * `result` must be a live handle; output pointers must be valid.
 */
enum TsStatus ts_result_summary(const struct TsResult *result,
                                uint64_t *total_counts,
                                double *mean_fidelity,
                                double *mean_sigma);

/**
 * Per-state tallies for `state` in `0..TS_NUM_STATES`. Fidelity and sigma
 * are NaN when the state collected no events.
 *
 * # Safety
 * `result` must be a live handle; output pointers must be valid.
 */
enum TsStatus ts_result_state(const struct TsResult *result,
                              size_t state,
                              uint64_t *correct,
                              uint64_t *wrong,
                              double *fidelity,
                              double *sigma);

/**
 * Full result record as JSON; free the string with [`ts_string_free`].
 *
 * # Safety
 * `result` must be a live handle and `out` a valid pointer.
 */
enum TsStatus ts_result_to_json(const struct TsResult *result, char **out);

/**
 * Writes `TS_BUDGET_ROWS` fidelity deficits into `deficits`.
 *
 * # Safety
 * `config` must be a live handle; `deficits` must hold `TS_BUDGET_ROWS` values.
 */
enum TsStatus ts_error_budget(const struct TsConfig *config, double *deficits);

/**
 * Fits the calibration parameters of `config` to the published targets and
 * returns the calibrated configuration in `out`.
 *
 * # Safety
 * `config` must be a live handle; output pointers must be valid.
 */
enum TsStatus ts_calibrate(const struct TsConfig *config, struct TsConfig **out, double *residual);

/**
 * Number of rows [`ts_loss_profile`] produces for `config` at 1 s steps.
 *
 * # Safety
 * `config` must be a live handle and `rows` a valid pointer.
 */
enum TsStatus ts_loss_profile_len(const struct TsConfig *config, size_t *rows);

/**
 * Fills `capacity` slots of `time_s` and `loss_db` with the reference-pass
 * loss profile at 1 s steps; `written` receives the row count.
 *
 * # Safety
 * `config` must be a live handle; arrays must hold `capacity` values.
 */
enum TsStatus ts_loss_profile(const struct TsConfig *config,
                              double *time_s,
                              double *loss_db,
                              size_t capacity,
                              size_t *written);

/**
 * Line-of-sight distance in km at `elevation_deg` for a circular orbit at
 * `altitude_km`.
 *
 * # Safety
 * `range_km` must be a valid pointer.
 */
enum TsStatus ts_slant_range(double elevation_deg, double altitude_km, double *range_km);

/**
 * Outcome-averaged fidelity of teleporting `alpha|H⟩ + beta|V⟩`, normalized
 * here, through a Werner resource of fidelity `entangled_fidelity` with
 * mode overlap `mode_overlap`.
 *
 * # Safety
 * `fidelity` must be a valid pointer.
 */
enum TsStatus ts_teleport_fidelity(double alpha_re,
                                   double alpha_im,
                                   double beta_re,
                                   double beta_im,
                                   double entangled_fidelity,
                                   double mode_overlap,
                                   double *fidelity);

/**
 * Expected waiting time, in years, for one event through a fibre.
 *
 * # Safety
 * `years` must be a valid pointer.
 */
enum TsStatus ts_fibre_waiting_years(double rate_hz,
                                     double distance_km,
                                     double loss_db_per_km,
                                     double *years);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TELEPORT_SIM_H */
