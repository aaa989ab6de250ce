#ifndef LEVYLAN_H
#define LEVYLAN_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes of the fallible calls.
 */
typedef enum {
  LEVYLAN_STATUS_OK = 0,
  LEVYLAN_STATUS_NULL_POINTER = 1,
  LEVYLAN_STATUS_INVALID_ARGUMENT = 2,
  LEVYLAN_STATUS_NUMERICAL = 3,
  LEVYLAN_STATUS_BUDGET = 4,
  LEVYLAN_STATUS_IO = 5,
  LEVYLAN_STATUS_PANIC = 6,
  LEVYLAN_STATUS_BUFFER_TOO_SMALL = 7,
} LevylanStatus;

/**
 * Taper codes accepted by `levylan_spec_new`.
 */
typedef enum {
  LEVYLAN_TAPER_NONE = 0,
  LEVYLAN_TAPER_EXP_ABS = 1,
  LEVYLAN_TAPER_GAUSS = 2,
  LEVYLAN_TAPER_SECH_LIKE = 3,
  LEVYLAN_TAPER_SMOOTH_DAMP = 4,
} LevylanTaper;

/**
 * A tabulated density with its tail models.
 */
typedef struct LevylanDensity LevylanDensity;

/**
 * The law of one increment under a given parameter, with its score.
 */
typedef struct LevylanModel LevylanModel;

/**
 * A Lévy measure specification.
 */
typedef struct LevylanSpec LevylanSpec;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread, or null. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *levylan_last_error(void);

/**
 * Builds a specification. `u1` is read only for the smooth-damp taper.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage.
 */
LevylanStatus levylan_spec_new(double alpha,
                               double c_plus,
                               double c_minus,
                               LevylanTaper taper,
                               double u1,
                               LevylanSpec **out);

/**
 * Parses a specification from the JSON form used by the CLI `model`
 * field.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` writable.
 */
LevylanStatus levylan_spec_from_json(const char *json, LevylanSpec **out);

/**
 * # Safety
 * `spec` must come from this library or be null.
 */
void levylan_spec_free(LevylanSpec *spec);

/**
 * Drift correction `c_t` of the spec.
 *
 * # Safety
 * `spec` must be valid and `out` writable.
 */
LevylanStatus levylan_spec_drift(const LevylanSpec *spec, double t, double *out);

/**
 * Tabulates the density of `t^{-1/α}(Z_t + c_t)`, or of its stable limit when
 * `t <= 0`, with default inversion settings.
 *
 * # Safety
 * `spec` must be valid and `out` writable.
 */
LevylanStatus levylan_density_new(const LevylanSpec *spec, double t, LevylanDensity **out);

/**
 * # Safety
 * `density` must come from this library or be null.
 */
void levylan_density_free(LevylanDensity *density);

/**
 * Density value at `x`; NaN for a null handle.
 *
 * # Safety
 * `density` must be valid or null.
 */
double levylan_density_value(const LevylanDensity *density, double x);

/**
 * Derivative of the density at `x`; NaN for a null handle.
 *
 * # Safety
 * `density` must be valid or null.
 */
double levylan_density_derivative(const LevylanDensity *density, double x);

/**
 * Total mass of the table including its tails; NaN for a null handle.
 *
 * # Safety
 * `density` must be valid or null.
 */
double levylan_density_mass(const LevylanDensity *density);

/**
 * Fisher information `Σ(θ)` of the stable limit, written row-major into
 * `out[0..4]`.
 *
 * # Safety
 * `out` must point to four writable doubles.
 */
LevylanStatus levylan_fisher(double alpha,
                             double c_plus,
                             double c_minus,
                             double gamma,
                             double *out);

/**
 * Law of `X_t = βt + γZ_t` without nuisance.
 *
 * # Safety
 * `spec` must be valid and `out` writable.
 */
LevylanStatus levylan_model_new(const LevylanSpec *spec,
                                double beta,
                                double gamma,
                                double t,
                                LevylanModel **out);

/**
 * # Safety
 * `model` must come from this library or be null.
 */
void levylan_model_free(LevylanModel *model);

/**
 * Log-density of one increment at `x`.
 *
 * # Safety
 * `model` must be valid and `out` writable.
 */
LevylanStatus levylan_model_log_density(const LevylanModel *model, double x, double *out);

/**
 * Score `∂_θ ln p_t(θ; x)` written into `out[0..2]` as `(∂_β, ∂_γ)`.
 *
 * # Safety
 * `model` must be valid and `out` must point to two writable doubles.
 */
LevylanStatus levylan_model_score(const LevylanModel *model, double x, double *out);

/**
 * Simulates `X` at `t_k = k h`, `k = 0..=n`, into `out[0..=n]`. Untapered
 * measures use exact stable increments; tapered ones use a jump ledger
 * with threshold `0.1 h^{1/α}` and a Gaussian small-jump part.
 *
 * # Safety
 * `spec` must be valid and `out` must point to `len` writable doubles.
 */
LevylanStatus levylan_simulate(const LevylanSpec *spec,
                               double beta,
                               double gamma,
                               uintptr_t n,
                               double h,
                               uint64_t seed,
                               double *out,
                               uintptr_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LEVYLAN_H */
