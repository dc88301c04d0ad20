/* C interface to the qnoise simulation library. */

#pragma once

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Noise process selector.
 */
typedef enum QnNoise {
  QN_NOISE_RTN = 0,
  QN_NOISE_OU = 1,
} QnNoise;

/**
 * Result of every call. Nonzero values mean the out-parameters were not
 * written; `qn_status_message` renders them readable.
 */
typedef enum QnStatus {
  QN_STATUS_OK = 0,
  QN_STATUS_NULL_ARG = 1,
  QN_STATUS_INVALID_ARG = 2,
  QN_STATUS_NON_PHYSICAL = 3,
  QN_STATUS_UNCONVERGED = 4,
  QN_STATUS_DEGENERATE_ROOTS = 5,
  QN_STATUS_PANIC = 6,
} QnStatus;

/**
 * Opaque ensemble-averaged evolution: times, Bloch vectors, and the
 * standard error of the mean at each step.
 */
typedef struct QnEvolution QnEvolution;

/**
 * Opaque pair of a level splitting and a switching rate.
 */
typedef struct QnModel QnModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates a model handle for level splitting `omega` and switching rate
 * `gamma` (nonnegative, finite). On success writes the handle to `out`.
 *
 * # Safety
 * `out` must be a valid pointer. The handle must be released with
 * `qn_model_free`.
 */
enum QnStatus qn_model_new(double omega, double gamma, struct QnModel **out);

/**
 * Releases a model handle. Null is ignored.
 *
 * # Safety
 * `m` must be a handle from `qn_model_new` that has not been freed.
 */
void qn_model_free(struct QnModel *m);

/**
 * Roots of the two spectral cubics. Each buffer holds 3 doubles: `mu_*`
 * receive the transverse branch, `eta_*` the longitudinal one.
 *
 * # Safety
 * `m` must be a live model handle; the four buffers must hold 3 doubles.
 */
enum QnStatus qn_eigen_cubics(const struct QnModel *m,
                              double *mu_re,
                              double *mu_im,
                              double *eta_re,
                              double *eta_im);

/**
 * Single-qubit averaged map at time `t`, written as 9 row-major doubles.
 *
 * # Safety
 * `m` must be a live model handle; `out` must hold 9 doubles.
 */
enum QnStatus qn_transfer_single(const struct QnModel *m, double t, double *out);

/**
 * Two-qubit averaged map at time `t` for a shared noise source, written
 * as 225 row-major doubles acting on (a, b, vec C).
 *
 * # Safety
 * `m` must be a live model handle; `out` must hold 225 doubles.
 */
enum QnStatus qn_transfer_two_common(const struct QnModel *m, double t, double *out);

/**
 * Two-qubit averaged map at time `t` for independent noise sources.
 *
 * # Safety
 * `m` must be a live model handle; `out` must hold 225 doubles.
 */
enum QnStatus qn_transfer_two_independent(const struct QnModel *m, double t, double *out);

/**
 * Switching-rate window in which the whole relaxation spectrum is real.
 * Writes the boundaries and sets `exists` accordingly; when no window
 * exists the boundaries are NaN.
 *
 * # Safety
 * `lower`, `upper`, and `exists` must be valid pointers.
 */
enum QnStatus qn_real_region(double omega, double *lower, double *upper, bool *exists);

/**
 * Averages `n_traj` noise realizations acting on the Bloch vector
 * `(nx, ny, nz)` over `n_steps` steps of length `dt`, and returns an
 * evolution handle with `n_steps + 1` records. Deterministic in `seed`.
 *
 * # Safety
 * `out` must be a valid pointer. The handle must be released with
 * `qn_evolution_free`.
 */
enum QnStatus qn_evolve_single_mc(const struct QnModel *m,
                                  enum QnNoise noise,
                                  double nx,
                                  double ny,
                                  double nz,
                                  double dt,
                                  size_t n_steps,
                                  size_t n_traj,
                                  uint64_t seed,
                                  struct QnEvolution **out);

/**
 * Number of records in an evolution handle; 0 for null.
 *
 * # Safety
 * `e` must be null or a live evolution handle.
 */
size_t qn_evolution_len(const struct QnEvolution *e);

/**
 * Copies the record times into `buf` (`qn_evolution_len` doubles).
 *
 * # Safety
 * `e` must be a live evolution handle; `buf` must hold enough doubles.
 */
enum QnStatus qn_evolution_times(const struct QnEvolution *e, double *buf);

/**
 * Copies the mean Bloch vectors into `buf` as x,y,z triples
 * (`3 * qn_evolution_len` doubles).
 *
 * # Safety
 * `e` must be a live evolution handle; `buf` must hold enough doubles.
 */
enum QnStatus qn_evolution_bloch(const struct QnEvolution *e, double *buf);

/**
 * Copies the per-record standard error bound into `buf`
 * (`qn_evolution_len` doubles). Bloch components carry twice this value.
 *
 * # Safety
 * `e` must be a live evolution handle; `buf` must hold enough doubles.
 */
enum QnStatus qn_evolution_stderr(const struct QnEvolution *e, double *buf);

/**
 * Releases an evolution handle. Null is ignored.
 *
 * # Safety
 * `e` must be a handle from `qn_evolve_single_mc` that has not been freed.
 */
void qn_evolution_free(struct QnEvolution *e);

/**
 * Entanglement negativity of a two-qubit density matrix given as 16
 * row-major real and imaginary parts.
 *
 * # Safety
 * `rho_re` and `rho_im` must hold 16 doubles; `out` must be valid.
 */
enum QnStatus qn_negativity(const double *rho_re, const double *rho_im, double *out);

/**
 * Quantum discord of the Bell-diagonal state with correlation
 * coordinates `(c1, c2, c3)`, in bits.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum QnStatus qn_discord_bell_diagonal(double c1, double c2, double c3, double *out);

/**
 * Trace-distance memory measure with the default search settings.
 * `converged` reports whether the integration horizon captured the tail.
 *
 * # Safety
 * `m` must be a live model handle; `value` and `converged` must be valid.
 */
enum QnStatus qn_blp_measure(const struct QnModel *m, double *value, bool *converged);

/**
 * Entanglement-revival memory measure on the default grid.
 *
 * # Safety
 * `m` must be a live model handle; `value` and `converged` must be valid.
 */
enum QnStatus qn_rhp_measure(const struct QnModel *m, double *value, bool *converged);

/**
 * Static description of a status code.
 *
 * # Safety
 * Always safe; the returned string is static and must not be freed.
 */
const char *qn_status_message(enum QnStatus status);

/**
 * Library version as a static string.
 *
 * # Safety
 * Always safe; the returned string is static and must not be freed.
 */
const char *qn_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus
