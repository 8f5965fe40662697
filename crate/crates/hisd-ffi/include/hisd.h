#ifndef HISD_H
#define HISD_H

/* Generated by cbindgen from the hisd-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status code of every fallible call.
typedef enum HisdStatus {
  HISD_OK = 0,
  // A required pointer argument was null.
  HISD_NULL_POINTER = 1,
  // Dimensions, indices or configuration values are invalid.
  HISD_INVALID_ARGUMENT = 2,
  // A direction degenerated during orthonormalization or retraction.
  HISD_DEGENERATE = 3,
  // The iteration diverged.
  HISD_DIVERGED = 4,
  // A model evaluation failed.
  HISD_EVALUATION_FAILED = 5,
  // Unexpected internal failure.
  HISD_INTERNAL_ERROR = 6,
} HisdStatus;

// Scheme selector of [`HisdRunConfig`].
typedef enum HisdScheme {
  HISD_UNCONSTRAINED_GS = 0,
  HISD_UNCONSTRAINED_LM = 1,
  HISD_CONSTRAINED_SPHERE = 2,
} HisdScheme;

// Frame retraction selector of [`HisdRunConfig`].
typedef enum HisdRetraction {
  HISD_GRAM_SCHMIDT = 0,
  HISD_SVD_PROJECTION = 1,
} HisdRetraction;

// Opaque energy-model handle.
typedef struct HisdModel HisdModel;

// Opaque trajectory handle.
typedef struct HisdTrajectory HisdTrajectory;

// Run parameters. `dimer_half_length <= 0` selects the analytic
// negative-Hessian action; a positive value selects the dimer
// approximation with that half-length. `gs_tol <= 0` selects the default
// degeneracy tolerance.
typedef struct HisdRunConfig {
  enum HisdScheme scheme;
  double tau;
  double beta;
  double gamma;
  size_t index_k;
  double horizon;
  enum HisdRetraction retraction;
  double dimer_half_length;
  double gs_tol;
} HisdRunConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Creates the built-in two-dimensional double-well benchmark model.
// Returns null only on allocation failure.
struct HisdModel *hisd_model_double_well_new(void);

// Creates a quadratic energy `E(x) = 1/2 x^T A x` from a row-major
// `dim * dim` matrix, symmetrized as `(A + A^T) / 2`. Returns null when
// `matrix` is null or `dim` is zero.
//
// # Safety
// `matrix` must point to at least `dim * dim` readable doubles.
struct HisdModel *hisd_model_quadratic_new(size_t dim, const double *matrix);

// Releases a model handle. Null is ignored.
//
// # Safety
// `model` must be a handle returned by a `hisd_model_*_new` function that
// has not been freed yet.
void hisd_model_free(struct HisdModel *model);

// Dimension d of the model, or 0 for a null handle.
//
// # Safety
// `model` must be a live model handle or null.
size_t hisd_model_dim(const struct HisdModel *model);

// Evaluates the energy at `x` (length `dim`).
//
// # Safety
// `x` must point to `dim` readable doubles and `out` to one writable double.
enum HisdStatus hisd_model_energy(const struct HisdModel *model,
                                  const double *x,
                                  size_t dim,
                                  double *out);

// Evaluates the negative gradient `F(x) = -grad E(x)` into `out`
// (length `dim`).
//
// # Safety
// `x` and `out` must point to `dim` readable / writable doubles.
enum HisdStatus hisd_model_neg_gradient(const struct HisdModel *model,
                                        const double *x,
                                        size_t dim,
                                        double *out);

// Evaluates the negative-Hessian action `J(x) v` into `out` (length `dim`).
//
// # Safety
// `x`, `v` and `out` must point to `dim` readable / writable doubles.
enum HisdStatus hisd_model_neg_hessian_apply(const struct HisdModel *model,
                                             const double *x,
                                             const double *v,
                                             size_t dim,
                                             double *out);

// Runs the selected scheme from `x0` (length `dim`) and the `index_k`
// initial directions in `v0` (row-major, `index_k * dim`). On success
// writes a trajectory handle into `out`; the caller frees it with
// `hisd_trajectory_free`.
//
// # Safety
// `x0` must point to `dim` doubles, `v0` to `index_k * dim` doubles, and
// `out` to a writable pointer slot. `model` and `config` must be live.
enum HisdStatus hisd_run(const struct HisdModel *model,
                         const struct HisdRunConfig *config,
                         const double *x0,
                         const double *v0,
                         struct HisdTrajectory **out);

// Releases a trajectory handle. Null is ignored.
//
// # Safety
// `traj` must be a handle returned by `hisd_run` that has not been freed.
void hisd_trajectory_free(struct HisdTrajectory *traj);

// Number of recorded states (steps + 1), or 0 for a null handle.
//
// # Safety
// `traj` must be a live trajectory handle or null.
size_t hisd_trajectory_len(const struct HisdTrajectory *traj);

// State dimension d of a trajectory, or 0 for a null handle.
//
// # Safety
// `traj` must be a live trajectory handle or null.
size_t hisd_trajectory_dim(const struct HisdTrajectory *traj);

// Number of directions k of a trajectory, or 0 for a null handle.
//
// # Safety
// `traj` must be a live trajectory handle or null.
size_t hisd_trajectory_index_k(const struct HisdTrajectory *traj);

// Copies state `n` out of the trajectory: the time into `time_out`, the
// state into `x_out` (length `dim`) and the directions into `v_out`
// (row-major, `index_k * dim`). Each output pointer may be null to skip
// that field.
//
// # Safety
// Non-null output pointers must provide the buffer sizes stated above.
enum HisdStatus hisd_trajectory_state(const struct HisdTrajectory *traj,
                                      size_t n,
                                      double *time_out,
                                      double *x_out,
                                      double *v_out);

// Static description of a status code.
const char *hisd_status_message(enum HisdStatus status);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HISD_H */
