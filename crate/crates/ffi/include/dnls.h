#ifndef DNLS_H
#define DNLS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Strang splitting for `dnls_integrate`.
 */
#define DNLS_SCHEME_STRANG 0

/**
 * Classical fourth-order Runge–Kutta for `dnls_integrate`.
 */
#define DNLS_SCHEME_RK4 1

/**
 * Result code of every fallible call.
 */
typedef enum DnlsStatus {
  DNLS_STATUS_OK = 0,
  DNLS_STATUS_NULL_POINTER = 1,
  DNLS_STATUS_INVALID_ARGUMENT = 2,
  DNLS_STATUS_BLOW_UP = 3,
  DNLS_STATUS_BUFFER_TOO_SMALL = 4,
  DNLS_STATUS_PANIC = 5,
} DnlsStatus;

/**
 * Complex field on a periodic box.
 */
typedef struct DnlsField DnlsField;

/**
 * Finite-range symmetric hopping kernel.
 */
typedef struct DnlsPotential DnlsPotential;

/**
 * Snapshots of one integration run.
 */
typedef struct DnlsTrajectory DnlsTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *dnls_version(void);

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len - 1` bytes) and returns its full length in bytes, or 0
 * when no call has failed yet.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
uintptr_t dnls_last_error(char *buf, uintptr_t len);

/**
 * Sup-norm Laplacian in `dim` dimensions: `1` at the origin and `-1/(2 dim)`
 * on each of the `3^dim - 1` neighbours.
 *
 * # Safety
 * `out` must be valid for a pointer write.
 */
enum DnlsStatus dnls_potential_laplacian(uintptr_t dim, struct DnlsPotential **out);

/**
 * Nearest-neighbour Laplacian: `1` at the origin, `-1/(2 dim)` on the `2 dim`
 * axis neighbours.
 *
 * # Safety
 * `out` must be valid for a pointer write.
 */
enum DnlsStatus dnls_potential_nearest_neighbor(uintptr_t dim, struct DnlsPotential **out);

/**
 * Kernel from dense coefficients over `[-range, range]^dim`, row-major. The
 * coefficients must be symmetric under `z -> -z`.
 *
 * # Safety
 * `coeffs` must point to `n` readable doubles; `out` must be valid for a
 * pointer write.
 */
enum DnlsStatus dnls_potential_new(uintptr_t dim,
                                   uintptr_t range,
                                   const double *coeffs,
                                   uintptr_t n,
                                   struct DnlsPotential **out);

/**
 * # Safety
 * `pot` must be a live handle; `out` must be valid for a write.
 */
enum DnlsStatus dnls_potential_range(const struct DnlsPotential *pot, uintptr_t *out);

/**
 * # Safety
 * `pot` must be null or a handle not yet freed.
 */
void dnls_potential_free(struct DnlsPotential *pot);

/**
 * Field on the box of half-width `half_width` from `n_values` interleaved
 * complex values.
 *
 * # Safety
 * `values` must point to `2 * n_values` readable doubles; `out` must be valid
 * for a pointer write.
 */
enum DnlsStatus dnls_field_new(uintptr_t dim,
                               uintptr_t half_width,
                               const double *values,
                               uintptr_t n_values,
                               struct DnlsField **out);

/**
 * # Safety
 * `out` must be valid for a pointer write.
 */
enum DnlsStatus dnls_field_zeros(uintptr_t dim, uintptr_t half_width, struct DnlsField **out);

/**
 * Field with i.i.d. complex Gaussian sites of variance `variance`.
 *
 * # Safety
 * `out` must be valid for a pointer write.
 */
enum DnlsStatus dnls_field_gaussian(uintptr_t dim,
                                    uintptr_t half_width,
                                    double variance,
                                    uint64_t seed,
                                    struct DnlsField **out);

/**
 * One state of a Metropolis chain for the grand-canonical measure
 * `exp(-beta (H - mu N))`, taken `burn_in + 1` sweeps after the zero field.
 *
 * # Safety
 * `pot` must be a live handle; `out` must be valid for a pointer write.
 */
enum DnlsStatus dnls_field_gibbs(const struct DnlsPotential *pot,
                                 uintptr_t half_width,
                                 double beta,
                                 double mu,
                                 double lambda,
                                 double proposal_sigma,
                                 uintptr_t burn_in,
                                 uint64_t seed,
                                 struct DnlsField **out);

/**
 * Number of sites.
 *
 * # Safety
 * `field` must be a live handle; `out` must be valid for a write.
 */
enum DnlsStatus dnls_field_volume(const struct DnlsField *field, uintptr_t *out);

/**
 * Copies the field into `out` as interleaved complex values. `n_values` is the
 * capacity in complex values and must be at least the volume.
 *
 * # Safety
 * `field` must be a live handle; `out` must point to `2 * n_values` writable
 * doubles.
 */
enum DnlsStatus dnls_field_copy_values(const struct DnlsField *field,
                                       double *out,
                                       uintptr_t n_values);

/**
 * # Safety
 * `field` must be null or a handle not yet freed.
 */
void dnls_field_free(struct DnlsField *field);

/**
 * `N = Σ |ψ(x)|²`.
 *
 * # Safety
 * `field` must be a live handle; `out` must be valid for a write.
 */
enum DnlsStatus dnls_particle_number(const struct DnlsField *field, double *out);

/**
 * `H = ⟨ψ, α*ψ⟩ + (λ/2) Σ |ψ(x)|⁴`.
 *
 * # Safety
 * `field` and `pot` must be live handles; `out` must be valid for a write.
 */
enum DnlsStatus dnls_hamiltonian(const struct DnlsField *field,
                                 const struct DnlsPotential *pot,
                                 double lambda,
                                 double *out);

/**
 * Localized density `Q_{ε,x}` at the site with coordinates `site[0..dim]`.
 *
 * # Safety
 * `field` must be a live handle; `site` must point to `dim` readable
 * integers; `out` must be valid for a write.
 */
enum DnlsStatus dnls_local_density(const struct DnlsField *field,
                                   double eps,
                                   const int64_t *site_coords,
                                   uintptr_t dim,
                                   double *out);

/**
 * Integrates from `field0` to `t_end` with step `dt`, keeping every
 * `stride`-th state. `scheme` is `DNLS_SCHEME_STRANG` or `DNLS_SCHEME_RK4`.
 * Returns `DNLS_STATUS_BLOW_UP` when the state stops being finite.
 *
 * # Safety
 * `field0` and `pot` must be live handles; `out` must be valid for a pointer
 * write.
 */
enum DnlsStatus dnls_integrate(const struct DnlsField *field0,
                               const struct DnlsPotential *pot,
                               uint32_t scheme,
                               double dt,
                               double t_end,
                               uintptr_t stride,
                               double lambda,
                               struct DnlsTrajectory **out);

/**
 * Number of snapshots, the initial state included.
 *
 * # Safety
 * `traj` must be a live handle; `out` must be valid for a write.
 */
enum DnlsStatus dnls_trajectory_len(const struct DnlsTrajectory *traj, uintptr_t *out);

/**
 * # Safety
 * `traj` must be a live handle; `out` must be valid for a write.
 */
enum DnlsStatus dnls_trajectory_time(const struct DnlsTrajectory *traj,
                                     uintptr_t index,
                                     double *out);

/**
 * Copy of snapshot `index` as a new field handle.
 *
 * # Safety
 * `traj` must be a live handle; `out` must be valid for a pointer write.
 */
enum DnlsStatus dnls_trajectory_snapshot(const struct DnlsTrajectory *traj,
                                         uintptr_t index,
                                         struct DnlsField **out);

/**
 * # Safety
 * `traj` must be null or a handle not yet freed.
 */
void dnls_trajectory_free(struct DnlsTrajectory *traj);

/**
 * Checks `Q_{ε,x}(ψ_t) ≤ e^{ε̃ t} Q_{ε,x}(ψ_0)` over the trajectory and
 * reports the largest ratio of the two sides.
 *
 * # Safety
 * `traj` and `pot` must be live handles; `site` must point to `dim` readable
 * integers; `max_ratio` and `pass` must be valid for writes.
 */
enum DnlsStatus dnls_growth_bound(const struct DnlsTrajectory *traj,
                                  const struct DnlsPotential *pot,
                                  double eps,
                                  const int64_t *site_coords,
                                  uintptr_t dim,
                                  double c_const,
                                  double *max_ratio,
                                  bool *pass);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DNLS_H */
