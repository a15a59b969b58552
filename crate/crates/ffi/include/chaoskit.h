#ifndef CHAOSKIT_H
#define CHAOSKIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CkStatus {
  CK_STATUS_OK = 0,
  CK_STATUS_NULL_POINTER = 1,
  CK_STATUS_INVALID_ARGUMENT = 2,
  CK_STATUS_INVALID_UTF8 = 3,
  /**
   * Input rejected by the library; see the last error message.
   */
  CK_STATUS_LIBRARY = 4,
  CK_STATUS_TOO_LARGE = 5,
  CK_STATUS_PANIC = 6,
} CkStatus;

typedef enum CkTarget {
  CK_TARGET_NORMAL = 0,
  /**
   * Centered Gamma with parameter `nu`.
   */
  CK_TARGET_CENTERED_GAMMA = 1,
} CkTarget;

/**
 * Opaque chaos functional bound to the space it was built on.
 */
typedef struct CkFunctional CkFunctional;

/**
 * Opaque cell space.
 */
typedef struct CkSpace CkSpace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *ck_version(void);

/**
 * Copy of the last error message on this thread, or NULL if the last call
 * succeeded. Free with [`ck_string_free`].
 */
char *ck_last_error_message(void);

/**
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void ck_string_free(char *s);

/**
 * # Safety
 * `masses` must point to `n_cells` readable doubles; `out` must be writable.
 */
enum CkStatus ck_space_new(const double *masses, size_t n_cells, struct CkSpace **out);

/**
 * # Safety
 * `space` must be NULL or a live handle from [`ck_space_new`].
 */
void ck_space_free(struct CkSpace *space);

/**
 * Number of cells, or 0 for a NULL handle.
 *
 * # Safety
 * `space` must be NULL or a live handle.
 */
size_t ck_space_n_cells(const struct CkSpace *space);

/**
 * Draw one Poisson configuration into `counts_out[0..len]`.
 *
 * # Safety
 * `space` must be live; `counts_out` must hold `len` writable u32.
 */
enum CkStatus ck_sample_poisson(const struct CkSpace *space,
                                uint64_t seed,
                                uint32_t *counts_out,
                                size_t len);

/**
 * Parse `{"constant": c, "kernels": {"p": {...}}}` on `space`.
 *
 * # Safety
 * `space` must be live, `json` NUL-terminated, `out` writable.
 */
enum CkStatus ck_functional_from_json(const struct CkSpace *space,
                                      const char *json,
                                      struct CkFunctional **out);

/**
 * # Safety
 * `f` must be NULL or a live handle from [`ck_functional_from_json`].
 */
void ck_functional_free(struct CkFunctional *f);

/**
 * F(χ) for the configuration `counts[0..len]`.
 *
 * # Safety
 * `f` live, `counts` readable for `len`, `out` writable.
 */
enum CkStatus ck_functional_evaluate(const struct CkFunctional *f,
                                     const uint32_t *counts,
                                     size_t len,
                                     double *out);

/**
 * D⁺_cell F(χ).
 *
 * # Safety
 * As for [`ck_functional_evaluate`].
 */
enum CkStatus ck_add_one_cost(const struct CkFunctional *f,
                              const uint32_t *counts,
                              size_t len,
                              size_t cell,
                              double *out);

/**
 * D⁻_cell F(χ); zero when the cell is empty.
 *
 * # Safety
 * As for [`ck_functional_evaluate`].
 */
enum CkStatus ck_remove_one_cost(const struct CkFunctional *f,
                                 const uint32_t *counts,
                                 size_t len,
                                 size_t cell,
                                 double *out);

/**
 * Pathwise LF(χ).
 *
 * # Safety
 * As for [`ck_functional_evaluate`].
 */
enum CkStatus ck_apply_l(const struct CkFunctional *f,
                         const uint32_t *counts,
                         size_t len,
                         double *out);

/**
 * Γ₀(F, G)(χ). Both functionals must live on equal spaces.
 *
 * # Safety
 * `f`, `g` live; `counts` readable for `len`; `out` writable.
 */
enum CkStatus ck_gamma0(const struct CkFunctional *f,
                        const struct CkFunctional *g,
                        const uint32_t *counts,
                        size_t len,
                        double *out);

/**
 * E[F^k] by exact polynomial expectation.
 *
 * # Safety
 * `f` live, `out` writable.
 */
enum CkStatus ck_exact_moment(const struct CkFunctional *f, uint32_t k, double *out);

/**
 * W₁ between the empirical law of `values[0..n]` and the target.
 * `nu` is ignored for the normal target.
 *
 * # Safety
 * `values` readable for `n`, `out` writable.
 */
enum CkStatus ck_w1_distance(const double *values,
                             size_t n,
                             enum CkTarget target,
                             double nu,
                             double *out);

/**
 * Kolmogorov distance between the empirical law and the target.
 *
 * # Safety
 * As for [`ck_w1_distance`].
 */
enum CkStatus ck_ks_distance(const double *values,
                             size_t n,
                             enum CkTarget target,
                             double nu,
                             double *out);

/**
 * Order-dependent Wasserstein fourth-moment bound. `noise` may be NULL.
 *
 * # Safety
 * `out` writable; `noise` NULL or writable.
 */
enum CkStatus ck_fm_w1_rhs(size_t q, double m4, double *out, bool *noise);

/**
 * (√(2/π) + 2)·√(m4 − 3).
 *
 * # Safety
 * As for [`ck_fm_w1_rhs`].
 */
enum CkStatus ck_fm_w1_rhs_simple(double m4, double *out, bool *noise);

/**
 * Kolmogorov fourth-moment bound.
 *
 * # Safety
 * As for [`ck_fm_w1_rhs`].
 */
enum CkStatus ck_fm_kol_rhs(double m4, double *out, bool *noise);

/**
 * Centered Gamma fourth-moment bound.
 *
 * # Safety
 * As for [`ck_fm_w1_rhs`].
 */
enum CkStatus ck_fm_gamma_rhs(double nu,
                              size_t q,
                              double m3,
                              double m4,
                              double d4term,
                              double *out,
                              bool *noise);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CHAOSKIT_H */
