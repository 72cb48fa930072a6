#ifndef CONTACT_THERMO_H
#define CONTACT_THERMO_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum CtStatus {
  CT_STATUS_OK = 0,
  CT_STATUS_NULL_POINTER = 1,
  CT_STATUS_INVALID_ARGUMENT = 2,
  CT_STATUS_UNKNOWN_MODEL = 3,
  CT_STATUS_UNKNOWN_EXPRESSION = 4,
  CT_STATUS_DEGENERATE = 5,
  CT_STATUS_NOT_ATTAINABLE = 6,
  CT_STATUS_NUMERICAL = 7,
  CT_STATUS_BUFFER_TOO_SMALL = 8,
  CT_STATUS_PANIC = 99,
} CtStatus;

/**
 * A contact form on a [`CtModel`].
 */
typedef struct CtForm CtForm;

/**
 * A catalog contact manifold.
 */
typedef struct CtModel CtModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. The pointer
 * stays valid until the next call on the same thread.
 */
const char *ct_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ct_version(void);

/**
 * Creates a catalog model (`"torus3"` or `"torus_2n1"` with `n`).
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` writable.
 */
enum CtStatus ct_model_new(const char *name, size_t n, struct CtModel **out);

/**
 * # Safety
 * `model` must come from [`ct_model_new`] and not be used afterwards.
 */
void ct_model_free(struct CtModel *model);

/**
 * Manifold dimension `2n+1`, or 0 for NULL.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
size_t ct_model_dim(const struct CtModel *model);

/**
 * The catalog base form of `model`.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum CtStatus ct_form_base(const struct CtModel *model, struct CtForm **out);

/**
 * The base form multiplied by a positive function given as an expression
 * over the model's axis names, for example `"exp(0.3*cos2pix)"`.
 *
 * # Safety
 * `model` must be a live handle, `scale` NUL-terminated and `out` writable.
 */
enum CtStatus ct_form_scaled(const struct CtModel *model, const char *scale, struct CtForm **out);

/**
 * # Safety
 * `form` must come from a `ct_form_*` constructor and not be used afterwards.
 */
void ct_form_free(struct CtForm *form);

/**
 * Total volume of the form on a `resolution^d` grid.
 *
 * # Safety
 * `form` must be a live handle and `out` writable.
 */
enum CtStatus ct_form_mass(const struct CtForm *form, size_t resolution, double *out);

/**
 * Volume density of the form at a point of length `dim`.
 *
 * # Safety
 * `x` must point to `len` doubles and `out` be writable.
 */
enum CtStatus ct_form_density(const struct CtForm *form, const double *x, size_t len, double *out);

/**
 * Reeb vector at `x`. Writes `dim` doubles to `out` (capacity `out_len`)
 * and the defining-equation residual to `residual` when it is non-NULL.
 *
 * # Safety
 * `x` must point to `len` doubles, `out` to `out_len` writable doubles.
 */
enum CtStatus ct_form_reeb(const struct CtForm *form,
                           const double *x,
                           size_t len,
                           double *out,
                           size_t out_len,
                           double *residual);

/**
 * Relative entropy of `form` with respect to `reference`.
 *
 * # Safety
 * Both handles must be live and `out` writable.
 */
enum CtStatus ct_relative_entropy(const struct CtForm *form,
                                  const struct CtForm *reference,
                                  size_t resolution,
                                  double *out);

/**
 * Maximum-entropy equilibrium relative to the volume-normalized `reference`.
 * `observables` is a comma-separated expression list with `k` entries and
 * `targets` holds `k` values. Writes the `k` multipliers to `p_out`, the
 * log-partition value to `w_out` and the entropy to `entropy_out`; the
 * scalar outputs may be NULL.
 *
 * # Safety
 * `targets` must point to `k` doubles and `p_out` to `k` writable doubles.
 */
enum CtStatus ct_maxent_solve(const struct CtForm *reference,
                              const char *observables,
                              const double *targets,
                              size_t k,
                              size_t resolution,
                              double *p_out,
                              double *w_out,
                              double *entropy_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONTACT_THERMO_H */
