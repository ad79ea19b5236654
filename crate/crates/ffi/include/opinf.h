#ifndef OPINF_H
#define OPINF_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

// Result code of every fallible call.
typedef enum OpinfStatus {
  OPINF_STATUS_OK = 0,
  OPINF_STATUS_NULL_POINTER = 1,
  OPINF_STATUS_INVALID_ARGUMENT = 2,
  OPINF_STATUS_DIMENSION = 3,
  OPINF_STATUS_NUMERICAL = 4,
  OPINF_STATUS_IO = 5,
  OPINF_STATUS_PARSE = 6,
  OPINF_STATUS_PANIC = 7,
} OpinfStatus;

// Selects an operator of a reduced model.
typedef enum OpinfOperator {
  // Linear term, `r x r`.
  OPINF_OPERATOR_A = 0,
  // Quadratic term on the compact `x_i x_j (i <= j)` features, `r x r(r+1)/2`.
  OPINF_OPERATOR_H = 1,
  // Input term, `r x m`.
  OPINF_OPERATOR_B = 2,
  // Constant term, `r x 1`.
  OPINF_OPERATOR_C = 3,
  // Coefficient of the constraint-input derivative, `r x 1`.
  OPINF_OPERATOR_K = 4,
} OpinfOperator;

// Opaque full-order model.
typedef struct OpinfModel OpinfModel;

// Opaque reduced velocity model.
typedef struct OpinfRom OpinfRom;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Description of why the most recent call on this thread failed; empty
// after a successful call.
// The pointer stays valid until the next call into this library on the same thread.
const char *opinf_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *opinf_version(void);

// Generates the deterministic synthetic model for `seed`.
// `inhomogeneous != 0` adds a constraint input.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum OpinfStatus opinf_model_random(uint64_t seed,
                                    size_t nv,
                                    size_t np,
                                    size_t m,
                                    int32_t inhomogeneous,
                                    struct OpinfModel **out);

// Loads a model manifest written by [`opinf_model_save`] or the `opinf` tool.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum OpinfStatus opinf_model_load(const char *path, struct OpinfModel **out);

// # Safety
// `model` must be a live handle and `path` a NUL-terminated string.
enum OpinfStatus opinf_model_save(const struct OpinfModel *model, const char *path);

// Releases a model handle; null is ignored.
//
// # Safety
// `model` must be null or a handle not yet freed.
void opinf_model_free(struct OpinfModel *model);

// Writes the velocity, pressure and input dimensions. Any output pointer may be null.
//
// # Safety
// `model` must be a live handle; non-null outputs must be writable.
enum OpinfStatus opinf_model_dims(const struct OpinfModel *model,
                                  size_t *nv,
                                  size_t *np,
                                  size_t *m);

// Simulates the model from zero velocity on `[0, t_end]` with `steps`
// semi-implicit Euler steps. `inputs` names one signal per input channel and
// `uperp` the constraint input (null when the model has none).
// `v_out` receives `nv x (steps+1)` values; `p_out` may be null or receive `np x (steps+1)`.
//
// # Safety
// Pointers must be null or valid for the stated lengths.
enum OpinfStatus opinf_model_simulate(const struct OpinfModel *model,
                                      double t_end,
                                      size_t steps,
                                      const char *inputs,
                                      const char *uperp,
                                      double *v_out,
                                      size_t v_len,
                                      double *p_out,
                                      size_t p_len);

// Applies the discrete Leray projector to `cols` column-major vectors of length `nv`.
//
// # Safety
// `x` and `y` must each hold `nv * cols` values; they may alias.
enum OpinfStatus opinf_leray_apply(const struct OpinfModel *model,
                                   const double *x,
                                   size_t cols,
                                   double *y);

// Learns a reduced model `x' = A x + H (x (x) x) + B u` from reduced states
// `xhat` (`r x k`), their time derivatives `xdot` (`r x k`) and inputs `u`
// (`m x k`, may be null when `m = 0`). `quadratic = 0` drops the quadratic
// block. `tol` is the absolute singular-value threshold of the least-squares solve.
//
// # Safety
// Buffers must hold the stated number of values; `out` must be writable.
enum OpinfStatus opinf_infer(const double *xhat,
                             const double *xdot,
                             size_t r,
                             size_t k,
                             const double *u,
                             size_t m,
                             int32_t quadratic,
                             double tol,
                             struct OpinfRom **out);

// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum OpinfStatus opinf_rom_load(const char *path, struct OpinfRom **out);

// # Safety
// `rom` must be a live handle and `path` a NUL-terminated string.
enum OpinfStatus opinf_rom_save(const struct OpinfRom *rom, const char *path);

// Releases a reduced-model handle; null is ignored.
//
// # Safety
// `rom` must be null or a handle not yet freed.
void opinf_rom_free(struct OpinfRom *rom);

// Writes the order and input dimension. Either output may be null.
//
// # Safety
// `rom` must be a live handle; non-null outputs must be writable.
enum OpinfStatus opinf_rom_dims(const struct OpinfRom *rom, size_t *r, size_t *m);

// Reports the shape of an operator and, when `buf` is non-null, copies it
// column-major into `buf` (which must hold exactly `rows * cols` values).
// An absent operator has shape `0 x 0`.
//
// # Safety
// `rom` must be a live handle; `rows`, `cols` and `buf` must be null or valid.
enum OpinfStatus opinf_rom_operator(const struct OpinfRom *rom,
                                    enum OpinfOperator which,
                                    double *buf,
                                    size_t len,
                                    size_t *rows,
                                    size_t *cols);

// Integrates the reduced model with classical RK4 on `[0, t_end]` from
// `x0`, driven by the named `inputs` (see [`opinf_model_simulate`]).
// `out` receives `r x (steps+1)` values.
//
// # Safety
// `x0` must hold `r` values and `out` `out_len` values.
enum OpinfStatus opinf_rom_simulate(const struct OpinfRom *rom,
                                    const double *x0,
                                    double t_end,
                                    size_t steps,
                                    const char *inputs,
                                    double *out,
                                    size_t out_len);

// Compact quadratic features `x_i x_j (i <= j)` of one state vector of length `r`;
// `out` must hold `r(r+1)/2` values.
//
// # Safety
// `x` and `out` must be valid for the stated lengths.
enum OpinfStatus opinf_quadratic_features(const double *x, size_t r, double *out, size_t out_len);

// Relative time-domain L2 error between two `rows x cols` trajectories with
// trapezoidal weights.
//
// # Safety
// `reference` and `candidate` must hold `rows * cols` values; `out` must be writable.
enum OpinfStatus opinf_error_l2(const double *reference,
                                const double *candidate,
                                size_t rows,
                                size_t cols,
                                double dt,
                                double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OPINF_H */
