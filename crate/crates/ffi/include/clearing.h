#ifndef CLEARING_H
#define CLEARING_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result codes.
 */
typedef enum ClearingStatus {
  CLEARING_STATUS_OK = 0,
  CLEARING_STATUS_NULL_POINTER = 1,
  CLEARING_STATUS_INVALID_ARGUMENT = 2,
  CLEARING_STATUS_PARSE = 3,
  CLEARING_STATUS_IO = 4,
  CLEARING_STATUS_ASSUMPTION = 5,
  CLEARING_STATUS_UNSUPPORTED = 6,
  CLEARING_STATUS_SOLVER = 7,
  CLEARING_STATUS_PANIC = 8,
} ClearingStatus;

/*
 A validated model together with its common-noise lattice.
 */
typedef struct ClearingModel ClearingModel;

/*
 Price and major flow of a solved equilibrium on every lattice node.
 */
typedef struct ClearingSolution ClearingSolution;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Parse a model from TOML or JSON text.

 # Safety
 `text` must be a NUL-terminated string and `out` a valid pointer. On
 success `*out` holds a handle to release with [`clearing_model_free`].
 */
enum ClearingStatus clearing_model_from_str(const char *text, struct ClearingModel **out);

/*
 Load a model file (`.toml` or `.json`).

 # Safety
 As for [`clearing_model_from_str`], with `path` a NUL-terminated path.
 */
enum ClearingStatus clearing_model_from_file(const char *path, struct ClearingModel **out);

/*
 Release a model. Null is ignored.

 # Safety
 `model` must come from this library and not be used afterwards.
 */
void clearing_model_free(struct ClearingModel *model);

/*
 Number of securities, minor agents and lattice nodes.

 # Safety
 `model` must be a live handle; the out pointers must be valid.
 */
enum ClearingStatus clearing_model_dims(const struct ClearingModel *model,
                                        uintptr_t *n,
                                        uintptr_t *agents,
                                        uintptr_t *nodes);

/*
 Solve the finite-N equilibrium with idiosyncratic atoms drawn from `seed`.

 # Safety
 `model` must be a live handle and `out` a valid pointer. Release the
 result with [`clearing_solution_free`].
 */
enum ClearingStatus clearing_solve_n(const struct ClearingModel *model,
                                     uint64_t seed,
                                     struct ClearingSolution **out);

/*
 Solve the mean-field equilibrium. The residual reported is zero.

 # Safety
 As for [`clearing_solve_n`].
 */
enum ClearingStatus clearing_solve_mfg(const struct ClearingModel *model,
                                       struct ClearingSolution **out);

/*
 Release a solution. Null is ignored.

 # Safety
 `solution` must come from this library and not be used afterwards.
 */
void clearing_solution_free(struct ClearingSolution *solution);

/*
 Copy the price vector at `node` into `out` (capacity `len`, at least n).

 # Safety
 `solution` must be a live handle and `out` must hold `len` doubles.
 */
enum ClearingStatus clearing_solution_price(const struct ClearingSolution *solution,
                                            uintptr_t node,
                                            double *out,
                                            uintptr_t len);

/*
 Copy the major flow β̂ at `node` into `out`.

 # Safety
 As for [`clearing_solution_price`].
 */
enum ClearingStatus clearing_solution_beta(const struct ClearingSolution *solution,
                                           uintptr_t node,
                                           double *out,
                                           uintptr_t len);

/*
 Largest node-wise clearing residual `|Σα̂ⁱ + β̂|`.

 # Safety
 `solution` must be a live handle and `out` a valid pointer.
 */
enum ClearingStatus clearing_solution_residual(const struct ClearingSolution *solution,
                                               double *out);

/*
 Length in bytes of the last error message on this thread, without the
 terminating NUL; 0 if there is none.
 */
uintptr_t clearing_last_error_length(void);

/*
 Copy the last error message on this thread into `buf` (capacity `len`),
 truncating and always NUL-terminating. Returns the full message length.

 # Safety
 `buf` must be null or point to `len` writable bytes.
 */
uintptr_t clearing_last_error_message(char *buf, uintptr_t len);

/*
 Library version as a static NUL-terminated string.
 */
const char *clearing_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CLEARING_H */
