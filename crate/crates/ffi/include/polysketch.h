#ifndef POLYSKETCH_H
#define POLYSKETCH_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum PskStatus {
  PSK_STATUS_OK = 0,
  PSK_STATUS_NULL_POINTER = 1,
  PSK_STATUS_INVALID_ARGUMENT = 2,
  PSK_STATUS_SHAPE_MISMATCH = 3,
  PSK_STATUS_NON_FINITE = 4,
  PSK_STATUS_PRECONDITION = 5,
  PSK_STATUS_CAP_EXCEEDED = 6,
  PSK_STATUS_FORMAT = 7,
  PSK_STATUS_IO = 8,
  PSK_STATUS_PANIC = 9,
} PskStatus;

// Learnable sketch parameters.
typedef struct PskLearnable PskLearnable;

// Dense `f64` matrix.
typedef struct PskMatrix PskMatrix;

// Sampled Gaussian sketch tree.
typedef struct PskSketchTree PskSketchTree;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer is
// valid until the next failing call on the same thread.
const char *psk_last_error_message(void);

// Static description of a status code.
const char *psk_status_string(enum PskStatus status);

// Library version as a static string.
const char *psk_version(void);

// Copies `rows * cols` row-major values into a new matrix.
//
// # Safety
// `data` must point to `rows * cols` readable doubles (may be null when
// empty); `out` must be writable.
enum PskStatus psk_matrix_new(size_t rows, size_t cols, const double *data, struct PskMatrix **out);

// # Safety
// `out` must be writable.
enum PskStatus psk_matrix_zeros(size_t rows, size_t cols, struct PskMatrix **out);

// # Safety
// `m` must be null or a handle from this library, not yet freed.
void psk_matrix_free(struct PskMatrix *m);

// Number of rows, or 0 for a null handle.
//
// # Safety
// `m` must be null or a live handle.
size_t psk_matrix_rows(const struct PskMatrix *m);

// Number of columns, or 0 for a null handle.
//
// # Safety
// `m` must be null or a live handle.
size_t psk_matrix_cols(const struct PskMatrix *m);

// Copies the row-major values into `buf`, which must hold exactly
// `rows * cols` doubles.
//
// # Safety
// `buf` must point to `len` writable doubles.
enum PskStatus psk_matrix_copy_data(const struct PskMatrix *m, double *buf, size_t len);

// Reads a PSKM file; single-precision files are widened to `f64`.
//
// # Safety
// `path` must be a nul-terminated string; `out` must be writable.
enum PskStatus psk_matrix_read_pskm(const char *path, struct PskMatrix **out);

// Writes a PSKM file. `dtype` is 0 for `f32` storage, 1 for `f64`.
//
// # Safety
// `m` must be a live handle; `path` a nul-terminated string.
enum PskStatus psk_matrix_write_pskm(const struct PskMatrix *m, const char *path, uint8_t dtype);

// Samples the Gaussian sketch for the degree-`p` non-negative map.
//
// # Safety
// `out` must be writable.
enum PskStatus psk_sketch_sample(size_t h,
                                 size_t r,
                                 uint32_t p,
                                 uint64_t seed,
                                 struct PskSketchTree **out);

// # Safety
// `t` must be null or a live handle.
void psk_sketch_free(struct PskSketchTree *t);

// Width of the non-negative features, or 0 for a null handle.
//
// # Safety
// `t` must be null or a live handle.
size_t psk_sketch_feature_dim(const struct PskSketchTree *t);

// # Safety
// Handles must be live; `out` writable.
enum PskStatus psk_sketch_apply_with_negativity(const struct PskSketchTree *t,
                                                const struct PskMatrix *a,
                                                struct PskMatrix **out);

// # Safety
// Handles must be live; `out` writable.
enum PskStatus psk_sketch_apply_non_negative(const struct PskSketchTree *t,
                                             const struct PskMatrix *a,
                                             struct PskMatrix **out);

// Relative AMM error of the tree's feature map on `q`, `k`.
//
// # Safety
// Handles must be live; `out` writable.
enum PskStatus psk_amm_relative_error(const struct PskMatrix *q,
                                      const struct PskMatrix *k,
                                      const struct PskSketchTree *t,
                                      uint32_t p,
                                      double *out);

// Randomly initialized learnable sketch (`p` in {4, 8, 16}).
//
// # Safety
// `out` must be writable.
enum PskStatus psk_learnable_init(size_t h,
                                  size_t r,
                                  uint32_t p,
                                  uint64_t seed,
                                  struct PskLearnable **out);

// # Safety
// `path` must be a nul-terminated string; `out` writable.
enum PskStatus psk_learnable_load(const char *path, struct PskLearnable **out);

// # Safety
// `params` must be live; `path` a nul-terminated string.
enum PskStatus psk_learnable_save(const struct PskLearnable *params, const char *path);

// # Safety
// `params` must be null or a live handle.
void psk_learnable_free(struct PskLearnable *params);

// # Safety
// Handles must be live; `out` writable.
enum PskStatus psk_learnable_apply_with_negativity(const struct PskLearnable *params,
                                                   const struct PskMatrix *a,
                                                   struct PskMatrix **out);

// Exact degree-`p` polynomial attention with the `1 +` denominator.
//
// # Safety
// Handles must be live; `out` writable.
enum PskStatus psk_exact_poly_attention(const struct PskMatrix *q,
                                        const struct PskMatrix *k,
                                        const struct PskMatrix *v,
                                        uint32_t p,
                                        struct PskMatrix **out);

// Non-causal sketched attention in linear time.
//
// # Safety
// Handles must be live; `out` writable.
enum PskStatus psk_polysketch_attention(const struct PskMatrix *q,
                                        const struct PskMatrix *k,
                                        const struct PskMatrix *v,
                                        const struct PskSketchTree *t,
                                        struct PskMatrix **out);

// `lt(A·Bᵀ)·C` with block size `block`.
//
// # Safety
// Handles must be live; `out` writable.
enum PskStatus psk_lt_multiply_blocked(const struct PskMatrix *a,
                                       const struct PskMatrix *b,
                                       const struct PskMatrix *c,
                                       size_t block,
                                       struct PskMatrix **out);

// # Safety
// Handles must be live; `out` writable.
enum PskStatus psk_causal_exact_poly_attention(const struct PskMatrix *q,
                                               const struct PskMatrix *k,
                                               const struct PskMatrix *v,
                                               uint32_t p,
                                               struct PskMatrix **out);

// Linear-time causal sketched attention with a Gaussian sketch.
//
// # Safety
// Handles must be live; `out` writable.
enum PskStatus psk_causal_polysketch_attention(const struct PskMatrix *q,
                                               const struct PskMatrix *k,
                                               const struct PskMatrix *v,
                                               const struct PskSketchTree *t,
                                               size_t block,
                                               bool local_exact,
                                               struct PskMatrix **out);

// Linear-time causal sketched attention with learnable features.
//
// # Safety
// Handles must be live; `out` writable.
enum PskStatus psk_causal_learnable_attention(const struct PskMatrix *q,
                                              const struct PskMatrix *k,
                                              const struct PskMatrix *v,
                                              const struct PskLearnable *params,
                                              size_t block,
                                              bool local_exact,
                                              struct PskMatrix **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POLYSKETCH_H */
