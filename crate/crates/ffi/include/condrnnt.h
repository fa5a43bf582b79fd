#ifndef CONDRNNT_H
#define CONDRNNT_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes shared by every entry point.
 */
typedef enum CondrnntStatus {
  CONDRNNT_STATUS_OK = 0,
  CONDRNNT_STATUS_NULL_POINTER = 1,
  CONDRNNT_STATUS_INVALID_ARGUMENT = 2,
  CONDRNNT_STATUS_IO = 3,
  CONDRNNT_STATUS_CHECKPOINT = 4,
  CONDRNNT_STATUS_INFEASIBLE = 5,
  CONDRNNT_STATUS_BUFFER_TOO_SMALL = 6,
  CONDRNNT_STATUS_INTERNAL = 7,
} CondrnntStatus;

/**
 * Opaque handle to a loaded model.
 */
typedef struct CondrnntModel CondrnntModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Text of the most recent error on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *condrnnt_last_error_message(void);

/**
 * Loads a model directory written by `condrnnt pretrain` or `finetune`.
 *
 * # Safety
 * `dir` must be a NUL-terminated string and `out` a writable pointer.
 */
enum CondrnntStatus condrnnt_model_load(const char *dir, struct CondrnntModel **out);

/**
 * Releases a handle from `condrnnt_model_load`; null is ignored.
 *
 * # Safety
 * `model` must come from `condrnnt_model_load` and not be used afterwards.
 */
void condrnnt_model_free(struct CondrnntModel *model);

/**
 * Feature dimension the model expects.
 *
 * # Safety
 * `model` must be a live handle or null (which yields 0).
 */
size_t condrnnt_model_input_dim(const struct CondrnntModel *model);

/**
 * Number of output classes including blank (id 0).
 *
 * # Safety
 * `model` must be a live handle or null (which yields 0).
 */
size_t condrnnt_model_output_dim(const struct CondrnntModel *model);

/**
 * Beam-search decodes a row-major `frames x dim` feature matrix.
 *
 * Writes at most `capacity` label ids to `labels_out` and the hypothesis
 * length to `len_out`. When the buffer is too small nothing is written to
 * `labels_out`, the buffer-too-small status is returned and `len_out` holds
 * the required length.
 *
 * # Safety
 * Pointers must be valid for the given sizes; `score_out` may be null.
 */
enum CondrnntStatus condrnnt_decode(const struct CondrnntModel *model,
                                    const double *features,
                                    size_t frames,
                                    size_t dim,
                                    size_t beam,
                                    uint32_t *labels_out,
                                    size_t capacity,
                                    size_t *len_out,
                                    double *score_out);

/**
 * Negative log-likelihood of `labels` under row-major `frames x classes`
 * CTC log-posteriors (blank is class 0). When `grad_out` is non-null it
 * receives the gradient with respect to every log-posterior.
 *
 * # Safety
 * Pointers must be valid for the given sizes.
 */
enum CondrnntStatus condrnnt_ctc_loss(const double *logp,
                                      size_t frames,
                                      size_t classes,
                                      const uint32_t *labels,
                                      size_t num_labels,
                                      double *loss_out,
                                      double *grad_out);

/**
 * Negative log-likelihood of `labels` under a row-major
 * `frames x (num_labels + 1) x classes` transducer lattice.
 *
 * # Safety
 * Pointers must be valid for the given sizes.
 */
enum CondrnntStatus condrnnt_rnnt_loss(const double *logp,
                                       size_t frames,
                                       size_t classes,
                                       const uint32_t *labels,
                                       size_t num_labels,
                                       double *loss_out,
                                       double *grad_out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* CONDRNNT_H */
