#ifndef REMIXMATCH_H
#define REMIXMATCH_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RmxStatus {
  RMX_STATUS_OK = 0,
  RMX_STATUS_NULL_POINTER = 1,
  RMX_STATUS_INVALID_ARGUMENT = 2,
  RMX_STATUS_CONFIG = 3,
  RMX_STATUS_IO = 4,
  RMX_STATUS_LOAD = 5,
  RMX_STATUS_CHECKPOINT = 6,
  RMX_STATUS_BUFFER_TOO_SMALL = 7,
  RMX_STATUS_PANIC = 8,
} RmxStatus;

typedef struct RmxAugmentation RmxAugmentation;

typedef struct RmxModel RmxModel;

typedef struct RmxPolicy RmxPolicy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the calling thread's last error message into `buf` as a
// NUL-terminated string, truncating if needed. Returns the full message
// length in bytes, excluding the terminator.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
uintptr_t rmx_last_error_message(char *buf, uintptr_t len);

// `out = Normalize(q^(1/temperature))` over `n` classes.
//
// # Safety
// `q` and `out` must point to `n` doubles.
enum RmxStatus rmx_sharpen(const double *q, uintptr_t n, double temperature, double *out);

// `out = Normalize(q * p_true / p_model)` over `n` classes.
//
// # Safety
// All pointers must point to `n` doubles.
enum RmxStatus rmx_align(const double *q,
                         const double *p_true,
                         const double *p_model,
                         uintptr_t n,
                         double *out);

// `KL(p || q)` in nats.
//
// # Safety
// `p` and `q` must point to `n` doubles; `out` to one.
enum RmxStatus rmx_kl(const double *p, const double *q, uintptr_t n, double *out);

// Agreement `1 - |prediction - label|_1 / (2n)`.
//
// # Safety
// `prediction` and `label` must point to `n` doubles; `out` to one.
enum RmxStatus rmx_match_score(const double *prediction,
                               const double *label,
                               uintptr_t n,
                               double *out);

// Creates a policy with every bin weight at 1.
//
// # Safety
// `out` must be a valid pointer to a handle slot.
enum RmxStatus rmx_policy_new(double rho,
                              double threshold,
                              uintptr_t depth,
                              struct RmxPolicy **out);

// # Safety
// `policy` must be null or a handle from [`rmx_policy_new`] not yet freed.
void rmx_policy_free(struct RmxPolicy *policy);

// Copies the bin weights of parameter `param` of transformation `kind`
// (an index into the fixed transformation list) into `out`, writing the
// bin count to `bins`.
//
// # Safety
// `policy` must be a live handle, `out` must point to `len` doubles and
// `bins` to one `size_t`.
enum RmxStatus rmx_policy_weights(const struct RmxPolicy *policy,
                                  uintptr_t kind,
                                  uintptr_t param,
                                  double *out,
                                  uintptr_t len,
                                  uintptr_t *bins);

// Samples an augmentation: thresholded weights when `for_update` is 0,
// uniform bins otherwise.
//
// # Safety
// `policy` must be a live handle and `out` a valid handle slot.
enum RmxStatus rmx_policy_sample(const struct RmxPolicy *policy,
                                 uint64_t seed,
                                 int32_t for_update,
                                 struct RmxAugmentation **out);

// Moves the weights of the bins used by `aug` toward `omega`.
//
// # Safety
// Both handles must be live.
enum RmxStatus rmx_policy_update(struct RmxPolicy *policy,
                                 const struct RmxAugmentation *aug,
                                 double omega);

// Applies `aug` to a row-major, channel-last float image in `[0, 1]`.
//
// # Safety
// `aug` must be live; `pixels` and `out` must point to
// `height * width * channels` floats.
enum RmxStatus rmx_augmentation_apply(const struct RmxAugmentation *aug,
                                      const float *pixels,
                                      uintptr_t height,
                                      uintptr_t width,
                                      uintptr_t channels,
                                      uint64_t seed,
                                      float *out);

// # Safety
// `aug` must be null or a live handle.
void rmx_augmentation_free(struct RmxAugmentation *aug);

// Loads a training checkpoint for inference with its EMA weights.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid handle slot.
enum RmxStatus rmx_model_load(const char *path, struct RmxModel **out);

// # Safety
// `model` must be null or a live handle.
void rmx_model_free(struct RmxModel *model);

// Reports the expected input shape and the class count.
//
// # Safety
// `model` must be live and every output pointer valid.
enum RmxStatus rmx_model_shape(const struct RmxModel *model,
                               uintptr_t *height,
                               uintptr_t *width,
                               uintptr_t *channels,
                               uintptr_t *classes);

// Class probabilities for `count` images laid out back to back, each in
// the model's input shape. Writes `count * classes` doubles.
//
// # Safety
// `model` must be live; `pixels` must hold `count` images and `out`
// `count * classes` doubles.
enum RmxStatus rmx_model_predict(const struct RmxModel *model,
                                 const float *pixels,
                                 uintptr_t count,
                                 double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REMIXMATCH_H */
