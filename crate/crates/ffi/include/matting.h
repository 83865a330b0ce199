#ifndef MATTING_H
#define MATTING_H

#include <stddef.h>
#include <stdint.h>
#include <stdbool.h>

#define MATTING_COLOR_RGB 0

#define MATTING_COLOR_GRAY 1

#define MATTING_METHOD_CF 0

#define MATTING_METHOD_KNN 1

#define MATTING_METHOD_RW 2

#define MATTING_METHOD_LBDM 3

#define MATTING_METHOD_LKM 4

// Picks ichol for assembled Laplacians and Jacobi for lkm.
#define MATTING_PRECOND_DEFAULT 0

#define MATTING_PRECOND_NONE 1

#define MATTING_PRECOND_JACOBI 2

#define MATTING_PRECOND_ICHOL 3

#define MATTING_PRECOND_VCYCLE 4

#define MATTING_FOREGROUND_CF 0

#define MATTING_FOREGROUND_ML 1

typedef enum MattingStatus {
  MATTING_STATUS_OK = 0,
  MATTING_STATUS_NULL_POINTER = 1,
  MATTING_STATUS_INVALID_ARGUMENT = 2,
  MATTING_STATUS_IO = 3,
  MATTING_STATUS_DIMENSION_MISMATCH = 4,
  MATTING_STATUS_SOLVER = 5,
  MATTING_STATUS_INVALID_INPUT = 6,
  MATTING_STATUS_PANIC = 7,
} MattingStatus;

// Opaque image handle.
typedef struct MattingImage MattingImage;

// Optional tuning for `matting_estimate_alpha`. Zero or negative numeric
// fields select the library defaults.
typedef struct MattingAlphaOptions {
  uint32_t method;
  uint32_t preconditioner;
  double lambda;
  double atol;
  double eps;
  size_t radius;
  size_t max_iter;
} MattingAlphaOptions;

typedef struct MattingSolveInfo {
  size_t iterations;
  double residual_norm;
  double tolerance;
  bool converged;
  double build_seconds;
  double solve_seconds;
  size_t peak_bytes;
} MattingSolveInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer
// stays valid until the next library call on the same thread.
const char *matting_last_error_message(void);

// Loads a PNG as RGB (`MATTING_COLOR_RGB`) or luma (`MATTING_COLOR_GRAY`).
//
// # Safety
// `path` must be a NUL-terminated string and `out` a writable pointer.
enum MattingStatus matting_image_load(const char *path,
                                      uint32_t color_mode,
                                      struct MattingImage **out);

// Copies `width·height·channels` interleaved samples in `[0, 1]`.
//
// # Safety
// `data` must point to that many readable doubles and `out` be writable.
enum MattingStatus matting_image_from_data(size_t width,
                                           size_t height,
                                           size_t channels,
                                           const double *data,
                                           struct MattingImage **out);

// Releases a handle; null is ignored.
//
// # Safety
// `image` must come from this library and not be used afterwards.
void matting_image_free(struct MattingImage *image);

// # Safety
// `image` must be a live handle or null (returns 0).
size_t matting_image_width(const struct MattingImage *image);

// # Safety
// `image` must be a live handle or null (returns 0).
size_t matting_image_height(const struct MattingImage *image);

// # Safety
// `image` must be a live handle or null (returns 0).
size_t matting_image_channels(const struct MattingImage *image);

// Copies the interleaved samples into `out`, which must hold exactly
// `width·height·channels` doubles.
//
// # Safety
// `out` must point to `len` writable doubles.
enum MattingStatus matting_image_copy_data(const struct MattingImage *image,
                                           double *out,
                                           size_t len);

// Writes an 8-bit PNG.
//
// # Safety
// `image` must be a live handle and `path` a NUL-terminated string.
enum MattingStatus matting_image_save(const struct MattingImage *image, const char *path);

// Default options: closed-form method, default preconditioner and weights.
struct MattingAlphaOptions matting_alpha_options_default(void);

// Estimates a single-channel alpha matte from an RGB image and a
// single-channel trimap. `options` and `info` may be null.
//
// # Safety
// Handles must be live; `alpha_out` must be writable.
enum MattingStatus matting_estimate_alpha(const struct MattingImage *image,
                                          const struct MattingImage *trimap,
                                          const struct MattingAlphaOptions *options,
                                          struct MattingImage **alpha_out,
                                          struct MattingSolveInfo *info);

// Estimates foreground and, if `background_out` is non-null, background
// colors with `MATTING_FOREGROUND_CF` or `MATTING_FOREGROUND_ML` defaults.
//
// # Safety
// Handles must be live; `foreground_out` must be writable.
enum MattingStatus matting_estimate_foreground(const struct MattingImage *image,
                                               const struct MattingImage *alpha,
                                               uint32_t method,
                                               struct MattingImage **foreground_out,
                                               struct MattingImage **background_out);

// Combines an RGB foreground with a single-channel alpha into RGBA
// (straight alpha).
//
// # Safety
// Handles must be live; `out` must be writable.
enum MattingStatus matting_stack_images(const struct MattingImage *foreground,
                                        const struct MattingImage *alpha,
                                        struct MattingImage **out);

// Library version as a static NUL-terminated string.
const char *matting_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MATTING_H */
