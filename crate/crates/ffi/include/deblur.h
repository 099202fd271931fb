#ifndef DEBLUR_H
#define DEBLUR_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Success.
 */
#define DEBLUR_OK 0

/**
 * A required pointer argument was null.
 */
#define DEBLUR_ERR_NULL_ARG 1

/**
 * A path was not valid UTF-8.
 */
#define DEBLUR_ERR_UTF8 2

/**
 * File could not be read, written, or decoded.
 */
#define DEBLUR_ERR_IO 3

/**
 * Invalid argument or failed operation; see deblur_last_error().
 */
#define DEBLUR_ERR_INVALID 4

/**
 * Opaque learned filter bank handle.
 */
typedef struct DeblurBank DeblurBank;

/**
 * Opaque grayscale image handle (values in [0, 1], row-major).
 */
typedef struct DeblurImage DeblurImage;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent failure on this thread. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *deblur_last_error(void);

/**
 * Load a grayscale image (PNG or PGM) from `path` into `*out`.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid pointer.
 */
int deblur_image_load(const char *path, struct DeblurImage **out);

/**
 * Save an image as 8-bit grayscale PNG.
 *
 * # Safety
 * `image` must be a live handle and `path` a valid NUL-terminated string.
 */
int deblur_image_save(const struct DeblurImage *image, const char *path);

/**
 * Build an image from a row-major buffer of `width * height` values;
 * values are clamped to [0, 1].
 *
 * # Safety
 * `data` must point to `width * height` readable doubles; `out` must be a
 * valid pointer.
 */
int deblur_image_new(size_t width, size_t height, const double *data, struct DeblurImage **out);

/**
 * Image width in pixels; 0 for a null handle.
 */
size_t deblur_image_width(const struct DeblurImage *image);

/**
 * Image height in pixels; 0 for a null handle.
 */
size_t deblur_image_height(const struct DeblurImage *image);

/**
 * Copy the image's pixels into `buf`, which must hold `len >= width * height`
 * doubles.
 *
 * # Safety
 * `buf` must point to `len` writable doubles.
 */
int deblur_image_pixels(const struct DeblurImage *image, double *buf, size_t len);

/**
 * Release an image handle; null is a no-op.
 *
 * # Safety
 * `image` must have come from this library and not already be freed.
 */
void deblur_image_free(struct DeblurImage *image);

/**
 * Load a filter bank (.dfbk) from `path` into `*out`.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid pointer.
 */
int deblur_bank_load(const char *path, struct DeblurBank **out);

/**
 * Side length of the bank's filters; 0 for a null handle.
 */
size_t deblur_bank_patch_size(const struct DeblurBank *bank);

/**
 * Release a bank handle; null is a no-op.
 *
 * # Safety
 * `bank` must have come from this library and not already be freed.
 */
void deblur_bank_free(struct DeblurBank *bank);

/**
 * Restore `image` with `bank`, writing a new handle to `*out`.
 *
 * # Safety
 * `image` and `bank` must be live handles; `out` must be a valid pointer.
 */
int deblur_restore(const struct DeblurImage *image,
                   const struct DeblurBank *bank,
                   struct DeblurImage **out);

/**
 * No-reference sharpness Q of `image` (default configuration), written to
 * `*out_q`.
 *
 * # Safety
 * `image` must be a live handle; `out_q` must be a valid pointer.
 */
int deblur_metric_q(const struct DeblurImage *image, double *out_q);

/**
 * Bounded sharpness index J = 1 / (1 + V); an infinite V maps to 0.
 */
double deblur_index_j(double v);

/**
 * PSNR of `test` against `reference` in dB (infinity for identical images),
 * written to `*out_db`.
 *
 * # Safety
 * Both handles must be live; `out_db` must be a valid pointer.
 */
int deblur_psnr(const struct DeblurImage *reference,
                const struct DeblurImage *test,
                double *out_db);

/**
 * Mean SSIM of `test` against `reference`, written to `*out_ssim`.
 *
 * # Safety
 * Both handles must be live; `out_ssim` must be a valid pointer.
 */
int deblur_ssim(const struct DeblurImage *reference,
                const struct DeblurImage *test,
                double *out_ssim);

/**
 * Sharpness-guided blend of `count` candidate images of the same scene
 * (default configuration); the blended image is written to `*out`.
 *
 * # Safety
 * `candidates` must point to `count` live image handles; `out` must be a
 * valid pointer.
 */
int deblur_blend(const struct DeblurImage *const *candidates,
                 size_t count,
                 struct DeblurImage **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DEBLUR_H */
