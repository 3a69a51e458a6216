/* Generated by cbindgen. Do not edit. */

#ifndef GENERICDP_H
#define GENERICDP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result code of every fallible call.
 */
typedef enum GdpStatus {
  GDP_STATUS_OK = 0,
  GDP_STATUS_NULL_POINTER = 1,
  GDP_STATUS_INVALID_ARGUMENT = 2,
  GDP_STATUS_IO = 3,
  GDP_STATUS_FORMAT = 4,
  GDP_STATUS_NUMERICAL = 5,
  GDP_STATUS_PANIC = 6,
} GdpStatus;

/*
 Opaque trained model.
 */
typedef struct GdpModel GdpModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Loads a model file. On success `*out` owns a handle to release with
 [`gdp_model_free`].

 # Safety
 `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum GdpStatus gdp_model_load(const char *path, struct GdpModel **out);

/*
 Releases a model handle. Null is ignored.

 # Safety
 `model` must come from [`gdp_model_load`] and not be used afterwards.
 */
void gdp_model_free(struct GdpModel *model);

/*
 Number of stages, or 0 for a null handle.

 # Safety
 `model` must be null or a live handle.
 */
size_t gdp_model_num_stages(const struct GdpModel *model);

/*
 Number of noise levels, or 0 for a null handle.

 # Safety
 `model` must be null or a live handle.
 */
size_t gdp_model_num_levels(const struct GdpModel *model);

/*
 Denoises `input` at noise level `sigma` into `output`.

 # Safety
 `input` and `output` must each hold `width * height` doubles.
 */
enum GdpStatus gdp_denoise(const struct GdpModel *model,
                           const double *input,
                           size_t width,
                           size_t height,
                           double sigma,
                           double *output);

/*
 Non-blind deconvolution of `input` blurred by the `psf_size`x`psf_size`
 kernel `psf` (normalized to unit sum here) with noise level `sigma`.

 # Safety
 `input` and `output` must each hold `width * height` doubles and `psf`
 `psf_size * psf_size` doubles.
 */
enum GdpStatus gdp_deconvolve(const struct GdpModel *model,
                              const double *input,
                              size_t width,
                              size_t height,
                              const double *psf,
                              size_t psf_size,
                              double sigma,
                              double *output);

/*
 PSNR in dB of `a` against `b`; `+inf` for identical images.

 # Safety
 `a` and `b` must each hold `width * height` doubles; `out` must be valid.
 */
enum GdpStatus gdp_psnr(const double *a, const double *b, size_t width, size_t height, double *out);

/*
 Mean SSIM of `a` against `b`.

 # Safety
 `a` and `b` must each hold `width * height` doubles; `out` must be valid.
 */
enum GdpStatus gdp_ssim(const double *a, const double *b, size_t width, size_t height, double *out);

/*
 Message of the last failed call on this thread, or null. The pointer
 stays valid until the next call into this library on the same thread.
 */
const char *gdp_last_error_message(void);

/*
 Static description of a status code; takes the raw value so unknown
 codes are safe to pass.
 */
const char *gdp_status_string(int32_t status);

/*
 Library version as a static string.
 */
const char *gdp_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GENERICDP_H */
