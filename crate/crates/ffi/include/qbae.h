#ifndef QBAE_H
#define QBAE_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Quadrature selector: 0 for q, 1 for p.
 */
#define QBAE_QUAD_Q 0

#define QBAE_QUAD_P 1

/**
 * Result of every fallible call.
 */
typedef enum QbaeStatus {
  QBAE_STATUS_OK = 0,
  QBAE_STATUS_NULL_POINTER = 1,
  QBAE_STATUS_INVALID_ARGUMENT = 2,
  QBAE_STATUS_PARSE_ERROR = 3,
  QBAE_STATUS_INVALID_SYSTEM = 4,
  QBAE_STATUS_DOMAIN_ERROR = 5,
  QBAE_STATUS_BUFFER_TOO_SMALL = 6,
  QBAE_STATUS_PANIC = 7,
} QbaeStatus;

/**
 * Opaque handle to a validated linear quantum system.
 */
typedef struct QbaeSystem QbaeSystem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Builds a system from its five matrices. `s` is m×m, `c_minus` and
 * `c_plus` are m×n, `omega_minus` and `omega_plus` are n×n, each as
 * interleaved complex doubles. The system must pass validation.
 *
 * # Safety
 * Each pointer must reference the number of doubles its shape implies and
 * `out` must be writable.
 */
enum QbaeStatus qbae_system_new(size_t n,
                                size_t m,
                                const double *s,
                                const double *c_minus,
                                const double *c_plus,
                                const double *omega_minus,
                                const double *omega_plus,
                                struct QbaeSystem **out);

/**
 * Builds a system from a JSON system description.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` writable.
 */
enum QbaeStatus qbae_system_from_json(const char *json, struct QbaeSystem **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `sys` must come from this library and not be used afterwards.
 */
void qbae_system_free(struct QbaeSystem *sys);

/**
 * # Safety
 * `sys` must be a live handle; `n` and `m` writable.
 */
enum QbaeStatus qbae_system_dims(const struct QbaeSystem *sys, size_t *n, size_t *m);

/**
 * Certifies that the transfer block from `input` to `output` vanishes.
 * `tol <= 0` selects the default tolerance.
 *
 * # Safety
 * `sys` must be a live handle; `verdict` and `residual` writable.
 */
enum QbaeStatus qbae_certify_block(const struct QbaeSystem *sys,
                                   uint32_t output,
                                   uint32_t input,
                                   double tol,
                                   int *verdict,
                                   double *residual);

/**
 * Writes G(s) in quadrature form, (2m)×(2m) interleaved complex doubles,
 * into `buf`. `len` is the capacity in doubles; `needed` receives the
 * required count even when the buffer is too small.
 *
 * # Safety
 * `sys` must be a live handle, `buf` valid for `len` doubles and `needed`
 * writable.
 */
enum QbaeStatus qbae_transfer(const struct QbaeSystem *sys,
                              double s_re,
                              double s_im,
                              double *buf,
                              size_t len,
                              size_t *needed);

/**
 * Runs the structural BAE analysis: `predictions` receives the number of
 * predicted zero blocks and `confirmed` whether all were certified.
 *
 * # Safety
 * `sys` must be a live handle; outputs writable.
 */
enum QbaeStatus qbae_bae_analyze(const struct QbaeSystem *sys, size_t *predictions, int *confirmed);

/**
 * Tests [L, H] = 0. `tol <= 0` selects the default tolerance.
 *
 * # Safety
 * `sys` must be a live handle; outputs writable.
 */
enum QbaeStatus qbae_qnd_interaction(const struct QbaeSystem *sys,
                                     double tol,
                                     int *verdict,
                                     double *residual);

/**
 * Copies the calling thread's last error message into `buf` with a
 * terminating NUL, truncating if needed. Returns the full message length
 * in bytes, excluding the NUL.
 *
 * # Safety
 * `buf` must be valid for `len` bytes, or null with `len == 0`.
 */
size_t qbae_last_error_message(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *qbae_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QBAE_H */
