#ifndef EVM_SINR_H
#define EVM_SINR_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EvmSinrStatus {
  Ok = 0,
  NullPointer = 1,
  InvalidArgument = 2,
  InfeasibleSpec = 3,
  IllConditioned = 4,
  DegenerateInput = 5,
  UnboundedPrediction = 6,
  NotTabulated = 7,
  Internal = 99,
} EvmSinrStatus;

/**
 * Opaque QAM constellation.
 */
typedef struct EvmSinrConstellation EvmSinrConstellation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` as a
 * NUL-terminated string, truncating to `len - 1` bytes. Returns the full
 * message length in bytes, excluding the terminator.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
uintptr_t evm_sinr_last_error_message(char *buf, uintptr_t len);

/**
 * Creates a Gray-labelled unit-power constellation of `order` points.
 *
 * # Safety
 * `out` must be valid for a pointer write.
 */
enum EvmSinrStatus evm_sinr_constellation_new(uintptr_t order, struct EvmSinrConstellation **out);

/**
 * Frees a constellation. Null is ignored.
 *
 * # Safety
 * `c` must be null or come from [`evm_sinr_constellation_new`], and not be
 * used afterwards.
 */
void evm_sinr_constellation_free(struct EvmSinrConstellation *c);

/**
 * Number of points, or 0 for null.
 *
 * # Safety
 * `c` must be null or a live constellation.
 */
uintptr_t evm_sinr_constellation_order(const struct EvmSinrConstellation *c);

/**
 * Writes the points, indexed by label, into `out` (`2 * order` doubles).
 *
 * # Safety
 * `c` must be a live constellation and `out` valid for `2 * len` doubles.
 */
enum EvmSinrStatus evm_sinr_constellation_points(const struct EvmSinrConstellation *c,
                                                 double *out,
                                                 uintptr_t len);

/**
 * RMS EVM in percent of a `carriers x frames` grid. With `reference`
 * null the nearest constellation point is used as the reference.
 *
 * # Safety
 * `received` and a non-null `reference` must hold `2 * carriers * frames`
 * doubles; `out_percent` must be writable.
 */
enum EvmSinrStatus evm_sinr_rms_evm(const struct EvmSinrConstellation *c,
                                    const double *received,
                                    const double *reference,
                                    uintptr_t carriers,
                                    uintptr_t frames,
                                    double *out_percent);

/**
 * Predicted SINR in dB from an EVM in percent and gradient `a_value`.
 *
 * # Safety
 * `out_db` must be writable.
 */
enum EvmSinrStatus evm_sinr_predict(double evm_percent, double a_value, double *out_db);

/**
 * Tabulated gradient for an order and interferer count.
 *
 * # Safety
 * `out_a` must be writable.
 */
enum EvmSinrStatus evm_sinr_reference_gradient(uintptr_t qam_order,
                                               uintptr_t n_interferers,
                                               double *out_a);

/**
 * Signalled SINR in dB from the wanted grid, `n_interferers` interferer
 * grids and the noise variance.
 *
 * # Safety
 * Every grid pointer must hold `2 * carriers * frames` doubles, and
 * `interferers` must hold `n_interferers` pointers (it may be null when
 * `n_interferers` is 0).
 */
enum EvmSinrStatus evm_sinr_signalled(const double *wanted,
                                      const double *const *interferers,
                                      uintptr_t n_interferers,
                                      uintptr_t carriers,
                                      uintptr_t frames,
                                      double noise_var,
                                      double *out_db);

/**
 * Zero-forcing precoder for a flat `n_users x n_tx` channel given
 * row-major. Writes the `n_tx x n_users` weights row-major, with unit-norm
 * columns, and the channel condition number.
 *
 * # Safety
 * `h` must hold `2 * n_users * n_tx` doubles, `out_w` the same, and
 * `out_condition` must be null or writable.
 */
enum EvmSinrStatus evm_sinr_zero_forcing(const double *h,
                                         uintptr_t n_users,
                                         uintptr_t n_tx,
                                         double *out_w,
                                         double *out_condition);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EVM_SINR_H */
