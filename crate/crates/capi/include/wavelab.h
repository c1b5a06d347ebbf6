/* Generated with cbindgen; edit cbindgen.toml and regenerate: cbindgen --config cbindgen.toml --crate wavelab-capi --output include/wavelab.h */

#ifndef WAVELAB_H
#define WAVELAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum WavelabStatus {
  WAVELAB_OK = 0,
  WAVELAB_ERR_INVALID_ARGUMENT = 1,
  WAVELAB_ERR_SHAPE = 2,
  WAVELAB_ERR_IO = 3,
  WAVELAB_ERR_FORMAT = 4,
  WAVELAB_ERR_DIVERGENCE = 5,
  WAVELAB_ERR_TUNING = 6,
  WAVELAB_ERR_NULL_POINTER = 7,
  WAVELAB_ERR_UTF8 = 8,
} WavelabStatus;

/**
 * Opaque model handle (weights bound to a grid).
 */
typedef struct WavelabModel WavelabModel;

/**
 * Opaque stateful stepping session over a model.
 */
typedef struct WavelabSession WavelabSession;

/**
 * Opaque sequence handle.
 */
typedef struct WavelabSequence WavelabSequence;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Crate version as a static NUL-terminated string.
 */
const char *wavelab_version(void);

/**
 * Message for the most recent failure on this thread.
 */
const char *wavelab_last_error(void);

WavelabStatus wavelab_sequence_simulate(uint32_t height,
                                        uint32_t width,
                                        uint32_t steps,
                                        double wave_speed,
                                        double source_row,
                                        double source_col,
                                        double pulse_sigma,
                                        double amplitude,
                                        uint64_t seed,
                                        WavelabSequence **out);

WavelabStatus wavelab_sequence_from_data(uint32_t t,
                                         uint32_t h,
                                         uint32_t w,
                                         const double *values,
                                         WavelabSequence **out);

WavelabStatus wavelab_sequence_dims(const WavelabSequence *seq,
                                    uint32_t *t,
                                    uint32_t *h,
                                    uint32_t *w);

/**
 * Copies the `[t][i][j]` row-major values into `out` (`len` must equal
 * `t*h*w`).
 */
WavelabStatus wavelab_sequence_copy_data(const WavelabSequence *seq,
                                         double *out,
                                         size_t len);

WavelabStatus wavelab_sequence_rmsa(const WavelabSequence *seq, double *out);

WavelabStatus wavelab_sequence_add_noise(const WavelabSequence *seq,
                                         double target_snr,
                                         uint64_t seed,
                                         WavelabSequence **out);

/**
 * Reads a WAVD container file.
 */
WavelabStatus wavelab_sequence_read(const char *path, WavelabSequence **out);

/**
 * Writes a WAVD container file.
 */
WavelabStatus wavelab_sequence_write(const WavelabSequence *seq, const char *path);

void wavelab_sequence_free(WavelabSequence *seq);

/**
 * Dynamic time warping distance between two series.
 */
WavelabStatus wavelab_dtw(const double *a,
                          size_t a_len,
                          const double *b,
                          size_t b_len,
                          double *out);

/**
 * Builds a fresh model (`distana4`, `distana24`, `convlstm2`, `convlstm8`,
 * `tcn121`, `tcn191`) with seeded initial weights on an HxW grid.
 */
WavelabStatus wavelab_model_new(const char *model_id,
                                uint32_t height,
                                uint32_t width,
                                uint64_t seed,
                                WavelabModel **out);

/**
 * Loads a CKPT container and binds it to an HxW grid.
 */
WavelabStatus wavelab_model_load(const char *path,
                                 uint32_t height,
                                 uint32_t width,
                                 WavelabModel **out);

WavelabStatus wavelab_model_save(const WavelabModel *model, const char *path);

WavelabStatus wavelab_model_param_count(const WavelabModel *model, size_t *out);

/**
 * Copies the model id into `buf` as a NUL-terminated string.
 */
WavelabStatus wavelab_model_id(const WavelabModel *model, char *buf, size_t buf_len);

void wavelab_model_free(WavelabModel *model);

/**
 * Opens a stepping session with the model's weights and a zero state.
 */
WavelabStatus wavelab_session_new(const WavelabModel *model, WavelabSession **out);

WavelabStatus wavelab_session_reset(WavelabSession *session);

/**
 * Feeds one HxW frame and returns the model's prediction of the next frame.
 */
WavelabStatus wavelab_session_step(WavelabSession *session,
                                   const double *frame,
                                   size_t frame_len,
                                   double *prediction,
                                   size_t prediction_len);

/**
 * Teacher-forces the first `steps` frames of `noisy` into the session.
 */
WavelabStatus wavelab_session_induce_tf(WavelabSession *session,
                                        const WavelabSequence *noisy,
                                        uint32_t steps);

/**
 * Active-tuning induction: infers inputs against the first `steps` noisy
 * frames by gradient descent (rate `eta`, window `history`, `cycles` per
 * step) and charges the session state.
 */
WavelabStatus wavelab_session_induce_at(WavelabSession *session,
                                        const WavelabSequence *noisy,
                                        uint32_t steps,
                                        double eta,
                                        uint32_t history,
                                        uint32_t cycles,
                                        double *final_window_loss);

/**
 * Closed-loop rollout from the session's current state: `steps` frames,
 * starting with the pending prediction, each output fed back as input.
 * The rollout works on a copy; the session state does not advance.
 */
WavelabStatus wavelab_session_rollout(const WavelabSession *session,
                                      uint32_t steps,
                                      WavelabSequence **out);

void wavelab_session_free(WavelabSession *session);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WAVELAB_H */
