#ifndef TOUCHSOUND_H
#define TOUCHSOUND_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every exported call.
typedef enum TsStatus {
  TS_STATUS_OK = 0,
  TS_STATUS_NULL_POINTER = 1,
  TS_STATUS_INVALID_ARGUMENT = 2,
  TS_STATUS_IO = 3,
  TS_STATUS_MALFORMED_FILE = 4,
  TS_STATUS_EMPTY_AFTER_TRIM = 5,
  TS_STATUS_BUFFER_TOO_SMALL = 6,
  TS_STATUS_INTERNAL = 7,
} TsStatus;

// Opaque trained model.
typedef struct TsModel TsModel;

// Per-clip features of a preprocessed clip.
typedef struct TsFeatures {
  double duration_s;
  double peak_amplitude;
  double rms;
  double dominant_frequency_hz;
  double spectral_centroid_hz;
  // 500-1k, 1k-2k, 2k-4k, 4k-8k, 8k-16k Hz fractions.
  double band_energy[5];
  // Nonzero when the clip had no energy in any band.
  uint8_t degenerate;
} TsFeatures;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Loads a model file. On success `*out` owns a model freed by [`ts_model_free`].
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum TsStatus ts_model_load(const char *path, struct TsModel **out);

// Releases a model. Null is ignored.
//
// # Safety
// `model` must come from [`ts_model_load`] and not be used afterwards.
void ts_model_free(struct TsModel *model);

// Number of output classes, or 0 for a null model.
//
// # Safety
// `model` must be null or a live handle.
uint32_t ts_model_num_classes(const struct TsModel *model);

// Preprocesses and classifies raw mono samples.
//
// `probs_out` receives one probability per class and must hold at least
// [`ts_model_num_classes`] values. `label_out` receives the winning index.
//
// # Safety
// Pointers must be valid for the stated lengths.
enum TsStatus ts_classify(const struct TsModel *model,
                          const float *samples,
                          uintptr_t len,
                          uint32_t sample_rate_hz,
                          double *probs_out,
                          uintptr_t probs_len,
                          uint32_t *label_out);

// Runs DC removal, trimming, high-pass filtering and peak normalization.
//
// `*out_len` is always set to the processed length. When `out_capacity`
// is smaller the call returns `TS_STATUS_BUFFER_TOO_SMALL` and writes
// nothing; pass a null `out` to query the length.
//
// # Safety
// `samples` must hold `len` floats, `out` must hold `out_capacity` floats.
enum TsStatus ts_preprocess(const float *samples,
                            uintptr_t len,
                            uint32_t sample_rate_hz,
                            float *out,
                            uintptr_t out_capacity,
                            uintptr_t *out_len);

// Extracts features of the preprocessed clip.
//
// # Safety
// `samples` must hold `len` floats; `out` must be writable.
enum TsStatus ts_extract_features(const float *samples,
                                  uintptr_t len,
                                  uint32_t sample_rate_hz,
                                  struct TsFeatures *out);

// Static name of a 6-way label index, or null when out of range.
const char *ts_label_name(uint32_t index);

// Message of the last failed call on this thread; empty after success.
// Valid until the next call on the same thread.
const char *ts_last_error_message(void);

// Library version as a static string.
const char *ts_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TOUCHSOUND_H */
