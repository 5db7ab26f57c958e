#ifndef EEG_PLV_H
#define EEG_PLV_H

#include <stddef.h>
#include <stdint.h>

// Result of a call.
typedef enum EegStatus {
  EEG_STATUS_OK = 0,
  // A required pointer argument was null.
  EEG_STATUS_NULL_POINTER = 1,
  // An argument, montage, band or epoch set was invalid.
  EEG_STATUS_INVALID_ARGUMENT = 2,
  // The configuration failed to load or validate.
  EEG_STATUS_CONFIG = 3,
  // Array sizes disagree.
  EEG_STATUS_SHAPE = 4,
  // Filtering, phase, PLV or statistics could not be computed.
  EEG_STATUS_COMPUTE = 5,
  // A file could not be read or written.
  EEG_STATUS_IO = 6,
  // A file was readable but not a valid container or document.
  EEG_STATUS_FORMAT = 7,
  // The library panicked; this is a bug.
  EEG_STATUS_PANIC = 99,
} EegStatus;

// Opaque epoch set.
typedef struct EegEpochSet EegEpochSet;

// Opaque channels × channels PLV matrix.
typedef struct EegPlvMatrix EegPlvMatrix;

// Paired t-test outcome.
typedef struct EegTTest {
  double t;
  double p;
  size_t df;
  double mean_diff;
} EegTTest;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *eeg_version(void);

// Message of the last failed call on this thread, or null after a
// successful call. Valid until the next call on the same thread.
const char *eeg_last_error(void);

// Builds an epoch set from a trials × channels × samples array (row major).
//
// `labels` holds `n_channels` channel names. `subject` may be null.
// `paradigm` is `imagined-speech` or `visual-imagery`; `condition` is
// `rest`, `imagery` or a class label.
//
// # Safety
// Pointers must be valid for the stated lengths; `out` receives a handle
// owned by the caller.
enum EegStatus eeg_epoch_set_new(const float *data,
                                 size_t n_trials,
                                 size_t n_channels,
                                 size_t n_samples,
                                 const char *const *labels,
                                 double fs,
                                 double window_start_ms,
                                 double window_end_ms,
                                 const char *subject,
                                 const char *paradigm,
                                 const char *condition,
                                 struct EegEpochSet **out);

// Reads an epoch container.
//
// # Safety
// `path` must be a NUL-terminated string; `out` receives an owned handle.
enum EegStatus eeg_epoch_set_read(const char *path, struct EegEpochSet **out);

// Writes an epoch container, creating parent directories.
//
// # Safety
// `set` must come from this library; `path` must be NUL-terminated.
enum EegStatus eeg_epoch_set_write(const struct EegEpochSet *set, const char *path);

// Dimensions of an epoch set. Any output pointer may be null.
//
// # Safety
// `set` must come from this library.
enum EegStatus eeg_epoch_set_shape(const struct EegEpochSet *set,
                                   size_t *n_trials,
                                   size_t *n_channels,
                                   size_t *n_samples);

// Releases an epoch set. Null is ignored.
//
// # Safety
// `set` must come from this library and not be used afterwards.
void eeg_epoch_set_free(struct EegEpochSet *set);

// Analytic phase and window-averaged PLV of an already band-filtered set.
//
// The band (`band_name`, `lo_hz`, `hi_hz`) labels the result. The window is
// given in ms on the epoch time axis, and `edge_trim` is the fraction of
// samples dropped at each end before averaging.
//
// # Safety
// `set` must come from this library; `out` receives an owned handle.
enum EegStatus eeg_plv_matrix_compute(const struct EegEpochSet *set,
                                      const char *band_name,
                                      double lo_hz,
                                      double hi_hz,
                                      double window_start_ms,
                                      double window_end_ms,
                                      double edge_trim,
                                      struct EegPlvMatrix **out);

// Number of channels (rows and columns) of a PLV matrix; 0 for null.
//
// # Safety
// `m` must come from this library or be null.
size_t eeg_plv_matrix_channels(const struct EegPlvMatrix *m);

// One entry of a PLV matrix.
//
// # Safety
// `m` must come from this library; `value` must be writable.
enum EegStatus eeg_plv_matrix_get(const struct EegPlvMatrix *m, size_t i, size_t k, double *value);

// Copies the matrix row major into `dst`, which holds `len` doubles and
// must have room for channels × channels.
//
// # Safety
// `m` must come from this library; `dst` must be valid for `len` doubles.
enum EegStatus eeg_plv_matrix_copy(const struct EegPlvMatrix *m, double *dst, size_t len);

// Releases a PLV matrix. Null is ignored.
//
// # Safety
// `m` must come from this library and not be used afterwards.
void eeg_plv_matrix_free(struct EegPlvMatrix *m);

// Two-sided paired t-test of `x` against `y`, each of length `n`.
//
// # Safety
// `x` and `y` must be valid for `n` doubles; `out` must be writable.
enum EegStatus eeg_paired_t_test(const double *x, const double *y, size_t n, struct EegTTest *out);

// Zero-phase Butterworth band-pass of one signal. `order` counts poles
// and must be even; `x` and `y` may alias.
//
// # Safety
// `x` and `y` must be valid for `len` doubles.
enum EegStatus eeg_bandpass(const double *x,
                            double *y,
                            size_t len,
                            double fs,
                            double lo_hz,
                            double hi_hz,
                            size_t order);

// Runs the whole pipeline from raw containers in `input` to reports in
// `output`. `config_path` may be null for the bundled defaults and
// `threads` may be 0 for the default worker count.
//
// # Safety
// String arguments must be NUL-terminated or null where allowed.
enum EegStatus eeg_run_pipeline(const char *config_path,
                                const char *input,
                                const char *output,
                                size_t threads);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EEG_PLV_H */
