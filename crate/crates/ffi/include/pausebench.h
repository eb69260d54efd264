#ifndef PAUSEBENCH_H
#define PAUSEBENCH_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PbStatus {
  PB_STATUS_OK = 0,
  PB_STATUS_NULL_POINTER = 1,
  PB_STATUS_INVALID_UTF8 = 2,
  PB_STATUS_PARSE_ERROR = 3,
  PB_STATUS_INVALID_TIMING = 4,
  PB_STATUS_EMPTY_TRANSCRIPT = 5,
  PB_STATUS_IO_ERROR = 6,
  PB_STATUS_FORMAT_ERROR = 7,
  PB_STATUS_INVALID_ARGUMENT = 8,
  PB_STATUS_SINGLE_CLASS = 9,
  PB_STATUS_VERIFICATION_FAILED = 10,
  PB_STATUS_PANIC = 11,
} PbStatus;

// Embedding matrix of 32-bit floats, row-major.
typedef struct PbMatrix PbMatrix;

// Word-timed transcript.
typedef struct PbTranscript PbTranscript;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the last failure on this thread. Valid until the next
// call into this library from the same thread.
const char *pb_last_error(void);

// Library version as a static NUL-terminated string.
const char *pb_version(void);

// Release a string returned by this library. Null is ignored.
//
// # Safety
// `s` must be null or a pointer obtained from this library and not yet freed.
void pb_string_free(char *s);

// Parse a transcript JSON document of `len` bytes.
//
// # Safety
// `json` must point to `len` readable bytes; `out` must be writable.
enum PbStatus pb_transcript_parse(const uint8_t *json, size_t len, struct PbTranscript **out);

// # Safety
// `t` must be null or a live transcript handle.
void pb_transcript_free(struct PbTranscript *t);

// Number of words; 0 for a null handle.
//
// # Safety
// `t` must be null or a live transcript handle.
size_t pb_transcript_word_count(const struct PbTranscript *t);

// Number of gaps between consecutive words; 0 for a null handle.
//
// # Safety
// `t` must be null or a live transcript handle.
size_t pb_transcript_pause_count(const struct PbTranscript *t);

// Enrich with `scheme` ("p1" … "p4", "p3-disfl") and return the rendered
// token string in `*out_text`.
//
// # Safety
// `t` must be a live handle, `scheme` a NUL-terminated string, `out_text` writable.
enum PbStatus pb_transcript_enrich(const struct PbTranscript *t,
                                   const char *scheme,
                                   bool include_disfluencies,
                                   char **out_text);

// Token for a pause of `duration_s` seconds under `scheme`. `*out_token` is
// set to a static string, or to null when the pause is below the scheme
// minimum.
//
// # Safety
// `scheme` must be a NUL-terminated string and `out_token` writable.
enum PbStatus pb_bin_pause(const char *scheme, double duration_s, const char **out_token);

// Read a `.pemb` file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum PbStatus pb_matrix_read(const char *path, struct PbMatrix **out);

// Copy `rows × cols` floats into a new matrix.
//
// # Safety
// `data` must point to `rows * cols` readable floats; `out` must be writable.
enum PbStatus pb_matrix_new(size_t rows, size_t cols, const float *data, struct PbMatrix **out);

// Write `m` to `path` as a `.pemb` file.
//
// # Safety
// `m` must be a live handle and `path` a NUL-terminated string.
enum PbStatus pb_matrix_write(const struct PbMatrix *m, const char *path);

// # Safety
// `m` must be null or a live matrix handle.
size_t pb_matrix_rows(const struct PbMatrix *m);

// # Safety
// `m` must be null or a live matrix handle.
size_t pb_matrix_cols(const struct PbMatrix *m);

// Row-major payload, valid while `m` lives. Null for a null handle.
//
// # Safety
// `m` must be null or a live matrix handle.
const float *pb_matrix_data(const struct PbMatrix *m);

// # Safety
// `m` must be null or a live matrix handle.
void pb_matrix_free(struct PbMatrix *m);

// ROC AUC of `scores` against binary `labels` (non-zero = positive).
//
// # Safety
// `scores` and `labels` must each point to `n` readable values; `out` must be writable.
enum PbStatus pb_roc_auc(const double *scores, const uint8_t *labels, size_t n, double *out);

// Finite-difference gradient check of all attention modes on tiny models.
// Returns [`PbStatus::VerificationFailed`] when the tolerance is exceeded.
//
// # Safety
// `max_rel_error` must be null or writable.
enum PbStatus pb_grad_check(uint64_t seed, double *max_rel_error);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PAUSEBENCH_H */
