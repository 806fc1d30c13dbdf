/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef WEFIX_H
#define WEFIX_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum WefixDialect {
  WEFIX_DIALECT_CYPRESS = 0,
  WEFIX_DIALECT_SELENIUM = 1,
} WefixDialect;

typedef enum WefixStatus {
  WEFIX_STATUS_OK = 0,
  WEFIX_STATUS_NULL_ARGUMENT = 1,
  WEFIX_STATUS_INVALID_UTF8 = 2,
  WEFIX_STATUS_INVALID_ARGUMENT = 3,
  WEFIX_STATUS_PARSE_ERROR = 4,
  WEFIX_STATUS_TRANSFORM_ERROR = 5,
  WEFIX_STATUS_ANALYZE_ERROR = 6,
  WEFIX_STATUS_PANIC = 7,
} WefixStatus;

// A parsed mutation log.
typedef struct WefixLog WefixLog;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until
// the next call into the library on this thread.
const char *wefix_last_error(void);

// Library version as a static string.
const char *wefix_version(void);

// Release a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void wefix_string_free(char *s);

// Parse `len` bytes of mutation log text.
//
// # Safety
// `data` must point to `len` readable bytes; `out` must be writable.
enum WefixStatus wefix_log_parse(const uint8_t *data, size_t len, struct WefixLog **out);

// # Safety
// `log` must come from [`wefix_log_parse`] and not have been freed.
void wefix_log_free(struct WefixLog *log);

// Number of command spans; 0 for null.
//
// # Safety
// `log` must be null or a live log.
size_t wefix_log_span_count(const struct WefixLog *log);

// Number of mutation records; 0 for null.
//
// # Safety
// `log` must be null or a live log.
size_t wefix_log_mutation_count(const struct WefixLog *log);

// Canonical log text.
//
// # Safety
// `log` must be a live log; `out` must be writable.
enum WefixStatus wefix_log_serialize(const struct WefixLog *log, char **out);

// Prune the log and write suite statistics as a JSON object.
//
// # Safety
// `log` must be a live log; `out_json` must be writable.
enum WefixStatus wefix_analyze(const struct WefixLog *log, char **out_json);

// Final listen window in seconds for sorted event times (seconds after
// settle).
//
// # Safety
// `events` must point to `n` readable doubles; `out_omega_s` must be writable.
enum WefixStatus wefix_compute_window(const double *events, size_t n, double *out_omega_s);

// Add recording hooks to a test source. `file` labels hook locations.
//
// # Safety
// `source` and `file` must be NUL-terminated; `out` must be writable.
enum WefixStatus wefix_instrument(const char *source,
                                  enum WefixDialect dialect,
                                  const char *file,
                                  char **out);

// Remove every inserted region.
//
// # Safety
// `source` must be NUL-terminated; `out` must be writable.
enum WefixStatus wefix_strip(const char *source, char **out);

// Insert explicit waits after the flaky-prone commands of `log` that map
// to sites of `source`, with default oracle settings. `out_waits` may be
// null; otherwise it receives the number of inserted waits.
//
// # Safety
// Strings must be NUL-terminated, `log` live, `out` writable.
enum WefixStatus wefix_fix(const char *source,
                           enum WefixDialect dialect,
                           const char *file,
                           const struct WefixLog *log,
                           char **out,
                           size_t *out_waits);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WEFIX_H */
