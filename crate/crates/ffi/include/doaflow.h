#ifndef DOAFLOW_H
#define DOAFLOW_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  DOA_STATUS_OK = 0,
  DOA_STATUS_NULL_ARGUMENT = 1,
  DOA_STATUS_INVALID_UTF8 = 2,
  DOA_STATUS_UNKNOWN_NAME = 3,
  DOA_STATUS_RUNTIME_FAILURE = 4,
  DOA_STATUS_PANIC = 5,
} DoaStatus;

/**
 * Component inventory of one app version.
 */
typedef struct DoaManifest DoaManifest;

/**
 * Report of one simulated run.
 */
typedef struct DoaReport DoaReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string. Do not free.
 */
const char *doa_version(void);

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next failing call on the same thread. Do not free.
 */
const char *doa_last_error_message(void);

/**
 * Releases a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void doa_string_free(char *s);

/**
 * Builds the component manifest of `app`/`paradigm`/`stage`
 * (for example `"ride_allocation"`, `"fbp"`, `"min"`).
 *
 * # Safety
 * String arguments must be NUL-terminated; `out_manifest` must be writable.
 */
DoaStatus doa_manifest_new(const char *app,
                           const char *paradigm,
                           const char *stage,
                           DoaManifest **out_manifest);

/**
 * Number of components, 0 for NULL.
 *
 * # Safety
 * `manifest` must be NULL or a live handle.
 */
size_t doa_manifest_len(const DoaManifest *manifest);

/**
 * # Safety
 * `manifest` must be NULL or a live handle; it is invalid afterwards.
 */
void doa_manifest_free(DoaManifest *manifest);

/**
 * Affected-components count going from `from` to `to`.
 *
 * # Safety
 * Both handles must be live; `out_count` must be writable.
 */
DoaStatus doa_manifest_diff_count(const DoaManifest *from,
                                  const DoaManifest *to,
                                  size_t *out_count);

/**
 * The diff as a sorted `status id` table ending in `affected_count N`.
 * Free the result with `doa_string_free`.
 *
 * # Safety
 * Both handles must be live; `out_text` must be writable.
 */
DoaStatus doa_manifest_diff_table(const DoaManifest *from, const DoaManifest *to, char **out_text);

/**
 * Simulates one app version for `ticks` ticks from `seed`.
 *
 * # Safety
 * String arguments must be NUL-terminated; `out_report` must be writable.
 */
DoaStatus doa_run(const char *app,
                  const char *paradigm,
                  const char *stage,
                  uint64_t ticks,
                  uint64_t seed,
                  DoaReport **out_report);

/**
 * Hex sha256 over the run's observed outputs. Free with `doa_string_free`.
 *
 * # Safety
 * `report` must be live; `out_text` must be writable.
 */
DoaStatus doa_report_digest(const DoaReport *report, char **out_text);

/**
 * Canonical JSON of the report. Free with `doa_string_free`.
 *
 * # Safety
 * `report` must be live; `out_text` must be writable.
 */
DoaStatus doa_report_json(const DoaReport *report, char **out_text);

/**
 * # Safety
 * `report` must be NULL or a live handle; it is invalid afterwards.
 */
void doa_report_free(DoaReport *report);

/**
 * Runs both min-stage paradigms of `app` and stores whether their output
 * digests match.
 *
 * # Safety
 * `app` must be NUL-terminated; `out_match` must be writable.
 */
DoaStatus doa_equiv(const char *app, uint64_t ticks, uint64_t seed, bool *out_match);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DOAFLOW_H */
