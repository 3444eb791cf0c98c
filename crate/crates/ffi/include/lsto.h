#ifndef LSTO_H
#define LSTO_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum LstoStatus {
  LSTO_STATUS_OK = 0,
  LSTO_STATUS_INVALID_ARGUMENT = 1,
  LSTO_STATUS_PARSE_ERROR = 2,
  LSTO_STATUS_NUMERICAL_ERROR = 3,
  LSTO_STATUS_IO_ERROR = 4,
} LstoStatus;

/**
 * Opaque run configuration.
 */
typedef struct LstoConfig LstoConfig;

/**
 * Opaque run result.
 */
typedef struct LstoResult LstoResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Last error message for the calling thread. Valid until the next failing
 * call on the same thread. Never null.
 */
const char *lsto_last_error(void);

/**
 * Parses a configuration from the same `key = value` text format the CLI
 * reads. On success stores a new handle in `out`.
 *
 * # Safety
 * `text` must be a valid NUL-terminated UTF-8 string and `out` a valid
 * pointer.
 */
enum LstoStatus lsto_config_parse(const char *text, struct LstoConfig **out);

/**
 * Releases a configuration handle. Null is ignored.
 *
 * # Safety
 * `cfg` must come from `lsto_config_parse` and not be freed twice.
 */
void lsto_config_free(struct LstoConfig *cfg);

/**
 * Runs the optimization. `adaptive != 0` interleaves mesh adaptation,
 * otherwise the mesh stays fixed. On success stores a result handle in
 * `out`.
 *
 * # Safety
 * `cfg` must be a live configuration handle and `out` a valid pointer.
 */
enum LstoStatus lsto_run(const struct LstoConfig *cfg, int32_t adaptive, struct LstoResult **out);

/**
 * Releases a result handle. Null is ignored.
 *
 * # Safety
 * `result` must come from `lsto_run` and not be freed twice.
 */
void lsto_result_free(struct LstoResult *result);

/**
 * Writes `history.csv`, `mesh.vtk`, `layout.vtk` and `boundary.svg` into
 * `dir` (created if missing).
 *
 * # Safety
 * `result` must be a live result handle; `dir` a NUL-terminated UTF-8 path.
 */
enum LstoStatus lsto_result_write_outputs(const struct LstoResult *result, const char *dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LSTO_H */
