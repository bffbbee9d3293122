#ifndef CHAINSMELL_H
#define CHAINSMELL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ChainsmellStatus {
  CHAINSMELL_STATUS_OK = 0,
  CHAINSMELL_STATUS_NULL_ARGUMENT = 1,
  CHAINSMELL_STATUS_INVALID_UTF8 = 2,
  CHAINSMELL_STATUS_IO = 3,
  CHAINSMELL_STATUS_PARSE = 4,
  CHAINSMELL_STATUS_NOT_RECOGNIZED = 5,
  CHAINSMELL_STATUS_INVALID_ARGUMENT = 6,
  CHAINSMELL_STATUS_PANIC = 7,
} ChainsmellStatus;

typedef enum ChainsmellPackageManager {
  CHAINSMELL_PACKAGE_MANAGER_YARN_V1 = 0,
  CHAINSMELL_PACKAGE_MANAGER_PNPM = 1,
  CHAINSMELL_PACKAGE_MANAGER_NPM = 2,
} ChainsmellPackageManager;

/**
 * Opaque handle to a parsed dependency graph.
 */
typedef struct ChainsmellGraph ChainsmellGraph;

/**
 * Opaque handle to a loaded pond.
 */
typedef struct ChainsmellPond ChainsmellPond;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into this library on the same thread.
 */
const char *chainsmell_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *chainsmell_version(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library, freed once.
 */
void chainsmell_string_free(char *s);

/**
 * Loads and validates a pond file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum ChainsmellStatus chainsmell_pond_load(const char *path, struct ChainsmellPond **out);

/**
 * Parses a pond from JSON text.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum ChainsmellStatus chainsmell_pond_from_json(const char *json, struct ChainsmellPond **out);

/**
 * Number of packages in the pond; 0 for null.
 *
 * # Safety
 * `pond` must be null or a live handle.
 */
size_t chainsmell_pond_len(const struct ChainsmellPond *pond);

/**
 * Runs detection and writes the JSON report (the `summary.json` content).
 *
 * # Safety
 * `pond` must be a live handle; `out` must be writable. Free the result
 * with [`chainsmell_string_free`].
 */
enum ChainsmellStatus chainsmell_pond_report_json(const struct ChainsmellPond *pond,
                                                  int64_t generated_at_unix,
                                                  char **out);

/**
 * Runs detection and writes the Markdown report.
 *
 * # Safety
 * As for [`chainsmell_pond_report_json`].
 */
enum ChainsmellStatus chainsmell_pond_report_markdown(const struct ChainsmellPond *pond,
                                                      int64_t generated_at_unix,
                                                      char **out);

/**
 * # Safety
 * `pond` must be null or a handle from this library, freed once.
 */
void chainsmell_pond_free(struct ChainsmellPond *pond);

/**
 * Parses lockfile text of the given format.
 *
 * # Safety
 * `content` must be a NUL-terminated string; `out` must be writable.
 */
enum ChainsmellStatus chainsmell_lockfile_parse(const char *content,
                                                enum ChainsmellPackageManager kind,
                                                struct ChainsmellGraph **out);

/**
 * Distinct `(name, version)` packages in the graph; 0 for null.
 *
 * # Safety
 * `graph` must be null or a live handle.
 */
size_t chainsmell_graph_len(const struct ChainsmellGraph *graph);

/**
 * `name@version` of the package at `index` in sorted order, or null when out
 * of range.
 *
 * # Safety
 * `graph` must be null or a live handle. Free the result with
 * [`chainsmell_string_free`].
 */
char *chainsmell_graph_package(const struct ChainsmellGraph *graph, size_t index);

/**
 * # Safety
 * `graph` must be null or a handle from this library, freed once.
 */
void chainsmell_graph_free(struct ChainsmellGraph *graph);

/**
 * Normalizes a `repository` field value to `https://host/owner/repo`.
 * Returns `NotRecognized` when the value is not a source URL.
 *
 * # Safety
 * `raw` must be a NUL-terminated string; `out` must be writable.
 */
enum ChainsmellStatus chainsmell_normalize_repo_url(const char *raw, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CHAINSMELL_H */
