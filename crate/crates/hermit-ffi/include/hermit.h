#ifndef HERMIT_H
#define HERMIT_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HermitStatus {
  HERMIT_STATUS_OK = 0,
  HERMIT_STATUS_NULL_POINTER = 1,
  HERMIT_STATUS_INVALID_ARGUMENT = 2,
  HERMIT_STATUS_IO = 3,
  HERMIT_STATUS_PARSE = 4,
  HERMIT_STATUS_NOT_FOUND = 5,
  HERMIT_STATUS_DUPLICATE_KEY = 6,
  HERMIT_STATUS_UNKNOWN_INDEX = 7,
  HERMIT_STATUS_PANIC = 8,
} HermitStatus;

/**
 * Base table plus its indexes.
 */
typedef struct HermitEngine HermitEngine;

/**
 * Primary keys returned by a lookup, ascending.
 */
typedef struct HermitResult HermitResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *hermit_last_error(void);

/**
 * Generates a synthetic table (`kind`: linear, sigmoid, stock, sensor).
 *
 * # Safety
 * `kind` is a NUL-terminated string; `out` is valid for one write.
 */
enum HermitStatus hermit_engine_generate(const char *kind,
                                         size_t rows,
                                         double noise,
                                         uint64_t seed,
                                         size_t extra_targets,
                                         bool physical,
                                         struct HermitEngine **out);

/**
 * Loads a dataset file whose first column is the primary key.
 *
 * # Safety
 * `path` is a NUL-terminated string; `out` is valid for one write.
 */
enum HermitStatus hermit_engine_load(const char *path, bool physical, struct HermitEngine **out);

/**
 * # Safety
 * `e` is null or a handle not yet freed.
 */
void hermit_engine_free(struct HermitEngine *e);

/**
 * # Safety
 * `e` is a live handle; `out` is valid for one write.
 */
enum HermitStatus hermit_engine_row_count(const struct HermitEngine *e, size_t *out);

/**
 * Ordinal of the column called `name`.
 *
 * # Safety
 * `e` is a live handle; `name` is a NUL-terminated string; `out` is valid
 * for one write.
 */
enum HermitStatus hermit_engine_column(const struct HermitEngine *e, const char *name, size_t *out);

/**
 * Registers a TRS-Tree index from column `target` to `host`. `params` is
 * null or a comma-separated `key=value` list.
 *
 * # Safety
 * `e` is a live handle; `params` is null or a NUL-terminated string;
 * `out_id` is valid for one write.
 */
enum HermitStatus hermit_create_hermit_index(const struct HermitEngine *e,
                                             size_t target,
                                             size_t host,
                                             const char *params,
                                             size_t *out_id);

/**
 * # Safety
 * `e` is a live handle; `out_id` is valid for one write.
 */
enum HermitStatus hermit_create_baseline_index(const struct HermitEngine *e,
                                               size_t target,
                                               size_t *out_id);

/**
 * # Safety
 * `e` is a live handle; `out_id` is valid for one write.
 */
enum HermitStatus hermit_create_cm_index(const struct HermitEngine *e,
                                         size_t target,
                                         size_t host,
                                         double target_width,
                                         double host_width,
                                         size_t *out_id);

/**
 * Inserts one row of `len` values in schema order. NaN stands for null;
 * values of integer columns must be integral.
 *
 * # Safety
 * `e` is a live handle; `values` points to `len` readable doubles.
 */
enum HermitStatus hermit_insert(const struct HermitEngine *e, const double *values, size_t len);

/**
 * # Safety
 * `e` is a live handle.
 */
enum HermitStatus hermit_delete(const struct HermitEngine *e, int64_t key);

/**
 * Rows whose indexed column lies in `[lb, ub]`, through index `id`.
 *
 * # Safety
 * `e` is a live handle; `out` is valid for one write.
 */
enum HermitStatus hermit_lookup(const struct HermitEngine *e,
                                size_t id,
                                double lb,
                                double ub,
                                struct HermitResult **out);

/**
 * # Safety
 * `r` is null or a live result handle.
 */
size_t hermit_result_len(const struct HermitResult *r);

/**
 * Keys of the result, or null for an empty or null result. Valid until the
 * result is freed.
 *
 * # Safety
 * `r` is null or a live result handle.
 */
const int64_t *hermit_result_keys(const struct HermitResult *r);

/**
 * Candidates examined before validation.
 *
 * # Safety
 * `r` is null or a live result handle.
 */
size_t hermit_result_candidates(const struct HermitResult *r);

/**
 * # Safety
 * `r` is null or a result handle not yet freed.
 */
void hermit_result_free(struct HermitResult *r);

/**
 * Runs every queued reorganization task of every TRS-Tree.
 *
 * # Safety
 * `e` is a live handle; `out_tasks` is null or valid for one write.
 */
enum HermitStatus hermit_reorganize(const struct HermitEngine *e, size_t *out_tasks);

/**
 * Total accounted bytes of the table and all indexes.
 *
 * # Safety
 * `e` is a live handle; `out` is valid for one write.
 */
enum HermitStatus hermit_memory_total(const struct HermitEngine *e, size_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HERMIT_H */
