#ifndef CSTREE_H
#define CSTREE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes of every fallible call.
 */
typedef enum CstreeStatus {
  CSTREE_STATUS_OK = 0,
  CSTREE_STATUS_NULL_POINTER = 1,
  CSTREE_STATUS_INVALID_UTF8 = 2,
  CSTREE_STATUS_PARSE = 3,
  CSTREE_STATUS_INVALID = 4,
  CSTREE_STATUS_UNDEFINED = 5,
  CSTREE_STATUS_UNSUPPORTED = 6,
  CSTREE_STATUS_PANIC = 7,
} CstreeStatus;

/**
 * Counts over the variables of the tree they were read against.
 */
typedef struct CstreeTable CstreeTable;

/**
 * A CStree.
 */
typedef struct CstreeTree CstreeTree;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *cstree_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *cstree_version(void);

/**
 * Releases a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void cstree_string_free(char *s);

/**
 * Parses a tree from its JSON form.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum CstreeStatus cstree_tree_from_json(const char *json, struct CstreeTree **out);

/**
 * Serializes a tree to JSON.
 *
 * # Safety
 * `tree` must be a live handle; `out` must be writable.
 */
enum CstreeStatus cstree_tree_to_json(const struct CstreeTree *tree, char **out);

/**
 * Releases a tree. NULL is ignored.
 *
 * # Safety
 * `tree` must come from this library and not have been freed.
 */
void cstree_tree_free(struct CstreeTree *tree);

/**
 * Number of variables and total number of stages.
 *
 * # Safety
 * `tree` must be a live handle; the out-pointers must be writable.
 */
enum CstreeStatus cstree_tree_shape(const struct CstreeTree *tree,
                                    size_t *variables,
                                    size_t *stages);

/**
 * Minimal contexts as a JSON array of `{variable: label}` objects.
 *
 * # Safety
 * `tree` must be a live handle; `out` must be writable.
 */
enum CstreeStatus cstree_minimal_contexts_json(const struct CstreeTree *tree, char **out);

/**
 * Context graphs of the minimal contexts in Graphviz DOT.
 *
 * # Safety
 * `tree` must be a live handle; `out` must be writable.
 */
enum CstreeStatus cstree_context_graphs_dot(const struct CstreeTree *tree, char **out);

/**
 * Whether two trees over the same variables are statistically
 * equivalent.
 *
 * # Safety
 * Both handles must be live; `out` must be writable.
 */
enum CstreeStatus cstree_equivalent(const struct CstreeTree *a,
                                    const struct CstreeTree *b,
                                    bool *out);

/**
 * Reads CSV text (header row of variable names, optional `count`
 * column) against the variables of `tree`.
 *
 * # Safety
 * `tree` must be a live handle, `csv` NUL-terminated, `out` writable.
 */
enum CstreeStatus cstree_table_from_csv(const struct CstreeTree *tree,
                                        const char *csv,
                                        struct CstreeTable **out);

/**
 * Reads CSV text, inferring variables and sorted outcome labels.
 *
 * # Safety
 * `csv` must be NUL-terminated and `out` writable.
 */
enum CstreeStatus cstree_table_from_csv_inferred(const char *csv, struct CstreeTable **out);

/**
 * Total number of observations in a table.
 *
 * # Safety
 * `table` must be a live handle; `out` must be writable.
 */
enum CstreeStatus cstree_table_n(const struct CstreeTable *table, uint64_t *out);

/**
 * Releases a table. NULL is ignored.
 *
 * # Safety
 * `table` must come from this library and not have been freed.
 */
void cstree_table_free(struct CstreeTable *table);

/**
 * BIC of a tree at its maximum likelihood estimate. Fails with
 * `UNDEFINED` when a stage has no observations.
 *
 * # Safety
 * Both handles must be live; `out` must be writable.
 */
enum CstreeStatus cstree_bic(const struct CstreeTree *tree,
                             const struct CstreeTable *table,
                             double *out);

/**
 * Learns a tree by backward hill climbing. With `order` NULL every
 * ordering is tried (at most 8 variables); otherwise `order` is a
 * comma-separated list of variable names.
 *
 * # Safety
 * `table` must be a live handle, `order` NULL or NUL-terminated, `out`
 * writable.
 */
enum CstreeStatus cstree_learn(const struct CstreeTable *table,
                               const char *order,
                               struct CstreeTree **out);

/**
 * Number of binary CStrees on `p` variables as a decimal string.
 *
 * # Safety
 * `out` must be writable.
 */
enum CstreeStatus cstree_count_cstrees(size_t p, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CSTREE_H */
