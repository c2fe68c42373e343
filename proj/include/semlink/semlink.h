/* SPDX-License-Identifier: Apache-2.0 */

/*
 * C interface to the semlink library.
 *
 * Objects are opaque handles released with their matching *_free function.
 * Every fallible call returns a semlink_status; on failure the message and
 * error kind of the most recent error on the calling thread are available
 * from semlink_last_error() and semlink_last_error_kind(). Strings returned
 * through char** out-parameters are heap-allocated and must be released with
 * semlink_string_free().
 */

#ifndef SEMLINK_SEMLINK_H
#define SEMLINK_SEMLINK_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define SEMLINK_API __declspec(dllexport)
#else
#define SEMLINK_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum semlink_status {
  SEMLINK_OK = 0,
  SEMLINK_E_USAGE = 1,   /* invalid argument, option or configuration */
  SEMLINK_E_DATA = 2,    /* unreadable, malformed or inconsistent input */
  SEMLINK_E_NUMERIC = 3, /* non-finite loss during training */
  SEMLINK_E_INTERNAL = 4
} semlink_status;

typedef struct semlink_samples semlink_samples;
typedef struct semlink_inventory semlink_inventory;
typedef struct semlink_model semlink_model;

/* Receives one progress line; `user` is passed through unchanged. */
typedef void (*semlink_progress_fn)(const char* line, void* user);

SEMLINK_API const char* semlink_version(void);
SEMLINK_API const char* semlink_last_error(void);
/* Library error kind of the last failure, e.g. "missing_binding". */
SEMLINK_API const char* semlink_last_error_kind(void);
SEMLINK_API void semlink_string_free(char* s);

/* FNV-1a 64 digest of a file's bytes as 16 hex digits. */
SEMLINK_API semlink_status semlink_file_digest(const char* path, char** hex);

/* ---- samples (tab-separated, one pair per line) ---- */

SEMLINK_API semlink_status semlink_samples_load(const char* path, semlink_samples** out);
SEMLINK_API semlink_status semlink_samples_save(const semlink_samples* s, const char* path);
SEMLINK_API size_t semlink_samples_size(const semlink_samples* s);
SEMLINK_API semlink_status semlink_samples_get(const semlink_samples* s, size_t index,
                                               char** source, char** target);
SEMLINK_API void semlink_samples_free(semlink_samples* s);

/* All 20910 SCAN commands with their action sequences, sorted by command. */
SEMLINK_API semlink_status semlink_scan_generate(semlink_samples** out);

/* ---- concept inventories (key-value records separated by blank lines) ---- */

SEMLINK_API semlink_status semlink_scan_inventory(size_t num_primitives,
                                                  size_t variants_per_primitive,
                                                  semlink_inventory** out);
SEMLINK_API semlink_status semlink_inventory_load(const char* path, semlink_inventory** out);
SEMLINK_API semlink_status semlink_inventory_save(const semlink_inventory* inv,
                                                  const char* path);
SEMLINK_API size_t semlink_inventory_size(const semlink_inventory* inv);
SEMLINK_API void semlink_inventory_free(semlink_inventory* inv);

/* ---- augmentation ---- */

/* scheme: "il" | "dl"; level: "standard" | "difficult" | "challenging".
 * Writes the augmented training set, the replacement test set and the
 * builder counts as JSON. */
SEMLINK_API semlink_status semlink_augment(const semlink_samples* base,
                                           const semlink_inventory* inv, const char* scheme,
                                           const char* level, semlink_samples** train,
                                           semlink_samples** test, char** meta_json);

SEMLINK_API semlink_status semlink_replacement_test(const semlink_samples* base,
                                                    const semlink_inventory* inv,
                                                    semlink_samples** out);

/* Derives samples and an inventory from a variable-annotated text-to-SQL
 * corpus. preset: "geo" | "adv". num_primitives keeps the first hypernym
 * classes of the preset (0 keeps all); variants_per_primitive overrides the
 * preset's sampling (0 keeps the preset value). */
SEMLINK_API semlink_status semlink_derive_sql(const char* corpus_path, const char* preset,
                                              size_t num_primitives,
                                              size_t variants_per_primitive,
                                              semlink_samples** samples,
                                              semlink_inventory** inv);

/* Identity entity rules for every bound entity of a corpus, masked against
 * the source vocabulary of `base`. */
SEMLINK_API semlink_status semlink_entity_rules(const char* corpus_path,
                                                const semlink_samples* base,
                                                semlink_samples** rules);

/* ---- models ---- */

/* config_json overlays the desk configuration; it may name a "preset"
 * ("desk" | "full"). NULL or "" uses the desk configuration as is.
 * `progress` may be NULL. */
SEMLINK_API semlink_status semlink_model_train(const semlink_samples* train,
                                               const char* config_json,
                                               semlink_progress_fn progress, void* user,
                                               semlink_model** out);
/* Returns the configuration semlink_model_train would use, fully resolved. */
SEMLINK_API semlink_status semlink_model_config_resolve(const char* config_json,
                                                        char** resolved_json);
SEMLINK_API semlink_status semlink_model_save(const semlink_model* m, const char* path);
SEMLINK_API semlink_status semlink_model_load(const char* path, semlink_model** out);
SEMLINK_API semlink_status semlink_model_config(const semlink_model* m, char** config_json);
SEMLINK_API size_t semlink_model_parameter_count(const semlink_model* m);
/* Greedy predictions for every source of `data`, one line per sample:
 * "source<TAB>prediction". max_len <= 0 picks twice the longest target in
 * `data` plus two. */
SEMLINK_API semlink_status semlink_model_predict(const semlink_model* m,
                                                 const semlink_samples* data, int max_len,
                                                 char** predictions_tsv);
/* Token accuracy, sequence accuracy and gold-fed loss as JSON. */
SEMLINK_API semlink_status semlink_model_evaluate(const semlink_model* m,
                                                  const semlink_samples* data, int max_len,
                                                  char** metrics_json);
SEMLINK_API void semlink_model_free(semlink_model* m);

/* ---- evaluation ---- */

/* Scores a prediction file against a gold file line by line. A line with a
 * tab contributes its second column, otherwise the whole line. */
SEMLINK_API semlink_status semlink_score_files(const char* pred_path, const char* gold_path,
                                               char** scores_json);

/* Validates a plan and returns it fully resolved as JSON. */
SEMLINK_API semlink_status semlink_plan_resolve(const char* plan_json, char** resolved_json);
/* Resolves a sweep file into its list of plans as a JSON array. */
SEMLINK_API semlink_status semlink_sweep_resolve(const char* sweep_json, char** plans_json);

/* Runs one plan; returns the report body. */
SEMLINK_API semlink_status semlink_run_plan(const char* plan_json,
                                            semlink_progress_fn progress, void* user,
                                            char** report_json);

/* Runs a sweep with up to `jobs` plans at once and writes the CSV table.
 * Returns SEMLINK_OK when the sweep itself ran; the per-plan outcome list
 * (JSON) tells which plans failed. */
SEMLINK_API semlink_status semlink_sweep(const char* sweep_json, int jobs,
                                         const char* table_path,
                                         semlink_progress_fn progress, void* user,
                                         char** outcomes_json);

#ifdef __cplusplus
}
#endif

#endif /* SEMLINK_SEMLINK_H */
