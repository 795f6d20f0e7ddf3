#ifndef CITEFN_H
#define CITEFN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CitefnStatus {
  CITEFN_STATUS_OK = 0,
  CITEFN_STATUS_NULL_POINTER = 1,
  CITEFN_STATUS_INVALID_UTF8 = 2,
  CITEFN_STATUS_INVALID_JSON = 3,
  CITEFN_STATUS_INVALID_INPUT = 4,
  CITEFN_STATUS_CONFLICT = 5,
  CITEFN_STATUS_INCOMPLETE = 6,
  CITEFN_STATUS_UNKNOWN_ITEM = 7,
  CITEFN_STATUS_PANIC = 99,
} CitefnStatus;

typedef enum CitefnAnswerKind {
  CITEFN_ANSWER_KIND_BOOLEAN = 0,
  CITEFN_ANSWER_KIND_TEXT = 1,
  CITEFN_ANSWER_KIND_STRING_ARRAY = 2,
} CitefnAnswerKind;

/*
 Opaque evaluation matrix for one gold/machine pair.
 */
typedef struct CitefnEvaluation CitefnEvaluation;

/*
 Opaque statement template registry.
 */
typedef struct CitefnRegistry CitefnRegistry;

typedef struct CitefnCounts {
  uint64_t tp;
  uint64_t fp;
  uint64_t tn;
  uint64_t fn_;
} CitefnCounts;

typedef struct CitefnMetrics {
  double precision;
  double recall;
  double f1;
  double hallucination_rate;
} CitefnMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread, or NULL. Free it with
 `citefn_string_free`.
 */
char *citefn_last_error_message(void);

/*
 Releases a string returned by this library.

 # Safety
 `s` must be NULL or a pointer obtained from this library, freed once.
 */
void citefn_string_free(char *s);

/*
 Library version, static storage.
 */
const char *citefn_version(void);

/*
 Extracts plain text from JATS XML. `params_json` may be NULL for the
 defaults (tables and figure text kept; front/back matter and headers
 dropped).

 # Safety
 String arguments must be NULL or valid NUL-terminated strings; `out_text`
 must be writable.
 */
enum CitefnStatus citefn_extract_text(const char *xml, const char *params_json, char **out_text);

/*
 The shipped template registry. Never NULL.
 */
struct CitefnRegistry *citefn_registry_builtin(void);

/*
 # Safety
 `json` must be a valid string; `out` must be writable.
 */
enum CitefnStatus citefn_registry_from_json(const char *json, struct CitefnRegistry **out);

/*
 # Safety
 `reg` must be NULL or a live handle from this library.
 */
void citefn_registry_free(struct CitefnRegistry *reg);

/*
 Renders the context statement for an identifier given as JSON
 (`accession`, `identifier_class`, `source_db`, `metadata`).

 # Safety
 `reg` must be a live handle; strings valid; `out` writable.
 */
enum CitefnStatus citefn_build_statement(const struct CitefnRegistry *reg,
                                         const char *identifier_json,
                                         char **out);

/*
 Auto-matches a consensus record against a machine record.

 # Safety
 Strings valid; `out` writable.
 */
enum CitefnStatus citefn_evaluation_new(const char *gold_json,
                                        const char *machine_json,
                                        struct CitefnEvaluation **out);

/*
 # Safety
 `ev` must be NULL or a live handle from this library.
 */
void citefn_evaluation_free(struct CitefnEvaluation *ev);

/*
 Unresolved values as a JSON array.

 # Safety
 `ev` live; `out` writable.
 */
enum CitefnStatus citefn_evaluation_unresolved_json(const struct CitefnEvaluation *ev, char **out);

/*
 The whole matrix as JSON.

 # Safety
 `ev` live; `out` writable.
 */
enum CitefnStatus citefn_evaluation_matrix_json(const struct CitefnEvaluation *ev, char **out);

/*
 Applies one reviewer submission (`pair_id`, `verdicts`, `aggregations`).
 On any error the evaluation is left unchanged.

 # Safety
 `ev` live; `adjudication_json` valid.
 */
enum CitefnStatus citefn_evaluation_apply(struct CitefnEvaluation *ev,
                                          const char *adjudication_json);

/*
 Number of values still waiting for a reviewer.

 # Safety
 `ev` must be NULL or live; NULL gives 0.
 */
size_t citefn_evaluation_unresolved_count(const struct CitefnEvaluation *ev);

/*
 Confusion counts per category, written to `out[0]` (data accessed),
 `out[1]` (use cases) and `out[2]` (tools). Fails with
 `CITEFN_STATUS_INCOMPLETE` while values are unresolved.

 # Safety
 `ev` live; `out` points to three writable `CitefnCounts`.
 */
enum CitefnStatus citefn_evaluation_score(const struct CitefnEvaluation *ev,
                                          struct CitefnCounts *out);

struct CitefnMetrics citefn_compute_metrics(struct CitefnCounts counts);

/*
 Prices are per 1,000 tokens and must be non-negative.

 # Safety
 `out_total` writable.
 */
enum CitefnStatus citefn_estimate_cost(uint64_t pair_count,
                                       uint64_t median_input_tokens,
                                       uint64_t median_output_tokens,
                                       double input_price,
                                       double output_price,
                                       double *out_total);

/*
 Parses a model reply; the answer is written as JSON (`true`, a string, or
 an array of strings).

 # Safety
 `raw` valid; `out_json` writable.
 */
enum CitefnStatus citefn_parse_answer(const char *raw, enum CitefnAnswerKind kind, char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CITEFN_H */
