#ifndef PURRFESSOR_H
#define PURRFESSOR_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum PfStatus {
  PF_STATUS_OK = 0,
  PF_STATUS_NULL_POINTER = 1,
  PF_STATUS_INVALID_ARGUMENT = 2,
  PF_STATUS_INSUFFICIENT_DATA = 3,
  PF_STATUS_DEGENERATE = 4,
  PF_STATUS_NUMERIC = 5,
  PF_STATUS_PARSE = 6,
  PF_STATUS_IO = 7,
  PF_STATUS_BUFFER_TOO_SMALL = 8,
  PF_STATUS_PANIC = 99,
} PfStatus;

/**
 * Distance metric for Krippendorff's alpha.
 */
typedef enum PfMetric {
  PF_METRIC_INTERVAL = 0,
  PF_METRIC_ORDINAL = 1,
  PF_METRIC_NOMINAL = 2,
} PfMetric;

/**
 * Overlap rate definition.
 */
typedef enum PfOverlapMode {
  PF_OVERLAP_MODE_RECALL = 0,
  PF_OVERLAP_MODE_JACCARD = 1,
} PfOverlapMode;

/**
 * Seeded block randomizer over the experiment conditions.
 */
typedef struct PfAssigner PfAssigner;

/**
 * Food vocabulary used for term extraction.
 */
typedef struct PfLexicon PfLexicon;

/**
 * Study definition: questionnaires, scales, covariates.
 */
typedef struct PfStudy PfStudy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *pf_version(void);

/**
 * Copies the calling thread's last error message into `buf` (truncated,
 * always NUL-terminated when `len > 0`). Returns the full message length
 * excluding the NUL; 0 when there is no error.
 *
 * # Safety
 * `buf` must be valid for `len` bytes or null with `len == 0`.
 */
size_t pf_last_error(char *buf, size_t len);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void pf_string_free(char *s);

/**
 * Cronbach's alpha of a row-major `rows × cols` (respondents × items)
 * matrix.
 *
 * # Safety
 * `data` must hold `rows * cols` doubles; `out` must be writable.
 */
enum PfStatus pf_cronbach_alpha(const double *data, size_t rows, size_t cols, double *out);

/**
 * Krippendorff's alpha over a row-major `units × coders` matrix; NaN marks
 * a missing rating.
 *
 * # Safety
 * `data` must hold `units * coders` doubles; `out` must be writable.
 */
enum PfStatus pf_krippendorff_alpha(const double *data,
                                    size_t units,
                                    size_t coders,
                                    enum PfMetric metric,
                                    double *out);

/**
 * Least squares fit of `y` on the row-major `n × p` design `x` (include an
 * intercept column yourself). Writes `p` estimates and standard errors and
 * the residual degrees of freedom. `se` and `df_resid` may be null.
 *
 * # Safety
 * `x` must hold `n * p` doubles, `y` `n`, `coef` (and `se` if non-null) `p`.
 */
enum PfStatus pf_ols(const double *x,
                     size_t n,
                     size_t p,
                     const double *y,
                     double *coef,
                     double *se,
                     size_t *df_resid);

/**
 * Two-sided p-value of a t statistic.
 *
 * # Safety
 * `out` must be writable.
 */
enum PfStatus pf_t_two_sided_p(double t, double df, double *out);

/**
 * Upper tail of the F distribution.
 *
 * # Safety
 * `out` must be writable.
 */
enum PfStatus pf_f_sf(double f, double d1, double d2, double *out);

/**
 * Number of experiment conditions.
 */
size_t pf_condition_count(void);

/**
 * Writes the `profile:model` label of condition `index` into `buf`.
 *
 * # Safety
 * `buf` must be valid for `len` bytes.
 */
enum PfStatus pf_condition_label(size_t index, char *buf, size_t len);

/**
 * Creates an assigner; `draws` replays that many earlier draws so a
 * restarted service continues the same sequence.
 *
 * # Safety
 * `out` must be writable.
 */
enum PfStatus pf_assigner_new(uint64_t seed, uint64_t draws, struct PfAssigner **out);

/**
 * Draws the next condition; writes its index (see [`pf_condition_label`]).
 *
 * # Safety
 * `assigner` must come from [`pf_assigner_new`]; `index` must be writable.
 */
enum PfStatus pf_assigner_next(struct PfAssigner *assigner, size_t *index);

/**
 * # Safety
 * `assigner` must come from [`pf_assigner_new`] and not be used afterwards.
 */
void pf_assigner_free(struct PfAssigner *assigner);

/**
 * The built-in lexicon, or one parsed from `text` when it is non-null.
 *
 * # Safety
 * `text` must be null or NUL-terminated; `out` must be writable.
 */
enum PfStatus pf_lexicon_new(const char *text, struct PfLexicon **out);

/**
 * Overlap between the food terms found in `response` and the
 * newline-separated `reference` terms.
 *
 * # Safety
 * Strings must be NUL-terminated; `lexicon` from [`pf_lexicon_new`].
 */
enum PfStatus pf_overlap(const struct PfLexicon *lexicon,
                         const char *response,
                         const char *reference,
                         enum PfOverlapMode mode,
                         double *out);

/**
 * # Safety
 * `lexicon` must come from [`pf_lexicon_new`] and not be used afterwards.
 */
void pf_lexicon_free(struct PfLexicon *lexicon);

/**
 * The built-in study, or one loaded from the TOML file at `path` when it
 * is non-null.
 *
 * # Safety
 * `path` must be null or NUL-terminated; `out` must be writable.
 */
enum PfStatus pf_study_new(const char *path, struct PfStudy **out);

/**
 * Scale summaries (JSON) for participant records given as JSON lines.
 *
 * # Safety
 * `study` from [`pf_study_new`]; `participants` NUL-terminated; the string
 * written to `out` must be released with [`pf_string_free`].
 */
enum PfStatus pf_study_scales_json(const struct PfStudy *study,
                                   const char *participants,
                                   char **out);

/**
 * Regression of every outcome (JSON) for participant records given as
 * JSON lines.
 *
 * # Safety
 * As for [`pf_study_scales_json`].
 */
enum PfStatus pf_study_regression_json(const struct PfStudy *study,
                                       const char *participants,
                                       bool passed_only,
                                       char **out);

/**
 * # Safety
 * `study` must come from [`pf_study_new`] and not be used afterwards.
 */
void pf_study_free(struct PfStudy *study);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PURRFESSOR_H */
