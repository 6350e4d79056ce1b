#ifndef FDAUDIT_H
#define FDAUDIT_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes returned by every fallible call. */
typedef enum fda_status {
  FDA_OK = 0,
  FDA_ERR_NUMERIC = 1,    /* computation failed: rank deficiency, divergence */
  FDA_ERR_VALIDATION = 2, /* inputs violate a documented precondition */
  FDA_ERR_IO = 3,         /* file unreadable */
  FDA_ERR_USAGE = 4       /* null handle, unknown command, malformed JSON */
} fda_status;

typedef struct fda_dataset fda_dataset; /* opaque: loaded, validated panel */
typedef struct fda_result fda_result;   /* opaque: finished analysis report */

/* Library version, e.g. "0.1.0".  Static storage; do not free. */
const char* fda_version(void);

/* Explanation of the most recent failure on the calling thread.  Valid until
 * the next fdaudit call on the same thread; do not free. */
const char* fda_last_error(void);

/* Loads a delimited panel file (comma or tab, header row).  options_json
 * maps column roles:
 *   {"unit":"state","period":"year","y":"emp","d":"exposure",
 *    "z":"iv","weight":"pop","cluster":"region"}
 * z / weight / cluster are optional roles; pass NULL or "{}" to use the
 * default headers (unit, period, y, d). */
fda_status fda_dataset_load(const char* path, const char* options_json,
                            fda_dataset** out);

/* Same, from an in-memory buffer of `len` bytes. */
fda_status fda_dataset_load_buffer(const char* data, size_t len,
                                   const char* options_json,
                                   fda_dataset** out);

/* Panel shape, for callers that branch on it.  Null arguments are skipped. */
fda_status fda_dataset_shape(const fda_dataset* ds, int* n_units,
                             int* n_periods, int* n_clusters);

void fda_dataset_free(fda_dataset* ds);

/* Runs one analysis on a loaded panel.  command:
 *   "balance"   slope of the treatment change on its baseline level
 *   "estimate"  first-difference OLS of the outcome change
 *   "decompose" variance weights attaching the slope to the two periods
 *   "weights"   within-bin treatment-level weight curves
 *   "ddml"      cross-fitted level-adjusted slope with a naive comparison
 *   "stack"     pooled multi-period version of "ddml"
 *   "placebo"   lagged outcome change regressed on the current treatment change
 * options_json (NULL = all defaults) recognizes:
 *   "pair": [p1, p2]        consecutive period values (default: last pair)
 *   "learner": "lasso" | "mlp" | "poly-ols"
 *   "degree": int, "lasso-penalty": "plugin" | "cv:K" | "fixed:L",
 *   "post-lasso": bool, "mlp-hidden": [ints], "mlp-iters": int,
 *   "mlp-rate": num, "folds": int, "seed": int, "alpha": num,
 *   "threads": int, "conditioning": "d1" | "d0d1",
 *   "hausman": "bootstrap" | "influence", "bootstrap": int,
 *   "d1-bins": int, "x-grid": int, "use-instrument": bool, "vcov": "cr1"|"cr0"
 * On FDA_OK, *out owns the report. */
fda_status fda_analyze(const fda_dataset* ds, const char* command,
                       const char* options_json, fda_result** out);

/* Simulation entry point; no dataset required.  config_text describes the
 * generating process (key = value lines; see the config reference in the
 * user guide).  options_json:
 *   {"action":"draw", "seed": int}                     one panel, CSV payload
 *   {"action":"oracle", "oracle":"ovb" | "path-weights" | "beta-d1" |
 *    "placebo", "reps": int, "tolerance": num, "rejection-bound": num,
 *    "folds": int, "threads": int, "keep-estimates": bool,
 *    "seed": int, plus the learner keys listed above}  replication study */
fda_status fda_simulate(const char* config_text, const char* options_json,
                        fda_result** out);

/* UTF-8 JSON document.  Owned by the result; do not free. */
const char* fda_result_json(const fda_result* result);

/* Flat CSV rendering, or "" when the command has no tabular shape. */
const char* fda_result_csv(const fda_result* result);

void fda_result_free(fda_result* result);

#ifdef __cplusplus
}
#endif

#endif /* FDAUDIT_H */
