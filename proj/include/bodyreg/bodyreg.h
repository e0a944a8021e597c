#ifndef BODYREG_BODYREG_H
#define BODYREG_BODYREG_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  ifdef BODYREG_BUILD
#    define BODYREG_API __declspec(dllexport)
#  else
#    define BODYREG_API __declspec(dllimport)
#  endif
#else
#  define BODYREG_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Every call returns one of these. On failure bodyreg_last_error() holds a
   message for the calling thread until its next failing call. */
typedef enum bodyreg_status {
  BODYREG_OK = 0,
  BODYREG_E_INVALID_ARGUMENT = 1,
  BODYREG_E_MALFORMED = 2,
  BODYREG_E_UNSUPPORTED_CODEC = 3,
  BODYREG_E_LENGTH_MISMATCH = 4,
  BODYREG_E_SCHEMA = 5,
  BODYREG_E_NOT_NORMALIZED = 6,
  BODYREG_E_IO = 7,
  BODYREG_E_DEGENERATE_ORIENTATION = 8,
  BODYREG_E_MISSING_GEOMETRY = 9,
  BODYREG_E_EMPTY_SERIES = 10,
  BODYREG_E_EMPTY_COHORT = 11,
  BODYREG_E_EMPTY_IMAGE = 12,
  BODYREG_E_EMPTY_CLASS = 13,
  BODYREG_E_EMPTY_MATRIX = 14,
  BODYREG_E_DEGENERATE_TABLE = 15,
  BODYREG_E_PARAMS_OUT_OF_RANGE = 16,
  BODYREG_E_BACKEND_FAILURE = 17,
  BODYREG_E_INVALID_PARAMS = 18,
  BODYREG_E_UNKNOWN_FACTOR = 19,
  BODYREG_E_INVALID_SPEC = 20,
  BODYREG_E_MISSING_PATIENT_ID = 21,
  BODYREG_E_INTERNAL = 100
} bodyreg_status;

BODYREG_API const char* bodyreg_version(void);
BODYREG_API const char* bodyreg_status_name(int status);
BODYREG_API const char* bodyreg_last_error(void);
/* Strings handed out by the library. NULL is ignored. */
BODYREG_API void bodyreg_string_free(char* s);

/* ---- configuration ---------------------------------------------------- */

typedef struct bodyreg_config bodyreg_config;

BODYREG_API int bodyreg_config_create(bodyreg_config** out);
BODYREG_API void bodyreg_config_destroy(bodyreg_config* config);
/* Overlay the keys of a JSON object (file or text) onto the config. */
BODYREG_API int bodyreg_config_load(bodyreg_config* config, const char* path);
BODYREG_API int bodyreg_config_apply_json(bodyreg_config* config, const char* json);
BODYREG_API int bodyreg_config_dump(const bodyreg_config* config, char** json);

/* ---- cohorts ---------------------------------------------------------- */

typedef struct bodyreg_cohort bodyreg_cohort;

/* Unreadable files are recorded, not fatal; see bodyreg_cohort_write_skipped. */
BODYREG_API int bodyreg_cohort_ingest(const char* dir, bodyreg_cohort** out);
BODYREG_API int bodyreg_cohort_read(const char* ndjson_path, bodyreg_cohort** out);
BODYREG_API void bodyreg_cohort_destroy(bodyreg_cohort* cohort);

BODYREG_API size_t bodyreg_cohort_study_count(const bodyreg_cohort* cohort);
BODYREG_API size_t bodyreg_cohort_series_count(const bodyreg_cohort* cohort);
BODYREG_API size_t bodyreg_cohort_image_count(const bodyreg_cohort* cohort);
BODYREG_API size_t bodyreg_cohort_skipped_count(const bodyreg_cohort* cohort);

BODYREG_API int bodyreg_cohort_write(const bodyreg_cohort* cohort, const char* ndjson_path);
BODYREG_API int bodyreg_cohort_write_skipped(const bodyreg_cohort* cohort, const char* csv_path);

/* Inclusion rules from the config. The per-item decisions go to report_csv. */
BODYREG_API int bodyreg_cohort_filter(const bodyreg_cohort* cohort, const bodyreg_config* config,
                                      const char* report_csv, bodyreg_cohort** out);
/* One study per patient, chosen with the stream derived from seed. */
BODYREG_API int bodyreg_cohort_dedupe(const bodyreg_cohort* cohort, uint64_t seed, bodyreg_cohort** out);

/* ---- pipeline stages (file to file) ----------------------------------- */

/* Box labels to a per-image truth CSV. warnings receives one line per
   unlabelled series (may be NULL). */
BODYREG_API int bodyreg_labels_project(const bodyreg_cohort* cohort, const char* label_file, const char* truth_csv,
                                       size_t* labelled, char** warnings);

BODYREG_API int bodyreg_partition(const bodyreg_cohort* cohort, const char* truth_csv, double ratio,
                                  const char* split_csv);

/* Centroid models centroid_ct.json / centroid_mr.json in out_dir, trained on
   the Train rows of split_csv, or on every labelled study when it is NULL. */
BODYREG_API int bodyreg_train(const bodyreg_cohort* cohort, const char* truth_csv, const char* split_csv,
                              const char* out_dir);

/* scores_ct.csv / scores_mr.csv in out_dir. The centroid backend reads its
   models from model_dir; the scores backend re-validates the configured
   score file against the cohort. */
BODYREG_API int bodyreg_classify(const bodyreg_cohort* cohort, const bodyreg_config* config, const char* model_dir,
                                 const char* out_dir);

BODYREG_API int bodyreg_postprocess(const bodyreg_cohort* cohort, const bodyreg_config* config,
                                    const char* const* score_paths, size_t score_count, const char* results_ndjson);

/* evaluation.json plus report/ in out_dir. split_csv may be NULL. */
BODYREG_API int bodyreg_evaluate(const bodyreg_cohort* cohort, const bodyreg_config* config,
                                 const char* results_ndjson, const char* truth_csv, const char* split_csv,
                                 const char* out_dir);

enum { BODYREG_REPORT_CSV = 1, BODYREG_REPORT_MARKDOWN = 2 };

/* Re-renders the report tables stored in an evaluation.json. */
BODYREG_API int bodyreg_report(const char* evaluation_json, const char* out_dir, int formats);

/* Rewrites BodyPartExamined per accepted series. out_dir NULL edits in place. */
BODYREG_API int bodyreg_tag_write(const bodyreg_cohort* cohort, const char* results_ndjson, int dry_run,
                                  const char* out_dir, const char* log_csv);

/* Full pipeline. summary_json (may be NULL) receives per-modality counts. */
BODYREG_API int bodyreg_run(const bodyreg_config* config, const char* input_dir, const char* label_file,
                            const char* out_dir, char** summary_json);

/* ---- utilities -------------------------------------------------------- */

BODYREG_API int bodyreg_sample_size(double p, double confidence, double relative_error, double deff, uint64_t* n,
                                    double* raw);
BODYREG_API int bodyreg_implied_design_effect(double target, double p, double confidence, double relative_error,
                                              double* deff);

/* Single phantom from a JSON spec; files land in out_dir with labels.json. */
BODYREG_API int bodyreg_phantom(const char* spec_json, const char* out_dir);
BODYREG_API int bodyreg_phantom_cohort(size_t studies, uint64_t seed, double mr_fraction, double noise,
                                       const char* out_dir);

#ifdef __cplusplus
}
#endif

#endif
