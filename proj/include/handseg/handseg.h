/* handseg: online hand-gesture segmentation and recognition, C interface.
 *
 * Every fallible call returns an hs_status. On failure the message of the
 * last error on the calling thread is available from hs_last_error().
 * Handles are opaque; release each with its *_free function (NULL is a
 * no-op). Strings returned by accessors stay valid until the owning handle
 * is freed.
 */
#ifndef HANDSEG_H
#define HANDSEG_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define HS_API __declspec(dllexport)
#else
#define HS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum hs_status {
  HS_OK = 0,
  HS_ERR_FILE_NOT_FOUND = 1,
  HS_ERR_PARSE = 2,
  HS_ERR_INVARIANT = 3,
  HS_ERR_IO = 4,
  HS_ERR_CONFIG = 5,
  HS_ERR_SHAPE = 6,
  HS_ERR_SPEC = 7,
  HS_ERR_OUT_OF_RANGE = 8,
  HS_ERR_SEQUENCE_TOO_SHORT = 9,
  HS_ERR_EMPTY_CORPUS = 10,
  HS_ERR_SINGLE_SUBJECT = 11,
  HS_ERR_INVALID_MOR = 12,
  HS_ERR_INVALID_FPS = 13,
  HS_ERR_NO_GROUND_TRUTH = 14,
  HS_ERR_NO_MATCHES = 15,
  HS_ERR_INTERNAL = 16,
  HS_ERR_INVALID_ARGUMENT = 17
} hs_status;

typedef struct hs_config hs_config;         /* key = value settings */
typedef struct hs_sequence hs_sequence;     /* one pose stream with annotations */
typedef struct hs_corpus hs_corpus;         /* ordered list of sequences */
typedef struct hs_model hs_model;           /* trained parameters */
typedef struct hs_stream hs_stream;         /* online recognizer state */
typedef struct hs_detections hs_detections; /* detections grouped by sequence id */
typedef struct hs_report hs_report;         /* evaluation results */

HS_API const char* hs_version(void);
HS_API const char* hs_status_string(hs_status status);
HS_API const char* hs_last_error(void);

/* ---- configuration ---------------------------------------------------- */

HS_API hs_status hs_config_create(hs_config** out);
HS_API hs_status hs_config_load(const char* path, hs_config** out);
HS_API hs_status hs_config_parse(const char* text, hs_config** out);
/* Replaces every entry for `key`. */
HS_API hs_status hs_config_set(hs_config* cfg, const char* key, const char* value);
HS_API size_t hs_config_size(const hs_config* cfg);
HS_API hs_status hs_config_entry(const hs_config* cfg, size_t index, const char** key, const char** value);
HS_API void hs_config_free(hs_config* cfg);

/* Training configuration with defaults filled in (for manifests). */
HS_API hs_status hs_train_config_resolve(const hs_config* train, hs_config** out);

/* ---- sequences and corpora -------------------------------------------- */

typedef struct hs_annotation {
  int label;
  int64_t start_frame;
  int64_t end_frame; /* inclusive */
  const char* category;
} hs_annotation;

/* format: "canonical", "shrec22" or "shrec19"; adapter may be NULL for canonical. */
HS_API hs_status hs_sequence_load(const char* path, const char* format, const hs_config* adapter,
                                  hs_sequence** out);
HS_API hs_status hs_sequence_save(const hs_sequence* seq, const char* path);
HS_API int64_t hs_sequence_frames(const hs_sequence* seq);
HS_API int hs_sequence_joints(const hs_sequence* seq);
HS_API double hs_sequence_fps(const hs_sequence* seq);
HS_API const char* hs_sequence_id(const hs_sequence* seq);
/* Copies frame `index` as x, y, z per joint into `xyz` (capacity `n` doubles). */
HS_API hs_status hs_sequence_frame(const hs_sequence* seq, int64_t index, double* xyz, size_t n);
HS_API size_t hs_sequence_annotation_count(const hs_sequence* seq);
HS_API hs_status hs_sequence_annotation(const hs_sequence* seq, size_t index, hs_annotation* out);
HS_API void hs_sequence_free(hs_sequence* seq);

/* Synthetic corpus from a generator config; n < 0 uses its `sequences` key. */
HS_API hs_status hs_corpus_generate(const hs_config* synth, int n, hs_corpus** out);
/* Writes the class dictionary implied by a generator config. */
HS_API hs_status hs_synth_write_dictionary(const hs_config* synth, const char* path);
/* Loads every *.seq file of a directory in name order. */
HS_API hs_status hs_corpus_load_dir(const char* dir, hs_corpus** out);
HS_API hs_status hs_corpus_load_files(const char* const* paths, size_t n, const char* format,
                                      const hs_config* adapter, hs_corpus** out);
/* Writes one canonical file per sequence, named after its sanitized id. */
HS_API hs_status hs_corpus_write_dir(const hs_corpus* corpus, const char* dir);
HS_API size_t hs_corpus_size(const hs_corpus* corpus);
/* Borrowed; valid while the corpus lives. NULL if out of range. */
HS_API const hs_sequence* hs_corpus_sequence(const hs_corpus* corpus, size_t index);
/* policy: "by_index" or "by_subject". */
HS_API hs_status hs_corpus_split(const hs_corpus* corpus, const char* policy, uint64_t seed,
                                 double train_fraction, hs_corpus** train, hs_corpus** test);
HS_API void hs_corpus_free(hs_corpus* corpus);

/* ---- training ---------------------------------------------------------- */

typedef struct hs_epoch_info {
  int epoch;
  double total_loss;
  double head_loss[5]; /* sdn, fine, start, end, gc */
  double window_accuracy;
  double val_accuracy; /* -1 without a validation split */
  double seconds;
} hs_epoch_info;

typedef void (*hs_epoch_callback)(const hs_epoch_info* info, void* user);

typedef struct hs_train_summary {
  int epochs;
  int best_epoch;
  double best_val_accuracy;
  double seconds;
} hs_train_summary;

/* Trains on the whole corpus and returns the best-validation parameters.
 * `log_csv` (optional) receives the per-epoch log. */
HS_API hs_status hs_train(const hs_corpus* corpus, const hs_config* train, hs_epoch_callback on_epoch,
                          void* user, const char* log_csv, hs_model** out, hs_train_summary* summary);

HS_API hs_status hs_model_load(const char* path, hs_model** out);
HS_API hs_status hs_model_save(const hs_model* model, const char* path);
HS_API int hs_model_window(const hs_model* model);
HS_API int hs_model_joints(const hs_model* model);
HS_API int hs_model_classes(const hs_model* model);
HS_API size_t hs_model_parameter_count(const hs_model* model);
HS_API void hs_model_free(hs_model* model);

/* ---- online inference -------------------------------------------------- */

typedef struct hs_detection {
  int label;
  int64_t pred_start;
  int64_t pred_end;
  int64_t first_emit;
} hs_detection;

typedef struct hs_step_result {
  int64_t frame;
  int preliminary; /* -1 until the first window is full */
  int label;       /* -1 during warm-up (2W - 1 frames) */
  int closed;      /* 1 if `detection` holds a detection closed by this frame */
  hs_detection detection;
} hs_step_result;

/* attribution: "center", "window_start" or "emit_frame" (NULL = center).
 * The model must outlive the stream. */
HS_API hs_status hs_stream_create(const hs_model* model, const char* attribution, hs_stream** out);
/* `xyz` holds 3 * joints doubles. */
HS_API hs_status hs_stream_step(hs_stream* stream, const double* xyz, size_t n, hs_step_result* out);
/* Closes the open detection, if any (*closed = 0 otherwise). */
HS_API hs_status hs_stream_finish(hs_stream* stream, int* closed, hs_detection* out);
HS_API void hs_stream_free(hs_stream* stream);

HS_API hs_status hs_detections_create(hs_detections** out);
HS_API hs_status hs_detections_add(hs_detections* set, const char* sequence_id, const hs_detection* det);
/* Reads a detection file, or every file of a directory, appending. */
HS_API hs_status hs_detections_read(hs_detections* set, const char* path);
HS_API hs_status hs_detections_write(const hs_detections* set, const char* path);
HS_API size_t hs_detections_count(const hs_detections* set);
HS_API void hs_detections_free(hs_detections* set);

/* ---- evaluation -------------------------------------------------------- */

typedef struct hs_eval_options {
  const char* protocol; /* "shrec22" (default) or "shrec19" */
  double mor;           /* in (0, 1] */
  double fps;           /* shrec19 rule */
  const char* strategy; /* "max_cardinality" (default) or "greedy" */
  const double* mor_sweep;
  size_t mor_sweep_count; /* 0 = 0.05, 0.10, ..., 1.00 */
  const char* dictionary; /* optional class dictionary file */
} hs_eval_options;

HS_API void hs_eval_options_default(hs_eval_options* opts);

typedef struct hs_report_summary {
  int64_t gestures;
  int64_t matched;
  int64_t false_positives;
  double dr, dr_std;
  double fp, fp_std;
  double ji, ji_std;
  int has_delay;
  double delay_mean;
  double delay_median;
} hs_report_summary;

/* Ground truth is taken from the corpus annotations, matched by sequence id. */
HS_API hs_status hs_evaluate(const hs_corpus* ground_truth, const hs_detections* detections,
                             const hs_eval_options* opts, hs_report** out);
HS_API hs_status hs_report_summary_get(const hs_report* report, hs_report_summary* out);
/* kind: "aggregate", "per_sequence", "per_class", "per_category" or "ji_curve". */
HS_API hs_status hs_report_write_csv(const hs_report* report, const char* kind, const char* path);
HS_API void hs_report_free(hs_report* report);

#ifdef __cplusplus
}
#endif

#endif /* HANDSEG_H */
