#ifndef FUSIONLAB_H
#define FUSIONLAB_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes returned by every `fl_*` function.
 */
typedef enum FlStatus {
  FL_STATUS_OK = 0,
  FL_STATUS_NULL_POINTER = 1,
  FL_STATUS_INVALID_ARGUMENT = 2,
  FL_STATUS_IO = 3,
  FL_STATUS_FORMAT = 4,
  FL_STATUS_SHAPE = 5,
  FL_STATUS_MODALITY = 6,
  FL_STATUS_DATA = 7,
  FL_STATUS_BUFFER_TOO_SMALL = 8,
  FL_STATUS_INTERNAL = 9,
} FlStatus;

/**
 * A loaded or generated corpus.
 */
typedef struct FlCorpus FlCorpus;

/**
 * A fusion model together with its optional input standardizer.
 */
typedef struct FlModel FlModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Valid until the next `fl_*` call.
 */
const char *fl_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *fl_version(void);

/**
 * Number of risk classes; probability rows have this many columns.
 */
size_t fl_num_classes(void);

/**
 * Reads a corpus CSV.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum FlStatus fl_corpus_load(const char *path, struct FlCorpus **out);

/**
 * Generates the synthetic complementary-modalities corpus.
 *
 * # Safety
 * `out` must be a writable pointer.
 */
enum FlStatus fl_corpus_generate(size_t n_per_class,
                                 size_t d_text,
                                 size_t d_image,
                                 double separation,
                                 double sigma,
                                 double labeled_fraction,
                                 uint64_t seed,
                                 struct FlCorpus **out);

/**
 * Writes a corpus CSV atomically.
 *
 * # Safety
 * `corpus` must come from this library and `path` must be NUL-terminated.
 */
enum FlStatus fl_corpus_save(const struct FlCorpus *corpus, const char *path);

/**
 * Record count and embedding widths. Any output pointer may be null.
 *
 * # Safety
 * `corpus` must come from this library; non-null outputs must be writable.
 */
enum FlStatus fl_corpus_shape(const struct FlCorpus *corpus,
                              size_t *n_records,
                              size_t *d_text,
                              size_t *d_image);

/**
 * Writes 1-based labels into `labels[0..n_records]`; unlabeled records get 0.
 *
 * # Safety
 * `labels` must point to `len` writable bytes.
 */
enum FlStatus fl_corpus_labels(const struct FlCorpus *corpus, uint8_t *labels, size_t len);

/**
 * Releases a corpus. Null is ignored.
 *
 * # Safety
 * `corpus` must come from this library and not be used afterwards.
 */
void fl_corpus_free(struct FlCorpus *corpus);

/**
 * Trains a fusion model on the labeled, image-bearing records of `corpus`.
 *
 * `adagrad` selects the Adagrad preset instead of Adam; `max_epochs` of 0
 * keeps the default.
 *
 * # Safety
 * `corpus` must come from this library and `out` must be writable.
 */
enum FlStatus fl_model_train(const struct FlCorpus *corpus,
                             uint64_t seed,
                             bool adagrad,
                             size_t max_epochs,
                             struct FlModel **out);

/**
 * Loads a model file and, when `standardizer_path` is non-null, the JSON
 * standardizer written next to it by `fusionlab train`.
 *
 * # Safety
 * `model_path` must be NUL-terminated, `standardizer_path` null or NUL-terminated.
 */
enum FlStatus fl_model_load(const char *model_path,
                            const char *standardizer_path,
                            struct FlModel **out);

/**
 * Writes the model file, and the standardizer JSON when `standardizer_path` is non-null.
 *
 * # Safety
 * `model` must come from this library; paths must be NUL-terminated or null where allowed.
 */
enum FlStatus fl_model_save(const struct FlModel *model,
                            const char *model_path,
                            const char *standardizer_path);

/**
 * Class probabilities for every record, row-major into `probs[0..n * 3]`.
 *
 * # Safety
 * `probs` must point to `len` writable doubles.
 */
enum FlStatus fl_model_predict_proba(const struct FlModel *model,
                                     const struct FlCorpus *corpus,
                                     double *probs,
                                     size_t len);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void fl_model_free(struct FlModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FUSIONLAB_H */
