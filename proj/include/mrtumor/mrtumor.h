/* C interface to the mrtumor library.
 *
 * All objects are opaque handles released with the matching *_free call.
 * Functions return MRT_OK or an error status; mrt_last_error() gives the
 * message for the most recent failure on the calling thread. */
#ifndef MRTUMOR_MRTUMOR_H
#define MRTUMOR_MRTUMOR_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define MRT_API __declspec(dllexport)
#else
#define MRT_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mrt_status {
  MRT_OK = 0,
  MRT_BAD_MAGIC = 1,
  MRT_UNSUPPORTED_DATATYPE = 2,
  MRT_TRUNCATED_FILE = 3,
  MRT_BAD_HEADER = 4,
  MRT_NON_FINITE = 5,
  MRT_IO_FAILURE = 6,
  MRT_INVALID_ARGUMENT = 7,
  MRT_INVALID_SPEC = 8,
  MRT_DIMENSION_MISMATCH = 9,
  MRT_BAD_DIMS = 10,
  MRT_WRONG_SLICE_COUNT = 11,
  MRT_DEGENERATE_INPUT = 12,
  MRT_SINGLE_CLASS = 13,
  MRT_EMPTY_COUNTS = 14,
  MRT_NO_POSITIVES = 15,
  MRT_NO_NEGATIVES = 16,
  MRT_MISSING_MODEL = 17,
  MRT_MISSING_TEMPLATE = 18,
  MRT_CONFIG_INVALID = 19,
  MRT_BAD_MODEL = 20,
  MRT_INTERNAL = 99
} mrt_status;

typedef struct mrt_volume mrt_volume;
typedef struct mrt_config mrt_config;
typedef struct mrt_svm mrt_svm;
typedef struct mrt_forest mrt_forest;

typedef void (*mrt_log_fn)(const char* line, void* user);

MRT_API const char* mrt_version(void);
MRT_API const char* mrt_status_name(mrt_status s);
MRT_API const char* mrt_last_error(void);

/* Log sink for progress and timing lines. NULL restores stderr. */
MRT_API void mrt_set_log_callback(mrt_log_fn fn, void* user);

/* Volumes. Data is x-fastest float32. */
MRT_API mrt_status mrt_volume_create(int64_t nx, int64_t ny, int64_t nz, const float pixdim[3], mrt_volume** out);
MRT_API mrt_status mrt_volume_read(const char* path, mrt_volume** out);
MRT_API mrt_status mrt_volume_parse(const uint8_t* bytes, size_t size, mrt_volume** out);
MRT_API mrt_status mrt_volume_write(const mrt_volume* v, const char* path);
MRT_API mrt_status mrt_volume_dims(const mrt_volume* v, int64_t dims[3]);
MRT_API float* mrt_volume_data(mrt_volume* v);
MRT_API void mrt_volume_free(mrt_volume* v);

MRT_API mrt_status mrt_ncc(const double* f, const double* g, size_t n, double* out);

/* Pipeline configuration. json may be NULL or "" for defaults. */
MRT_API mrt_status mrt_config_create(const char* json, mrt_config** out);
MRT_API mrt_status mrt_config_load(const char* path, mrt_config** out);
MRT_API mrt_status mrt_config_set_seed(mrt_config* c, uint64_t seed);
MRT_API mrt_status mrt_config_set_workers(mrt_config* c, int workers);
/* Sets data, model and output directories to <root>/data, <root>/models, <root>/out. */
MRT_API mrt_status mrt_config_set_root(mrt_config* c, const char* root);
MRT_API mrt_status mrt_config_set_output_dir(mrt_config* c, const char* dir);
/* Returns the effective config as JSON; the string lives until the next call on c. */
MRT_API const char* mrt_config_json(mrt_config* c);
MRT_API void mrt_config_free(mrt_config* c);

/* Stage commands. `patients` is "test", "train" or "all" (NULL means "test"). */
MRT_API mrt_status mrt_cmd_phantom(const mrt_config* c);
MRT_API mrt_status mrt_cmd_train(const mrt_config* c);
MRT_API mrt_status mrt_cmd_classify(const mrt_config* c, const char* patients);
MRT_API mrt_status mrt_cmd_segment(const mrt_config* c, const char* patients);
MRT_API mrt_status mrt_cmd_evaluate(const mrt_config* c);
MRT_API mrt_status mrt_cmd_pipeline(const mrt_config* c);
MRT_API mrt_status mrt_cmd_sweep(const mrt_config* c, double* threshold, int* patch_min_count);

/* Trained models. */
MRT_API mrt_status mrt_svm_load(const char* path, mrt_svm** out);
MRT_API mrt_status mrt_svm_decision(const mrt_svm* m, const double* x, size_t n, double* out);
MRT_API void mrt_svm_free(mrt_svm* m);

MRT_API mrt_status mrt_forest_load(const char* path, mrt_forest** out);
/* Sets *cls to 1 (tumor) or 0 (clean) and *votes to the tumor vote count. */
MRT_API mrt_status mrt_forest_predict(const mrt_forest* f, const double* x, size_t n, int* cls, int* votes);
MRT_API void mrt_forest_free(mrt_forest* f);

#ifdef __cplusplus
}
#endif

#endif
