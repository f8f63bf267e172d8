/* C interface to the uiclab library. Every function returning uiclab_status
 * leaves a human-readable message in uiclab_last_error() on failure. Objects
 * are opaque handles released with the matching *_free function; strings
 * returned through char** are released with uiclab_string_free. */
#ifndef UICLAB_H
#define UICLAB_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define UICLAB_API __declspec(dllexport)
#else
#define UICLAB_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum uiclab_status {
    UICLAB_OK = 0,
    UICLAB_ERR_INVALID_ARGUMENT = 1,
    UICLAB_ERR_FORMAT = 2,
    UICLAB_ERR_CONFIG = 3,
    UICLAB_ERR_SHAPE = 4,
    UICLAB_ERR_CONTRACT = 5,
    UICLAB_ERR_NUMERIC = 6,
    UICLAB_ERR_IO = 7,
    UICLAB_ERR_INTERNAL = 8
} uiclab_status;

typedef enum uiclab_log_level {
    UICLAB_LOG_DEBUG = 0,
    UICLAB_LOG_INFO = 1,
    UICLAB_LOG_WARN = 2,
    UICLAB_LOG_ERROR = 3,
    UICLAB_LOG_SILENT = 4
} uiclab_log_level;

typedef struct uiclab_config uiclab_config;
typedef struct uiclab_dataset uiclab_dataset;
typedef struct uiclab_encoder uiclab_encoder;

UICLAB_API const char* uiclab_version(void);
UICLAB_API const char* uiclab_status_name(uiclab_status status);
/* Message of the most recent failure on the calling thread ("" if none). */
UICLAB_API const char* uiclab_last_error(void);
UICLAB_API void uiclab_set_log_level(uiclab_log_level level);
UICLAB_API void uiclab_string_free(char* s);

/* Configuration */
UICLAB_API uiclab_status uiclab_config_default(uiclab_config** out);
UICLAB_API uiclab_status uiclab_config_load(const char* path, uiclab_config** out);
UICLAB_API uiclab_status uiclab_config_parse(const char* text, uiclab_config** out);
UICLAB_API void uiclab_config_free(uiclab_config* config);
UICLAB_API uiclab_status uiclab_config_emit(const uiclab_config* config, char** out_text);
UICLAB_API uiclab_status uiclab_config_set_seed(uiclab_config* config, uint64_t seed);
UICLAB_API uiclab_status uiclab_config_get_seed(const uiclab_config* config, uint64_t* seed);
UICLAB_API uiclab_status uiclab_config_set_output_dir(uiclab_config* config, const char* dir);
/* "uic" or "deepcluster" */
UICLAB_API uiclab_status uiclab_config_set_method(uiclab_config* config, const char* method);
UICLAB_API uiclab_status uiclab_config_set_threads(uiclab_config* config, size_t threads);

/* Experiments; all outputs go to the configured output directory. */
UICLAB_API uiclab_status uiclab_train(const uiclab_config* config);
UICLAB_API uiclab_status uiclab_evaluate(const uiclab_config* config, const char* checkpoint_path);
UICLAB_API uiclab_status uiclab_compare(const uiclab_config* config);
UICLAB_API uiclab_status uiclab_generate_data(const uiclab_config* config);

/* Datasets. labels_path may be NULL. */
UICLAB_API uiclab_status uiclab_dataset_load_idx(const char* images_path, const char* labels_path, uiclab_dataset** out);
UICLAB_API void uiclab_dataset_free(uiclab_dataset* dataset);
UICLAB_API uiclab_status uiclab_dataset_shape(const uiclab_dataset* dataset, size_t* n, size_t* channels, size_t* height,
                                              size_t* width);
/* Copies image `index` (C*H*W values in [0,1]) into `out`. */
UICLAB_API uiclab_status uiclab_dataset_image(const uiclab_dataset* dataset, size_t index, double* out, size_t out_len);
/* Writes the truth label of `index`; UICLAB_ERR_INVALID_ARGUMENT if unlabelled. */
UICLAB_API uiclab_status uiclab_dataset_label(const uiclab_dataset* dataset, size_t index, int32_t* label);

/* Encoders (checkpoints) */
UICLAB_API uiclab_status uiclab_encoder_load(const char* checkpoint_path, uiclab_encoder** out);
UICLAB_API uiclab_status uiclab_encoder_save(const uiclab_encoder* encoder, const char* checkpoint_path);
UICLAB_API void uiclab_encoder_free(uiclab_encoder* encoder);
UICLAB_API uiclab_status uiclab_encoder_dims(const uiclab_encoder* encoder, size_t* channels, size_t* height, size_t* width,
                                             size_t* embedding_dim, size_t* num_classes);
/* images: n*C*H*W values. embeddings (n*d) and logits (n*k) may each be NULL. */
UICLAB_API uiclab_status uiclab_encoder_forward(const uiclab_encoder* encoder, const double* images, size_t n,
                                                double* embeddings, double* logits);

/* Metrics */
UICLAB_API uiclab_status uiclab_nmi(const int32_t* a, const int32_t* b, size_t n, double* out);

#ifdef __cplusplus
}
#endif

#endif
