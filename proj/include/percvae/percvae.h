/* C interface to the persona CVAE library. Every call returns a status code;
 * on failure pcv_last_error() holds a message for the calling thread. Strings
 * returned through out-parameters are owned by the caller and released with
 * pcv_string_free(). */
#ifndef PERCVAE_H
#define PERCVAE_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define PCV_API __declspec(dllexport)
#else
#define PCV_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pcv_status {
    PCV_OK = 0,
    PCV_ERR_INVALID_ARGUMENT = 1,
    PCV_ERR_IO = 2,
    PCV_ERR_PARSE = 3,
    PCV_ERR_CONFIG = 4,
    PCV_ERR_LOAD = 5,
    PCV_ERR_DIVERGENCE = 6,
    PCV_ERR_INVALID_REQUEST = 7,
    PCV_ERR_UNDEFINED_METRIC = 8,
    PCV_ERR_INTERNAL = 9
} pcv_status;

typedef struct pcv_model pcv_model;
typedef struct pcv_server pcv_server;

typedef void (*pcv_progress_fn)(size_t step, double total, double recon_per_token, double kl, double anneal_weight,
                                void* user);

PCV_API const char* pcv_version(void);
PCV_API const char* pcv_last_error(void);
PCV_API const char* pcv_status_name(pcv_status status);
PCV_API void pcv_string_free(char* s);

/* data_format is "jsonl" or "convai2"; NULL uses the config's data_format. */
PCV_API pcv_status pcv_train(const char* config_path, const char* data_path, const char* data_format,
                             const char* out_dir, pcv_progress_fn progress, void* user);

PCV_API pcv_status pcv_model_load(const char* checkpoint_path, pcv_model** out);
PCV_API void pcv_model_free(pcv_model* model);
PCV_API pcv_status pcv_model_info_json(const pcv_model* model, char** out_json);

/* Request and response bodies follow the /api/generate JSON schemas. */
PCV_API pcv_status pcv_generate_json(const pcv_model* model, const char* request_json, char** out_json);

/* Generates max(ns) responses per turn of the data file and reports each N.
 * Either output pointer may be NULL. */
PCV_API pcv_status pcv_evaluate(const pcv_model* model, const char* data_path, const char* data_format,
                                const int* ns, size_t ns_count, uint64_t seed, int sds, int fds,
                                char** out_report_json, char** out_table);

/* Background server; port 0 picks a free port, reported by pcv_server_port. */
PCV_API pcv_status pcv_server_start(const pcv_model* model, const char* host, int port, pcv_server** out);
PCV_API int pcv_server_port(const pcv_server* server);
PCV_API void pcv_server_stop(pcv_server* server);

/* Serves on the calling thread until the process is terminated. */
PCV_API pcv_status pcv_serve(const pcv_model* model, const char* host, int port);

#ifdef __cplusplus
}
#endif

#endif
