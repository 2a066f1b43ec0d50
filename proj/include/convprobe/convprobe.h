#ifndef CONVPROBE_H
#define CONVPROBE_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define CP_API __declspec(dllexport)
#else
#define CP_API __attribute__((visibility("default")))
#endif

typedef enum cp_status {
  CP_OK = 0,
  CP_INVALID_ARGUMENT = 1,
  CP_SHAPE_MISMATCH = 2,
  CP_BAD_MAGIC = 3,
  CP_TRUNCATED = 4,
  CP_SPEC_MISMATCH = 5,
  CP_IO_ERROR = 6,
  CP_DATA_ERROR = 7,
  CP_DIVERGENCE = 8,
  CP_DEGENERATE = 9,
  CP_INTERNAL = 10
} cp_status;

typedef struct cp_config cp_config;
typedef struct cp_network cp_network;

/* Receives one progress line at a time. */
typedef void (*cp_log_fn)(const char* line, void* user);

CP_API const char* cp_version(void);
CP_API const char* cp_status_name(cp_status status);

/* Message of the most recent failure on the calling thread ("" if none). */
CP_API const char* cp_last_error(void);

/* Process-wide progress logger; NULL disables logging. */
CP_API void cp_set_log(cp_log_fn fn, void* user);

/* Strings returned through char** are owned by the caller. */
CP_API void cp_free_string(char* s);

/* ---- Configuration ---- */

CP_API cp_status cp_config_default(cp_config** out);
CP_API cp_status cp_config_load(const char* path, cp_config** out);
CP_API cp_status cp_config_parse(const char* json, cp_config** out);
/* Sets a dotted key such as "train.base_lr" to a JSON value ("0.01", "\"fc6-2\"", "true"). */
CP_API cp_status cp_config_set(cp_config* config, const char* key, const char* json_value);
CP_API cp_status cp_config_to_json(const cp_config* config, char** out);
CP_API void cp_config_free(cp_config* config);

/* ---- Pipeline ---- */

/* Writes out_dir/manifest.csv (with fold column) and out_dir/mean.txt. With no
   manifest configured a synthetic two-class dataset is generated first. */
CP_API cp_status cp_prepare_data(const cp_config* config, const char* out_dir, char** manifest_path);

/* Trains the source network on the synthetic pretext task; writes out_dir/pretrained.nsrg. */
CP_API cp_status cp_pretrain(const cp_config* config, const char* out_dir);

/* Runs the configured cross-validated experiment (or probe) into out_dir/<name>/.
   Means are NaN when unavailable. Either pointer may be NULL. */
CP_API cp_status cp_run_experiment(const cp_config* config, const char* out_dir, double* mean_single,
                                   double* mean_oversampled);

/* Accuracy and confusion counts (row = true label, column = prediction,
   negative first) of a saved model on every image of a manifest. */
CP_API cp_status cp_evaluate(const cp_config* config, const char* checkpoint_path, const char* manifest_path,
                             int oversample, double* accuracy, int64_t confusion[4]);

/* Writes out_dir/report.md and out_dir/report.csv from completed experiments. */
CP_API cp_status cp_report(const char* out_dir);

/* ---- Networks ---- */

CP_API cp_status cp_network_load(const char* path, cp_network** out);
/* Fresh randomly initialized network: "reference" or "small" with top_units outputs. */
CP_API cp_status cp_network_create(const char* kind, int top_units, uint64_t seed, cp_network** out);
CP_API int64_t cp_network_param_count(const cp_network* net);
CP_API cp_status cp_network_describe(const cp_network* net, char** out);
/* Applies a surgery preset; the result is a new network. */
CP_API cp_status cp_network_apply_preset(const cp_network* net, const char* preset, uint64_t seed, cp_network** out,
                                         char** report);
CP_API cp_status cp_network_save(const cp_network* net, const char* path);
CP_API void cp_network_free(cp_network* net);

#ifdef __cplusplus
}
#endif

#endif
