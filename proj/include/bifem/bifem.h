/* C interface to the Born-Infeld solver library. */
#ifndef BIFEM_H
#define BIFEM_H

#include <stddef.h>

#if defined(_WIN32)
#define BIFEM_API __declspec(dllexport)
#else
#define BIFEM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum bifem_status {
  BIFEM_OK = 0,
  BIFEM_INVALID_ARGUMENT = 1,
  BIFEM_INVALID_GEOMETRY = 2,
  BIFEM_DOMAIN_ERROR = 3,
  BIFEM_POINT_LOCATION = 4,
  BIFEM_MOLLIFICATION_RADIUS = 5,
  BIFEM_GRADIENT_UNDEFINED = 6,
  BIFEM_CONVERGENCE_FAILURE = 7,
  BIFEM_INVALID_PROBLEM = 8,
  BIFEM_SPACELIKE_VIOLATION = 9,
  BIFEM_PICARD_STALL = 10,
  BIFEM_IO_ERROR = 11,
  BIFEM_CONFIG_ERROR = 12,
  BIFEM_USAGE_ERROR = 13,
  BIFEM_INTERNAL_ERROR = 99
} bifem_status;

typedef struct bifem_config bifem_config;
typedef struct bifem_result bifem_result;

/* Short snake_case name of a status ("ok", "spacelike_violation", ...). */
BIFEM_API const char* bifem_status_name(int status);
/* Message of the last failure on the calling thread; empty after success. */
BIFEM_API const char* bifem_last_error(void);
BIFEM_API const char* bifem_version(void);

/* 0 restores the default (BIFEM_THREADS, else hardware concurrency). */
BIFEM_API bifem_status bifem_set_threads(int n);
/* trace, debug, info, warn, error, off. Logs go to stderr. */
BIFEM_API bifem_status bifem_set_log_level(const char* level);

BIFEM_API bifem_status bifem_config_load(const char* path, bifem_config** out);
BIFEM_API bifem_status bifem_config_parse(const char* json_text, bifem_config** out);
BIFEM_API void bifem_config_free(bifem_config* config);
BIFEM_API bifem_status bifem_config_set_seed(bifem_config* config, unsigned long long seed);
BIFEM_API bifem_status bifem_config_set_h(bifem_config* config, double h);
/* Normalized JSON text; owned by the config, valid until the next call on it. */
BIFEM_API const char* bifem_config_json(bifem_config* config);

/* Solves and writes the result bundle into out_dir. */
BIFEM_API bifem_status bifem_solve(const bifem_config* config, const char* out_dir, bifem_result** out);
BIFEM_API void bifem_result_free(bifem_result* result);
BIFEM_API size_t bifem_result_node_count(const bifem_result* result);
/* Copies up to `capacity` nodes; xy holds 2*capacity doubles. Returns the count copied. */
BIFEM_API size_t bifem_result_nodes(const bifem_result* result, double* xy, size_t capacity);
BIFEM_API size_t bifem_result_values(const bifem_result* result, double* u, size_t capacity);
BIFEM_API double bifem_result_energy(const bifem_result* result);
BIFEM_API int bifem_result_iterations(const bifem_result* result);
/* Report JSON (solver summary and diagnostics); owned by the result. */
BIFEM_API const char* bifem_result_report(const bifem_result* result);

/* Command wrappers used by the CLI. A NULL or "-" output path means stdout. */
BIFEM_API bifem_status bifem_cmd_solve(const char* config_path, const char* out_dir, int has_seed,
                                       unsigned long long seed);
BIFEM_API bifem_status bifem_cmd_diagnose(const char* bundle_dir, const char* diagnostics_config_path,
                                          const char* report_path);
BIFEM_API bifem_status bifem_cmd_oracle(double a, int m, double r_min, double r_max, int n, const char* out_path);
BIFEM_API bifem_status bifem_cmd_convergence(const char* config_path, const double* hs, size_t count,
                                             const char* out_dir);
BIFEM_API bifem_status bifem_cmd_mollify(const char* config_path, double epsilon, const char* out_path);

#ifdef __cplusplus
}
#endif

#endif
