#ifndef CLADECAST_H
#define CLADECAST_H

/* C interface to the cladecast pipeline. A pipeline is opened from a JSON
 * config document and exposes one entry point per stage; every call is
 * synchronous and reports failure through a status code plus a per-handle
 * error message. */

#ifdef _WIN32
#define CLADECAST_API __declspec(dllexport)
#else
#define CLADECAST_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cladecast_status {
    CLADECAST_OK = 0,
    CLADECAST_ERR_ARGUMENT = 1, /* null handle / null input */
    CLADECAST_ERR_CONFIG = 2,   /* config document rejected */
    CLADECAST_ERR_RUNTIME = 3,  /* stage failed; see cladecast_last_error */
} cladecast_status;

typedef struct cladecast_pipeline cladecast_pipeline;

CLADECAST_API const char* cladecast_version(void);

/* Opens a pipeline from a JSON config document. Returns NULL on failure;
 * when err is non-NULL it receives a malloc'd message to release with
 * cladecast_string_free. */
CLADECAST_API cladecast_pipeline* cladecast_pipeline_open(const char* config_json, char** err);
CLADECAST_API void cladecast_pipeline_close(cladecast_pipeline* p);

/* Message from the most recent failing call on this handle ("" if none).
 * Owned by the handle; valid until the next call on it. */
CLADECAST_API const char* cladecast_last_error(const cladecast_pipeline* p);

/* Normalized effective config as JSON; malloc'd, release with
 * cladecast_string_free. */
CLADECAST_API char* cladecast_config_json(const cladecast_pipeline* p);

CLADECAST_API cladecast_status cladecast_run_simulate(cladecast_pipeline* p);
CLADECAST_API cladecast_status cladecast_run_build(cladecast_pipeline* p);
CLADECAST_API cladecast_status cladecast_run_fit(cladecast_pipeline* p);
CLADECAST_API cladecast_status cladecast_run_predict(cladecast_pipeline* p);
CLADECAST_API cladecast_status cladecast_run_score(cladecast_pipeline* p);
CLADECAST_API cladecast_status cladecast_run_report(cladecast_pipeline* p);

/* Rehashes recorded artifacts, logging one line each to stdout; *problems
 * receives the number of missing or altered files. */
CLADECAST_API cladecast_status cladecast_run_verify(cladecast_pipeline* p, int* problems);

CLADECAST_API void cladecast_string_free(char* s);

#ifdef __cplusplus
}
#endif

#endif /* CLADECAST_H */
