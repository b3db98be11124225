/*
 * dualpatch C API.
 *
 * Every function returns a dp_status; on failure dp_last_error() describes
 * the problem (thread-local, valid until the next call on the same thread).
 * Handles are opaque and owned by the caller; release them with the matching
 * *_free / *_close function. Passing NULL to a free function is a no-op.
 */
#ifndef DUALPATCH_H
#define DUALPATCH_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define DP_API __declspec(dllexport)
#else
#define DP_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dp_status {
  DP_OK = 0,
  DP_ERR_INVALID_ARGUMENT = 1,
  DP_ERR_CONFIG = 2,
  DP_ERR_IO = 3,
  DP_ERR_DETECTOR = 4,
  DP_ERR_NUMERIC = 5,
  DP_ERR_STATE = 6,
  DP_ERR_INTERNAL = 7
} dp_status;

typedef struct dp_shape dp_shape;
typedef struct dp_config dp_config;
typedef struct dp_dataset dp_dataset;
typedef struct dp_run dp_run;

typedef enum dp_log_level { DP_LOG_DEBUG = 0, DP_LOG_INFO = 1, DP_LOG_WARN = 2, DP_LOG_ERROR = 3 } dp_log_level;
typedef void (*dp_log_fn)(dp_log_level level, const char* message, void* user);

DP_API const char* dp_version(void);
DP_API const char* dp_status_string(dp_status status);
DP_API const char* dp_last_error(void);

/* Routes library log lines to fn; NULL silences logging. */
DP_API void dp_set_log_callback(dp_log_fn fn, void* user);

/* --- shapes ------------------------------------------------------------ */

/* radii[i], angles[i] (radians) for i < count. */
DP_API dp_status dp_shape_create(const double* radii, const double* angles, size_t count,
                                 dp_shape** out);
DP_API dp_status dp_shape_regular(size_t vertices, double area, dp_shape** out);
DP_API dp_status dp_shape_load(const char* path, dp_shape** out);
DP_API dp_status dp_shape_save(const dp_shape* shape, const char* path);
DP_API size_t dp_shape_vertex_count(const dp_shape* shape);
DP_API dp_status dp_shape_vertex(const dp_shape* shape, size_t index, double* radius,
                                 double* angle);
DP_API double dp_shape_area(const dp_shape* shape);
/* Returns a new handle scaled to the target area. */
DP_API dp_status dp_shape_normalize_area(const dp_shape* shape, double target, dp_shape** out);
/* Fills mask[y * width + x] with 0/1 for pixel centers inside the shape
 * placed in the square anchor (x, y, w, h). */
DP_API dp_status dp_shape_rasterize(const dp_shape* shape, double x, double y, double w,
                                    double h, int width, int height, uint8_t* mask);
DP_API void dp_shape_free(dp_shape* shape);

/* --- config ------------------------------------------------------------ */

DP_API dp_status dp_config_load(const char* path, dp_config** out);
/* base_dir resolves relative paths; NULL means the working directory. */
DP_API dp_status dp_config_parse(const char* json, const char* base_dir, dp_config** out);
DP_API dp_status dp_config_override_seed(dp_config* config, uint64_t seed);
/* Writes the 64-char hex digest plus NUL; buffer must hold 65 bytes. */
DP_API dp_status dp_config_hash(const dp_config* config, char* buffer, size_t size);
DP_API void dp_config_free(dp_config* config);

/* --- datasets ---------------------------------------------------------- */

/* Writes the synthetic dual-modal fixture set; manifest path copied into
 * manifest_out when non-NULL. */
DP_API dp_status dp_generate_fixtures(const char* out_dir, int frames, uint64_t seed,
                                      char* manifest_out, size_t manifest_size);
DP_API dp_status dp_dataset_load(const char* manifest, dp_dataset** out);
DP_API size_t dp_dataset_frame_count(const dp_dataset* dataset);
DP_API size_t dp_dataset_person_count(const dp_dataset* dataset);
DP_API void dp_dataset_free(dp_dataset* dataset);

/* --- runs -------------------------------------------------------------- */

/* out_dir NULL uses the config's output.dir; workers 0 uses all processors. */
DP_API dp_status dp_run_open(const dp_config* config, const char* out_dir, int workers,
                             int keep_going, dp_run** out);
DP_API dp_status dp_run_shape_search(dp_run* run);
DP_API dp_status dp_run_texture_opt(dp_run* run);
DP_API dp_status dp_run_eval(dp_run* run);
DP_API dp_status dp_run_report(dp_run* run);
DP_API dp_status dp_run_pipeline(dp_run* run);
DP_API void dp_run_close(dp_run* run);

/* --- metrics ----------------------------------------------------------- */

DP_API dp_status dp_asr(long n_clean, long n_patch, double* out);

#ifdef __cplusplus
}
#endif

#endif /* DUALPATCH_H */
