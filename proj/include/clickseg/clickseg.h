/* C interface to the clickseg library.
 *
 * Every function returns a cseg_status; on failure a human-readable message
 * is available from cseg_last_error() on the calling thread until the next
 * call. Strings returned through `char**` are heap-allocated and must be
 * released with cseg_string_free(). Handles are opaque and owned by the
 * caller.
 *
 * Functions taking `options_json` accept a JSON object; the recognised keys
 * are listed next to each function. Unknown keys are rejected.
 */
#ifndef CLICKSEG_CLICKSEG_H
#define CLICKSEG_CLICKSEG_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define CSEG_API __declspec(dllexport)
#else
#define CSEG_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cseg_status {
  CSEG_OK = 0,
  CSEG_ERR_INVALID_ARGUMENT = 1,
  CSEG_ERR_IO = 2,
  CSEG_ERR_FORMAT = 3,
  CSEG_ERR_SHAPE = 4,
  CSEG_ERR_NOT_FOUND = 5,
  CSEG_ERR_ALREADY_CORRECT = 6,
  CSEG_ERR_NUMERIC = 7,
  CSEG_ERR_STATE = 8,
  CSEG_ERR_INTERNAL = 9
} cseg_status;

CSEG_API const char* cseg_last_error(void);
CSEG_API const char* cseg_status_name(cseg_status status);
CSEG_API const char* cseg_version(void);
CSEG_API void cseg_string_free(char* s);

/* Directory holding the bundled asset pack (fg/ and bg/ subdirectories). */
CSEG_API const char* cseg_default_asset_dir(void);

/* ---- models ------------------------------------------------------------ */

typedef struct cseg_model cseg_model;

/* config_json may be NULL for the default toy configuration. */
CSEG_API cseg_status cseg_model_create(const char* config_json, uint64_t seed, cseg_model** out);
CSEG_API cseg_status cseg_model_load(const char* path, cseg_model** out);
CSEG_API cseg_status cseg_model_save(const cseg_model* model, const char* path);
/* {"config": {...}, "parameters": n, "meta": {...}} */
CSEG_API cseg_status cseg_model_info(const cseg_model* model, char** json_out);
CSEG_API void cseg_model_free(cseg_model* model);

/* ---- clicks ------------------------------------------------------------ */

/* Next simulated click for a row-major prediction (values in [0,1], scored at
 * 0.5) against a binary ground truth (nonzero = foreground).
 * Returns CSEG_ERR_ALREADY_CORRECT when nothing is mislabeled. */
CSEG_API cseg_status cseg_next_click(const float* pred, const uint8_t* gt, int height, int width, int* x, int* y,
                                     int* positive);

/* Same, from mask files; writes {"x","y","pos","k"}. */
CSEG_API cseg_status cseg_simulate_click_files(const char* pred_path, const char* gt_path, int ordinal,
                                               char** click_json_out);

/* ---- inference ----------------------------------------------------------- */

/* Runs the model on an image with a click list (JSON array of
 * {"x","y","pos"[,"k"]}) and an optional previous mask, and writes the soft
 * mask PNG. guided != 0 applies the guided filter (radius, eps) afterwards. */
CSEG_API cseg_status cseg_refine(const cseg_model* model, const char* image_path, const char* clicks_json,
                                 const char* prev_mask_path, int guided, int radius, double eps,
                                 const char* out_mask_path);

/* Guided-filter refinement of a mask PNG with an image (or gray) guide. */
CSEG_API cseg_status cseg_guided_filter_files(const char* mask_path, const char* guide_path, int radius,
                                              double eps, const char* out_mask_path);

/* ---- synthetic data ------------------------------------------------------ */

/* options: fg, bg (directories; default: bundled pack), n, seed, out
 * (manifest path), render (optional output dataset directory), crop,
 * scale_min, scale_max, flip_probability. Writes {"samples": n, ...}. */
CSEG_API cseg_status cseg_synthgen(const char* options_json, char** summary_json_out);

/* Writes a procedural asset pack (dir/fg, dir/bg). */
CSEG_API cseg_status cseg_write_asset_pack(const char* dir, int fg_count, int bg_count, int size, uint64_t seed);

/* ---- training ------------------------------------------------------------ */

typedef void (*cseg_log_fn)(const char* json_line, void* user);

/* options: manifest (required), fg, bg, mode ("iterative"|"bundled"),
 * clicks, epochs, seed, out (checkpoint path, required), lr, milestones,
 * lr_factor, crop, augment, resume (checkpoint to start from), log (JSONL
 * path), model (net config object), model_seed.
 * log_fn (optional) receives each progress line. */
CSEG_API cseg_status cseg_train(const char* options_json, cseg_log_fn log_fn, void* user,
                                char** summary_json_out);

/* ---- benchmark ------------------------------------------------------------ */

/* options: dataset (directory) or manifest (+ fg, bg); ckpt or external
 * (command line of an external segmenter); clicks, thresholds, guided,
 * seed, workers, method, out (report JSON path), csv (curves CSV path).
 * Writes the report JSON. */
CSEG_API cseg_status cseg_bench(const char* options_json, char** report_json_out);

/* SVG with one curve per report file. */
CSEG_API cseg_status cseg_report_plot(const char* const* report_paths, size_t count, const char* out_svg_path);

/* ---- service ---------------------------------------------------------------- */

typedef struct cseg_server cseg_server;

/* options: ckpt (required), host, port (0 = any free port), guided,
 * ui (static directory), history_cap, max_side, inference_side. */
CSEG_API cseg_status cseg_server_start(const char* options_json, cseg_server** out);
CSEG_API int cseg_server_port(const cseg_server* server);
/* Stops the server and frees the handle. */
CSEG_API void cseg_server_stop(cseg_server* server);

#ifdef __cplusplus
}
#endif

#endif
