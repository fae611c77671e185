#ifndef VXSEG_H
#define VXSEG_H

/* C interface of the vxseg library.
 *
 * Every fallible call returns a vxseg_status. On failure the message is
 * available from vxseg_last_error() until the next failing call on the same
 * thread. Objects are opaque handles released by their *_free function;
 * strings returned through char** are released with vxseg_string_free. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define VXSEG_API __declspec(dllexport)
#else
#define VXSEG_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum vxseg_status {
  VXSEG_OK = 0,
  VXSEG_ERR_CONTRACT = 1,  /* invalid argument, shape or configuration */
  VXSEG_ERR_IO = 2,        /* file cannot be read or written */
  VXSEG_ERR_FORMAT = 3,    /* malformed file contents */
  VXSEG_ERR_NUMERIC = 4,   /* NaN/Inf during training */
  VXSEG_ERR_UNDEFINED = 5, /* metric undefined for the inputs */
  VXSEG_ERR_INTERNAL = 6   /* anything else; a bug */
} vxseg_status;

VXSEG_API const char* vxseg_version(void);
VXSEG_API const char* vxseg_status_name(vxseg_status status);
VXSEG_API const char* vxseg_last_error(void);
VXSEG_API void vxseg_string_free(char* s);

/* ---- synthetic data ---------------------------------------------------- */

/* Writes `count` phantom cases (<id>_image.vxsg, <id>_label.vxsg) plus a
 * manifest into out_dir. size is voxels per axis, spacing_mm the isotropic
 * output spacing. */
VXSEG_API vxseg_status vxseg_synth(const char* out_dir, uint64_t count, uint64_t seed,
                                   int64_t size, double spacing_mm);

/* ---- training configuration -------------------------------------------- */

typedef struct vxseg_config vxseg_config;

VXSEG_API vxseg_status vxseg_config_default(vxseg_config** out);
VXSEG_API vxseg_status vxseg_config_parse(const char* text, vxseg_config** out);
VXSEG_API vxseg_status vxseg_config_load(const char* path, vxseg_config** out);
/* Applies `key = value` lines on top of the current values. */
VXSEG_API vxseg_status vxseg_config_update(vxseg_config* config, const char* text);
VXSEG_API vxseg_status vxseg_config_to_text(const vxseg_config* config, char** text);
VXSEG_API void vxseg_config_free(vxseg_config* config);

/* ---- training ---------------------------------------------------------- */

/* Receives each log record as a TSV line (no newline) and each warning
 * prefixed with "warning: ". */
typedef void (*vxseg_log_fn)(const char* line, void* user);

/* Fresh generator from config.seed, trained on data_dir; writes
 * generator.vxck and pretrain_log.tsv under out_dir. */
VXSEG_API vxseg_status vxseg_pretrain(const vxseg_config* config, const char* data_dir,
                                      const char* out_dir, vxseg_log_fn log, void* user);

/* Adversarial refinement of the generator in init_checkpoint; writes
 * generator_adv.vxck, discriminator.vxck and adv_log.tsv. The checkpoint's
 * generator shape takes precedence over the config's. */
VXSEG_API vxseg_status vxseg_advtrain(const vxseg_config* config, const char* data_dir,
                                      const char* init_checkpoint, const char* out_dir,
                                      vxseg_log_fn log, void* user);

/* ---- inference --------------------------------------------------------- */

typedef struct vxseg_generator vxseg_generator;

VXSEG_API vxseg_status vxseg_generator_load(const char* path, vxseg_generator** out);
VXSEG_API void vxseg_generator_free(vxseg_generator* g);
VXSEG_API vxseg_status vxseg_generator_spec(const vxseg_generator* g, char** text);

/* Reads an image volume, writes its probability map to prob_out and, when
 * mask_out is non-null, the mask (probability >= threshold). wall_ms (may
 * be null) receives the time spent in the network forward pass including
 * padding and cropping. */
VXSEG_API vxseg_status vxseg_predict_file(vxseg_generator* g, const char* in_path,
                                          const char* prob_out, const char* mask_out,
                                          double threshold, double* wall_ms);

/* ---- evaluation -------------------------------------------------------- */

typedef struct vxseg_report vxseg_report;

typedef struct vxseg_summary {
  double mean, std, min, max, median;
} vxseg_summary;

VXSEG_API vxseg_status vxseg_evaluate(const char* pred_dir, const char* gt_dir, double threshold,
                                      vxseg_report** out);
VXSEG_API void vxseg_report_free(vxseg_report* r);
VXSEG_API size_t vxseg_report_case_count(const vxseg_report* r);
VXSEG_API size_t vxseg_report_included(const vxseg_report* r);
VXSEG_API vxseg_status vxseg_report_dice(const vxseg_report* r, vxseg_summary* out);
VXSEG_API vxseg_status vxseg_report_asd(const vxseg_report* r, vxseg_summary* out);
VXSEG_API vxseg_status vxseg_report_tsv(const vxseg_report* r, char** text);
VXSEG_API vxseg_status vxseg_report_table(const vxseg_report* r, const char* method, char** text);

/* ---- gradient check ---------------------------------------------------- */

typedef struct vxseg_gradcheck vxseg_gradcheck;

/* tolerance <= 0 keeps the defaults (1e-3 primitives, 1e-2 composed);
 * otherwise it applies to every check. inject_fault names an op kind
 * (e.g. "conv3d") whose backward pass is corrupted for this run; null or
 * empty for none. */
VXSEG_API vxseg_status vxseg_gradcheck_run(uint64_t seed, double tolerance, const char* inject_fault,
                                           vxseg_gradcheck** out);
VXSEG_API void vxseg_gradcheck_free(vxseg_gradcheck* r);
VXSEG_API int vxseg_gradcheck_passed(const vxseg_gradcheck* r);
VXSEG_API size_t vxseg_gradcheck_count(const vxseg_gradcheck* r);
/* Index of the entry with the largest error-to-tolerance ratio. */
VXSEG_API size_t vxseg_gradcheck_worst(const vxseg_gradcheck* r);
VXSEG_API vxseg_status vxseg_gradcheck_entry(const vxseg_gradcheck* r, size_t index,
                                             const char** name, double* error, double* tolerance,
                                             int* passed);

#ifdef __cplusplus
}
#endif

#endif
