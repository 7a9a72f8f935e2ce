/*
 * nrreg - non-rigid point cloud registration toolkit, C API.
 *
 * All functions return nrr_status; on failure nrr_last_error() holds a
 * thread-local message.  Objects are opaque handles released with the
 * matching *_free function.  Strings returned through char** are owned by
 * the caller and released with nrr_string_free.
 */
#ifndef NRREG_H
#define NRREG_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum nrr_status {
  NRR_OK = 0,
  NRR_ERR_CONTRACT = 1, /* precondition or shape violation */
  NRR_ERR_PARSE = 2,    /* malformed text input */
  NRR_ERR_FORMAT = 3,   /* malformed binary input */
  NRR_ERR_IO = 4,       /* file system failure */
  NRR_ERR_VERIFY = 5,   /* a verification suite reported failures */
  NRR_ERR_UNKNOWN = 6
} nrr_status;

typedef struct nrr_cloud nrr_cloud;
typedef struct nrr_mesh nrr_mesh;
typedef struct nrr_model nrr_model;
typedef struct nrr_pair nrr_pair;
typedef struct nrr_result nrr_result;

const char* nrr_last_error(void);
void nrr_string_free(char* s);

/* Process-wide thread budget (>= 1).  1 is the canonical reference. */
nrr_status nrr_set_threads(int threads);
int nrr_get_threads(void);

/* ---- configuration (flat "key = value" text with [sections]) ---- */
nrr_status nrr_config_default(char** out_text);
/* base over defaults, then overrides over base; canonical serialization. */
nrr_status nrr_config_resolve(const char* base_text_or_null,
                              const char* overrides_text_or_null, char** out_text);

/* ---- point clouds ---- */
nrr_status nrr_cloud_create(const double* xyz, int64_t n, nrr_cloud** out);
nrr_status nrr_cloud_load_xyz(const char* path, nrr_cloud** out);
nrr_status nrr_cloud_save_xyz(const nrr_cloud* cloud, const char* path);
int64_t nrr_cloud_size(const nrr_cloud* cloud);
/* out_xyz must hold 3*n doubles. */
nrr_status nrr_cloud_points(const nrr_cloud* cloud, double* out_xyz);
nrr_status nrr_cloud_normalize(nrr_cloud* cloud);
void nrr_cloud_free(nrr_cloud* cloud);

/* ---- meshes; "synth:<name>" addresses a bundled parametric model ---- */
nrr_status nrr_mesh_open(const char* path_or_synth, nrr_mesh** out);
nrr_status nrr_mesh_sample(const nrr_mesh* mesh, int64_t n, uint64_t seed, nrr_cloud** out);
void nrr_mesh_free(nrr_mesh* mesh);
int nrr_synthetic_model_count(void);
const char* nrr_synthetic_model_name(int index);

/* ---- model: descriptor parameters + optimizer state + config snapshot */
nrr_status nrr_model_init(const char* config_text_or_null, uint64_t seed, nrr_model** out);
nrr_status nrr_model_load(const char* path, nrr_model** out);
nrr_status nrr_model_save(const nrr_model* model, const char* path);
nrr_status nrr_model_config(const nrr_model* model, char** out_text);
void nrr_model_free(nrr_model* model);

/* ---- registration ----
 * Runtime overrides may change [match], [lbp] and descriptor flags such as
 * with_alignment or k_graph; parameter shapes always come from the model. */
nrr_status nrr_register(const nrr_model* model, const nrr_cloud* source,
                        const nrr_cloud* target, const char* config_overrides_or_null,
                        nrr_result** out);
int64_t nrr_result_size(const nrr_result* result);
nrr_status nrr_result_warped(const nrr_result* result, nrr_cloud** out);
/* out_xyz must hold 3*n doubles. */
nrr_status nrr_result_displacement(const nrr_result* result, double* out_xyz);
double nrr_result_elapsed_ms(const nrr_result* result);
void nrr_result_free(nrr_result* result);

/* ---- metrics ---- */
/* map_or_null maps rows of a to rows of b (map_len entries, -1 skipped);
 * NULL means identity over min(|a|,|b|)=|a|=|b|. */
nrr_status nrr_mean_euclidean(const nrr_cloud* a, const nrr_cloud* b,
                              const int64_t* map_or_null, int64_t map_len, double* out);
nrr_status nrr_mean_nn_distance(const nrr_cloud* a, const nrr_cloud* b, double* out);

/* ---- benchmark generation ---- */
typedef struct nrr_challenge {
  double deform_level;         /* [0, 0.9] */
  double rotation_level;       /* radians, [0, 0.8] */
  double noise_level;          /* model units, >= 0 */
  double outlier_ratio;        /* >= 0 */
  double incompleteness_ratio; /* [0, 1) */
  int32_t n_controls;
  uint64_t seed;
} nrr_challenge;

nrr_status nrr_make_pair(const nrr_cloud* cloud, const nrr_challenge* spec, nrr_pair** out);
/* Borrowed references, valid until nrr_pair_free. */
const nrr_cloud* nrr_pair_source(const nrr_pair* pair);
const nrr_cloud* nrr_pair_target(const nrr_pair* pair);
int64_t nrr_pair_gt_size(const nrr_pair* pair);
nrr_status nrr_pair_gt(const nrr_pair* pair, int64_t* out, int64_t capacity);
void nrr_pair_free(nrr_pair* pair);

/* ---- orchestration ---- */
/* Writes pair files and a manifest into out_dir; [challenge] section and
 * its seed drive the specs.  manifest_path_out (optional) receives the
 * manifest location. */
nrr_status nrr_generate(const char* config_text, const char* const* models, int n_models,
                        int pairs_per_model, int points_per_cloud, const char* out_dir,
                        char** manifest_path_out);
/* Runs the [train] protocol on the model list; optionally saves the
 * checkpoint and the per-step loss log. */
nrr_status nrr_train(const char* config_text, const char* const* models, int n_models,
                     const char* ckpt_path_or_null, const char* loss_log_path_or_null,
                     nrr_model** out_model_or_null);
/* Runs the [sweep] protocol with the given checkpointed model; writes the
 * CSV (plus a *_baseline.csv when compare_baseline) and an SVG chart. */
nrr_status nrr_sweep(const char* config_text, const nrr_model* model,
                     const char* const* models, int n_models, const char* csv_path,
                     const char* svg_path_or_null);

/* ---- verification ---- */
/* Returns NRR_OK when every check is within tolerance, NRR_ERR_VERIFY
 * otherwise; the callback (optional) receives one line per check. */
nrr_status nrr_gradcheck(double* max_rel_err,
                         void (*report)(const char* name, double rel_err, void* ud), void* ud);
nrr_status nrr_selftest(void (*report)(const char* name, int pass, const char* detail,
                                       void* ud),
                        void* ud, int* n_failed);

#ifdef __cplusplus
}
#endif

#endif /* NRREG_H */
