#include "nrreg.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "nrreg/benchgen.hpp"
#include "nrreg/config.hpp"
#include "nrreg/errors.hpp"
#include "nrreg/evalrep.hpp"
#include "nrreg/featnet.hpp"
#include "nrreg/geometry.hpp"
#include "nrreg/gradcheck.hpp"
#include "nrreg/lbp.hpp"
#include "nrreg/prng.hpp"
#include "nrreg/selftest.hpp"
#include "nrreg/synthetic.hpp"
#include "nrreg/training.hpp"

struct nrr_cloud {
  nrreg::PointCloud cloud;
};
struct nrr_mesh {
  nrreg::TriMesh mesh;
};
struct nrr_model {
  nrreg::ParamStore<float> params;
  nrreg::AdamState adam;
  std::uint64_t step = 0;
  nrreg::FullConfig config;
};
struct nrr_pair {
  nrreg::SamplePair pair;
  nrr_cloud source_view;
  nrr_cloud target_view;
};
struct nrr_result {
  nrreg::RegistrationResult reg;
};

namespace {

thread_local std::string g_last_error;
int g_threads = 1;

nrr_status fail(nrr_status code, const char* what) {
  g_last_error = what;
  return code;
}

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

nrreg::FullConfig model_runtime_config(const nrr_model* model, const char* overrides) {
  nrreg::FullConfig cfg = model->config;
  if (overrides && *overrides)
    nrreg::apply_config_text(cfg, overrides, "<overrides>");
  return cfg;
}

}  // namespace

#define NRR_TRY try {
#define NRR_CATCH                                                       \
  }                                                                     \
  catch (const nrreg::ContractError& e) {                               \
    return fail(NRR_ERR_CONTRACT, e.what());                            \
  }                                                                     \
  catch (const nrreg::ParseError& e) { return fail(NRR_ERR_PARSE, e.what()); } \
  catch (const nrreg::FormatError& e) { return fail(NRR_ERR_FORMAT, e.what()); } \
  catch (const nrreg::IoError& e) { return fail(NRR_ERR_IO, e.what()); } \
  catch (const nrreg::FitError& e) { return fail(NRR_ERR_CONTRACT, e.what()); } \
  catch (const std::exception& e) { return fail(NRR_ERR_UNKNOWN, e.what()); } \
  catch (...) { return fail(NRR_ERR_UNKNOWN, "unknown error"); }        \
  return NRR_OK;

extern "C" {

const char* nrr_last_error(void) { return g_last_error.c_str(); }

void nrr_string_free(char* s) { delete[] s; }

nrr_status nrr_set_threads(int threads) {
  NRR_TRY
  if (threads < 1) throw nrreg::ContractError("threads must be >= 1");
  g_threads = threads;
  NRR_CATCH
}

int nrr_get_threads(void) { return g_threads; }

nrr_status nrr_config_default(char** out_text) {
  NRR_TRY
  *out_text = dup_string(nrreg::serialize_config(nrreg::FullConfig{}));
  NRR_CATCH
}

nrr_status nrr_config_resolve(const char* base, const char* overrides, char** out_text) {
  NRR_TRY
  nrreg::FullConfig cfg;
  if (base && *base) nrreg::apply_config_text(cfg, base, "<config>");
  if (overrides && *overrides) nrreg::apply_config_text(cfg, overrides, "<flags>");
  *out_text = dup_string(nrreg::serialize_config(cfg));
  NRR_CATCH
}

nrr_status nrr_cloud_create(const double* xyz, int64_t n, nrr_cloud** out) {
  NRR_TRY
  if (n < 0 || (n > 0 && !xyz)) throw nrreg::ContractError("cloud_create: bad arguments");
  auto* c = new nrr_cloud;
  c->cloud.points.resize(std::size_t(n));
  for (int64_t i = 0; i < n; ++i)
    c->cloud.points[std::size_t(i)] = {xyz[3 * i], xyz[3 * i + 1], xyz[3 * i + 2]};
  *out = c;
  NRR_CATCH
}

nrr_status nrr_cloud_load_xyz(const char* path, nrr_cloud** out) {
  NRR_TRY
  auto* c = new nrr_cloud;
  try {
    c->cloud = nrreg::load_xyz(path);
  } catch (...) {
    delete c;
    throw;
  }
  *out = c;
  NRR_CATCH
}

nrr_status nrr_cloud_save_xyz(const nrr_cloud* cloud, const char* path) {
  NRR_TRY
  nrreg::save_xyz(cloud->cloud, path);
  NRR_CATCH
}

int64_t nrr_cloud_size(const nrr_cloud* cloud) {
  return cloud ? int64_t(cloud->cloud.size()) : 0;
}

nrr_status nrr_cloud_points(const nrr_cloud* cloud, double* out_xyz) {
  NRR_TRY
  for (std::size_t i = 0; i < cloud->cloud.size(); ++i)
    for (int d = 0; d < 3; ++d) out_xyz[3 * i + std::size_t(d)] = cloud->cloud.points[i][d];
  NRR_CATCH
}

nrr_status nrr_cloud_normalize(nrr_cloud* cloud) {
  NRR_TRY
  nrreg::normalize(cloud->cloud);
  NRR_CATCH
}

void nrr_cloud_free(nrr_cloud* cloud) { delete cloud; }

nrr_status nrr_mesh_open(const char* path_or_synth, nrr_mesh** out) {
  NRR_TRY
  auto* m = new nrr_mesh;
  try {
    m->mesh = nrreg::load_model(path_or_synth);
  } catch (...) {
    delete m;
    throw;
  }
  *out = m;
  NRR_CATCH
}

nrr_status nrr_mesh_sample(const nrr_mesh* mesh, int64_t n, uint64_t seed, nrr_cloud** out) {
  NRR_TRY
  if (n < 1) throw nrreg::ContractError("mesh_sample: n must be >= 1");
  auto* c = new nrr_cloud;
  try {
    c->cloud = nrreg::sample_surface(mesh->mesh, std::size_t(n), seed);
  } catch (...) {
    delete c;
    throw;
  }
  *out = c;
  NRR_CATCH
}

void nrr_mesh_free(nrr_mesh* mesh) { delete mesh; }

int nrr_synthetic_model_count(void) { return int(nrreg::synthetic_model_names().size()); }

const char* nrr_synthetic_model_name(int index) {
  const auto& names = nrreg::synthetic_model_names();
  if (index < 0 || std::size_t(index) >= names.size()) return nullptr;
  return names[std::size_t(index)].c_str();
}

nrr_status nrr_model_init(const char* config_text, uint64_t seed, nrr_model** out) {
  NRR_TRY
  auto* m = new nrr_model;
  try {
    if (config_text && *config_text)
      nrreg::apply_config_text(m->config, config_text, "<config>");
    m->config.train.seed = seed;
    m->params = nrreg::init_descriptor_params<float>(m->config.train.descriptor,
                                                     nrreg::derive_seed(seed, "init"));
    m->adam = nrreg::make_adam_state(m->params);
  } catch (...) {
    delete m;
    throw;
  }
  *out = m;
  NRR_CATCH
}

nrr_status nrr_model_load(const char* path, nrr_model** out) {
  NRR_TRY
  auto* m = new nrr_model;
  try {
    const nrreg::Checkpoint ckpt = nrreg::load_checkpoint(path);
    nrreg::unpack_checkpoint(ckpt, m->params, &m->adam);
    m->step = ckpt.step;
    m->config = nrreg::parse_config(ckpt.config_text, path);
  } catch (...) {
    delete m;
    throw;
  }
  *out = m;
  NRR_CATCH
}

nrr_status nrr_model_save(const nrr_model* model, const char* path) {
  NRR_TRY
  const nrreg::Checkpoint ckpt = nrreg::make_checkpoint(
      model->params, model->adam, model->step, nrreg::serialize_config(model->config));
  nrreg::save_checkpoint(ckpt, path);
  NRR_CATCH
}

nrr_status nrr_model_config(const nrr_model* model, char** out_text) {
  NRR_TRY
  *out_text = dup_string(nrreg::serialize_config(model->config));
  NRR_CATCH
}

void nrr_model_free(nrr_model* model) { delete model; }

nrr_status nrr_register(const nrr_model* model, const nrr_cloud* source,
                        const nrr_cloud* target, const char* overrides, nrr_result** out) {
  NRR_TRY
  const nrreg::FullConfig cfg = model_runtime_config(model, overrides);
  auto* r = new nrr_result;
  try {
    r->reg = nrreg::register_clouds(source->cloud, target->cloud, model->params,
                                    cfg.train.descriptor, cfg.train.match);
  } catch (...) {
    delete r;
    throw;
  }
  *out = r;
  NRR_CATCH
}

int64_t nrr_result_size(const nrr_result* result) {
  return result ? int64_t(result->reg.warped.size()) : 0;
}

nrr_status nrr_result_warped(const nrr_result* result, nrr_cloud** out) {
  NRR_TRY
  auto* c = new nrr_cloud;
  c->cloud = result->reg.warped;
  *out = c;
  NRR_CATCH
}

nrr_status nrr_result_displacement(const nrr_result* result, double* out_xyz) {
  NRR_TRY
  for (std::size_t i = 0; i < result->reg.displacement.size(); ++i)
    for (int d = 0; d < 3; ++d)
      out_xyz[3 * i + std::size_t(d)] = result->reg.displacement[i][d];
  NRR_CATCH
}

double nrr_result_elapsed_ms(const nrr_result* result) {
  return result ? result->reg.elapsed_ms : 0.0;
}

void nrr_result_free(nrr_result* result) { delete result; }

nrr_status nrr_mean_euclidean(const nrr_cloud* a, const nrr_cloud* b,
                              const int64_t* map_or_null, int64_t map_len, double* out) {
  NRR_TRY
  std::vector<nrreg::Point3> pa, pb;
  if (map_or_null) {
    if (map_len > int64_t(a->cloud.size()))
      throw nrreg::ContractError("mean_euclidean: map longer than first cloud");
    for (int64_t i = 0; i < map_len; ++i) {
      const int64_t t = map_or_null[i];
      if (t < 0) continue;
      if (t >= int64_t(b->cloud.size()))
        throw nrreg::ContractError("mean_euclidean: map index out of range");
      pa.push_back(a->cloud.points[std::size_t(i)]);
      pb.push_back(b->cloud.points[std::size_t(t)]);
    }
  } else {
    pa = a->cloud.points;
    pb = b->cloud.points;
  }
  *out = nrreg::mean_euclidean(pa, pb);
  NRR_CATCH
}

nrr_status nrr_mean_nn_distance(const nrr_cloud* a, const nrr_cloud* b, double* out) {
  NRR_TRY
  if (a->cloud.points.empty() || b->cloud.points.empty())
    throw nrreg::ContractError("mean_nn_distance: empty cloud");
  const std::vector<int> nn = nrreg::knn(a->cloud, b->cloud, 1);
  double acc = 0;
  for (std::size_t i = 0; i < a->cloud.size(); ++i) {
    const nrreg::Point3& p = a->cloud.points[i];
    const nrreg::Point3& q = b->cloud.points[std::size_t(nn[i])];
    const double dx = p[0] - q[0], dy = p[1] - q[1], dz = p[2] - q[2];
    acc += std::sqrt(dx * dx + dy * dy + dz * dz);
  }
  *out = acc / double(a->cloud.size());
  NRR_CATCH
}

nrr_status nrr_make_pair(const nrr_cloud* cloud, const nrr_challenge* spec, nrr_pair** out) {
  NRR_TRY
  nrreg::ChallengeSpec cs;
  cs.deform_level = spec->deform_level;
  cs.rotation_level = spec->rotation_level;
  cs.noise_level = spec->noise_level;
  cs.outlier_ratio = spec->outlier_ratio;
  cs.incompleteness_ratio = spec->incompleteness_ratio;
  cs.n_controls = spec->n_controls;
  cs.seed = spec->seed;
  auto* p = new nrr_pair;
  try {
    p->pair = nrreg::make_pair(cloud->cloud, cs);
    p->source_view.cloud = p->pair.source;
    p->target_view.cloud = p->pair.target;
  } catch (...) {
    delete p;
    throw;
  }
  *out = p;
  NRR_CATCH
}

const nrr_cloud* nrr_pair_source(const nrr_pair* pair) {
  return pair ? &pair->source_view : nullptr;
}

const nrr_cloud* nrr_pair_target(const nrr_pair* pair) {
  return pair ? &pair->target_view : nullptr;
}

int64_t nrr_pair_gt_size(const nrr_pair* pair) {
  return pair ? int64_t(pair->pair.gt_map.size()) : 0;
}

nrr_status nrr_pair_gt(const nrr_pair* pair, int64_t* out, int64_t capacity) {
  NRR_TRY
  if (capacity < int64_t(pair->pair.gt_map.size()))
    throw nrreg::ContractError("pair_gt: buffer too small");
  std::copy(pair->pair.gt_map.begin(), pair->pair.gt_map.end(), out);
  NRR_CATCH
}

void nrr_pair_free(nrr_pair* pair) { delete pair; }

nrr_status nrr_generate(const char* config_text, const char* const* models, int n_models,
                        int pairs_per_model, int points_per_cloud, const char* out_dir,
                        char** manifest_path_out) {
  NRR_TRY
  if (n_models < 1) throw nrreg::ContractError("generate: empty model list");
  if (pairs_per_model < 1) throw nrreg::ContractError("generate: pairs_per_model must be >= 1");
  nrreg::FullConfig cfg;
  if (config_text && *config_text) nrreg::apply_config_text(cfg, config_text, "<config>");

  std::filesystem::create_directories(out_dir);
  std::vector<nrreg::ManifestEntry> manifest;
  int pair_index = 0;
  char name[64];
  for (int mi = 0; mi < n_models; ++mi) {
    const nrreg::TriMesh mesh = nrreg::load_model(models[mi]);
    for (int pi = 0; pi < pairs_per_model; ++pi, ++pair_index) {
      nrreg::ChallengeSpec spec = cfg.challenge;
      spec.seed = nrreg::derive_seed(cfg.challenge.seed, "gen",
                                     std::uint64_t(mi) * 1000003ull + std::uint64_t(pi));
      nrreg::PointCloud cloud = nrreg::sample_surface(
          mesh, std::size_t(points_per_cloud), nrreg::derive_seed(spec.seed, "sample"));
      nrreg::normalize(cloud);
      const nrreg::SamplePair pair = nrreg::make_pair(cloud, spec);

      const std::filesystem::path dir(out_dir);
      std::snprintf(name, sizeof(name), "pair_%04d", pair_index);
      nrreg::save_xyz(pair.source, (dir / (std::string(name) + "_source.xyz")).string());
      nrreg::save_xyz(pair.target, (dir / (std::string(name) + "_target.xyz")).string());
      nrreg::save_gt(pair.gt_map, (dir / (std::string(name) + "_gt.txt")).string());
      manifest.push_back({models[mi], spec});
    }
  }
  const std::string manifest_path =
      (std::filesystem::path(out_dir) / "manifest.csv").string();
  nrreg::write_manifest(manifest_path, manifest);
  if (manifest_path_out) *manifest_path_out = dup_string(manifest_path);
  NRR_CATCH
}

nrr_status nrr_train(const char* config_text, const char* const* models, int n_models,
                     const char* ckpt_path, const char* loss_log_path,
                     nrr_model** out_model) {
  NRR_TRY
  if (n_models < 1) throw nrreg::ContractError("train: empty model list");
  nrreg::FullConfig cfg;
  if (config_text && *config_text) nrreg::apply_config_text(cfg, config_text, "<config>");
  std::vector<std::string> paths(models, models + n_models);

  nrreg::TrainResult result = nrreg::train(paths, cfg.train);
  if (loss_log_path && *loss_log_path) nrreg::save_loss_log(result.loss_log, loss_log_path);

  auto* m = new nrr_model;
  m->params = std::move(result.params);
  m->adam = std::move(result.adam);
  m->step = m->adam.step;
  m->config = cfg;
  if (ckpt_path && *ckpt_path) {
    const nrreg::Checkpoint ckpt = nrreg::make_checkpoint(
        m->params, m->adam, m->step, nrreg::serialize_config(m->config));
    try {
      nrreg::save_checkpoint(ckpt, ckpt_path);
    } catch (...) {
      delete m;
      throw;
    }
  }
  if (out_model) *out_model = m;
  else delete m;
  NRR_CATCH
}

nrr_status nrr_sweep(const char* config_text, const nrr_model* model,
                     const char* const* models, int n_models, const char* csv_path,
                     const char* svg_path) {
  NRR_TRY
  if (n_models < 1) throw nrreg::ContractError("sweep: empty model list");
  nrreg::FullConfig cfg = model->config;
  if (config_text && *config_text) nrreg::apply_config_text(cfg, config_text, "<config>");
  std::vector<std::string> paths(models, models + n_models);

  nrreg::SweepSpec spec;
  spec.sweep = cfg.sweep;
  spec.base = cfg.challenge;
  spec.match = cfg.train.match;
  spec.baseline = false;
  const std::vector<nrreg::ReportRow> rows =
      nrreg::run_sweep(spec, model->params, cfg.train.descriptor, paths);
  nrreg::write_csv(csv_path, cfg.sweep.axis, rows);

  std::vector<nrreg::SvgSeries> series;
  {
    nrreg::SvgSeries before{"before", {}}, after{"after", {}};
    for (const auto& r : rows) {
      before.points.emplace_back(r.level, r.before_mean);
      after.points.emplace_back(r.level, r.after_mean);
    }
    series.push_back(before);
    series.push_back(after);
  }

  if (cfg.sweep.compare_baseline) {
    spec.baseline = true;
    const std::vector<nrreg::ReportRow> base_rows =
        nrreg::run_sweep(spec, model->params, cfg.train.descriptor, paths);
    std::filesystem::path base_csv(csv_path);
    base_csv.replace_filename(base_csv.stem().string() + "_baseline" +
                              base_csv.extension().string());
    nrreg::write_csv(base_csv.string(), cfg.sweep.axis, base_rows);
    nrreg::SvgSeries after_base{"after (no alignment)", {}};
    for (const auto& r : base_rows) after_base.points.emplace_back(r.level, r.after_mean);
    series.push_back(after_base);
  }

  if (svg_path && *svg_path)
    nrreg::emit_svg(svg_path, "mean Euclidean distance vs " + cfg.sweep.axis, cfg.sweep.axis,
                    "mean distance", series);
  NRR_CATCH
}

nrr_status nrr_gradcheck(double* max_rel_err,
                         void (*report)(const char*, double, void*), void* ud) {
  NRR_TRY
  const nrreg::GradCheckReport r = nrreg::run_gradcheck();
  if (report)
    for (const auto& c : r.checks) report(c.name.c_str(), c.max_rel_err, ud);
  if (max_rel_err) *max_rel_err = r.max_rel_err;
  if (!r.pass) {
    g_last_error = "gradcheck: max relative error " + std::to_string(r.max_rel_err) +
                   " exceeds tolerance";
    return NRR_ERR_VERIFY;
  }
  NRR_CATCH
}

nrr_status nrr_selftest(void (*report)(const char*, int, const char*, void*), void* ud,
                        int* n_failed) {
  NRR_TRY
  const std::vector<nrreg::SelfTestResult> results = nrreg::run_selftest();
  int failed = 0;
  for (const auto& r : results) {
    if (!r.pass) ++failed;
    if (report) report(r.name.c_str(), r.pass ? 1 : 0, r.detail.c_str(), ud);
  }
  if (n_failed) *n_failed = failed;
  if (failed > 0) {
    g_last_error = "selftest: " + std::to_string(failed) + " checks failed";
    return NRR_ERR_VERIFY;
  }
  NRR_CATCH
}

}  // extern "C"
