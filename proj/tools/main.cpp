// nrreg command-line tool.  Talks to the toolkit exclusively through the
// C API in nrreg.h; exit codes: 0 success, 1 contract/format error, 2
// failed verification.

#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nrreg.h"

namespace {

int status_to_exit(nrr_status s) {
  if (s == NRR_OK) return 0;
  if (s == NRR_ERR_VERIFY) return 2;
  return 1;
}

int report_failure(nrr_status s) {
  std::fprintf(stderr, "error: %s\n", nrr_last_error());
  return status_to_exit(s);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CLI::ValidationError("--config", "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CloudPtr {
  nrr_cloud* p = nullptr;
  ~CloudPtr() { nrr_cloud_free(p); }
};
struct ModelPtr {
  nrr_model* p = nullptr;
  ~ModelPtr() { nrr_model_free(p); }
};
struct ResultPtr {
  nrr_result* p = nullptr;
  ~ResultPtr() { nrr_result_free(p); }
};
struct StringPtr {
  char* p = nullptr;
  ~StringPtr() { nrr_string_free(p); }
};

// Flags shared by every subcommand; flags are folded into an override
// config text so that flags > config file > defaults.
struct CommonOpts {
  std::string config_file;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 1;
  std::ostringstream overrides;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--config", config_file, "config file (key = value sections)");
    cmd->add_option("--seed", seed, "global seed (sets train/challenge/sweep seeds)")
        ->each([this](const std::string&) { seed_set = true; });
    cmd->add_option("--threads", threads, "process-wide thread budget")
        ->check(CLI::PositiveNumber);
  }

  void section(const char* name) { overrides << "[" << name << "]\n"; }
  template <typename T>
  void set(const char* key, const T& value) {
    overrides << key << " = " << value << "\n";
  }

  // Resolved config text: file -> overrides -> canonical form.
  std::string resolve() {
    if (seed_set) {
      section("train");
      set("seed", seed);
      section("challenge");
      set("seed", seed);
      section("sweep");
      set("seed", seed);
    }
    std::string base;
    if (!config_file.empty()) base = read_file(config_file);
    StringPtr resolved;
    const nrr_status s =
        nrr_config_resolve(base.empty() ? nullptr : base.c_str(),
                           overrides.str().empty() ? nullptr : overrides.str().c_str(),
                           &resolved.p);
    if (s != NRR_OK) throw CLI::ValidationError("config", nrr_last_error());
    return resolved.p;
  }

  void print_resolved(const std::string& text) {
    std::printf("# resolved configuration\n%s", text.c_str());
    std::printf("# seed = %" PRIu64 "\n", seed);
    if (nrr_set_threads(threads) != NRR_OK) throw CLI::ValidationError("--threads", nrr_last_error());
    std::printf("# threads = %d\n", nrr_get_threads());
  }
};

std::vector<std::string> default_models() {
  std::vector<std::string> models;
  for (int i = 0; i < nrr_synthetic_model_count(); ++i)
    models.push_back(nrr_synthetic_model_name(i));
  return models;
}

std::vector<const char*> c_strs(const std::vector<std::string>& v) {
  std::vector<const char*> out;
  out.reserve(v.size());
  for (const auto& s : v) out.push_back(s.c_str());
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nrreg - non-rigid point cloud registration toolkit"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  // ---- gen ----
  auto* gen = app.add_subcommand("gen", "generate benchmark pairs and a manifest");
  CommonOpts gen_common;
  gen_common.add_to(gen);
  std::vector<std::string> gen_models;
  std::string gen_out = "bench";
  int gen_pairs = 1, gen_points = 1024;
  double gen_deform = -1, gen_rotation = -1, gen_noise = -1, gen_outliers = -1,
         gen_incomplete = -1;
  int gen_controls = -1;
  gen->add_option("--models", gen_models, "model paths (.off or synth:<name>)");
  gen->add_option("--out", gen_out, "output directory");
  gen->add_option("--pairs", gen_pairs, "pairs per model")->check(CLI::PositiveNumber);
  gen->add_option("--points", gen_points, "points sampled per cloud");
  gen->add_option("--deform", gen_deform, "deformation level [0, 0.9]");
  gen->add_option("--rotation", gen_rotation, "rotation level in radians [0, 0.8]");
  gen->add_option("--noise", gen_noise, "noise amplitude in model units");
  gen->add_option("--outliers", gen_outliers, "outlier ratio");
  gen->add_option("--incompleteness", gen_incomplete, "deleted-patch ratio");
  gen->add_option("--controls", gen_controls, "TPS control count");

  // ---- train ----
  auto* train = app.add_subcommand("train", "train the descriptor end to end");
  CommonOpts train_common;
  train_common.add_to(train);
  std::vector<std::string> train_models;
  std::string train_ckpt = "model.ckpt", train_loss_log = "loss_log.txt";
  double train_lr = -1, train_max_deform = -1;
  int train_epochs = -1, train_samples = -1, train_points = -1, train_kc = -1, train_ks = -1;
  train->add_option("--models", train_models, "model paths (default: bundled synthetics)");
  train->add_option("--ckpt", train_ckpt, "checkpoint output path");
  train->add_option("--loss-log", train_loss_log, "per-step loss log output path");
  train->add_option("--lr", train_lr, "learning rate");
  train->add_option("--epochs", train_epochs, "epochs");
  train->add_option("--samples", train_samples, "samples per epoch");
  train->add_option("--points", train_points, "points per cloud");
  train->add_option("--max-deform", train_max_deform, "augmentation deformation cap");
  train->add_option("--k-candidates", train_kc, "target candidates per point");
  train->add_option("--k-source", train_ks, "source-graph k-NN");

  // ---- register ----
  auto* reg = app.add_subcommand("register", "register a source cloud onto a target");
  CommonOpts reg_common;
  reg_common.add_to(reg);
  std::string reg_source, reg_target, reg_ckpt, reg_out = "warped.xyz", reg_gt;
  bool reg_refine = false, reg_no_align = false;
  int reg_kc = -1, reg_ks = -1;
  reg->add_option("--source", reg_source, "source cloud (.xyz)")->required();
  reg->add_option("--target", reg_target, "target cloud (.xyz)")->required();
  reg->add_option("--ckpt", reg_ckpt, "checkpoint path")->required();
  reg->add_option("--out", reg_out, "warped cloud output path");
  reg->add_option("--gt", reg_gt, "ground-truth map file (one target index per line)");
  reg->add_flag("--refine", reg_refine, "second candidates+LBP pass from the warped source");
  reg->add_flag("--no-alignment", reg_no_align, "disable the alignment transform (baseline)");
  reg->add_option("--k-candidates", reg_kc, "target candidates per point");
  reg->add_option("--k-source", reg_ks, "source-graph k-NN");

  // ---- sweep ----
  auto* sweep = app.add_subcommand("sweep", "robustness sweep over one challenge axis");
  CommonOpts sweep_common;
  sweep_common.add_to(sweep);
  std::vector<std::string> sweep_models;
  std::string sweep_ckpt, sweep_axis, sweep_csv = "sweep.csv", sweep_svg = "sweep.svg";
  std::string sweep_levels;
  int sweep_trials = -1, sweep_points = -1;
  bool sweep_baseline = false, sweep_no_timing = false;
  sweep->add_option("--ckpt", sweep_ckpt, "checkpoint path")->required();
  sweep->add_option("--models", sweep_models, "model paths (default: bundled synthetics)");
  sweep->add_option("--axis", sweep_axis,
                    "deformation|rotation|noise|outliers|incompleteness");
  sweep->add_option("--levels", sweep_levels, "comma-separated increasing levels");
  sweep->add_option("--trials", sweep_trials, "trials per level");
  sweep->add_option("--points", sweep_points, "points per cloud");
  sweep->add_option("--csv", sweep_csv, "CSV output path");
  sweep->add_option("--svg", sweep_svg, "SVG output path");
  sweep->add_flag("--compare-baseline", sweep_baseline,
                  "add an alignment-off series (second CSV + chart series)");
  sweep->add_flag("--no-timing", sweep_no_timing,
                  "zero the timing columns (byte-reproducible CSV)");

  // ---- gradcheck / selftest ----
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  CommonOpts grad_common;
  grad_common.add_to(gradcheck);
  auto* selftest = app.add_subcommand("selftest", "run the built-in oracle battery");
  CommonOpts self_common;
  self_common.add_to(selftest);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      gen_common.section("challenge");
      if (gen_deform >= 0) gen_common.set("deform_level", gen_deform);
      if (gen_rotation >= 0) gen_common.set("rotation_level", gen_rotation);
      if (gen_noise >= 0) gen_common.set("noise_level", gen_noise);
      if (gen_outliers >= 0) gen_common.set("outlier_ratio", gen_outliers);
      if (gen_incomplete >= 0) gen_common.set("incompleteness_ratio", gen_incomplete);
      if (gen_controls > 0) gen_common.set("n_controls", gen_controls);
      const std::string cfg = gen_common.resolve();
      gen_common.print_resolved(cfg);
      if (gen_models.empty()) gen_models = default_models();
      const auto models = c_strs(gen_models);
      StringPtr manifest;
      const nrr_status s = nrr_generate(cfg.c_str(), models.data(), int(models.size()),
                                        gen_pairs, gen_points, gen_out.c_str(), &manifest.p);
      if (s != NRR_OK) return report_failure(s);
      std::printf("manifest = %s\n", manifest.p);
      return 0;
    }

    if (train->parsed()) {
      train_common.section("train");
      if (train_lr > 0) train_common.set("learning_rate", train_lr);
      if (train_epochs > 0) train_common.set("epochs", train_epochs);
      if (train_samples > 0) train_common.set("samples_per_epoch", train_samples);
      if (train_points > 0) train_common.set("points_per_cloud", train_points);
      if (train_max_deform >= 0) train_common.set("max_deform", train_max_deform);
      train_common.section("match");
      if (train_kc > 0) train_common.set("k_candidates", train_kc);
      if (train_ks > 0) train_common.set("k_source", train_ks);
      const std::string cfg = train_common.resolve();
      train_common.print_resolved(cfg);
      if (train_models.empty()) train_models = default_models();
      const auto models = c_strs(train_models);
      const nrr_status s = nrr_train(cfg.c_str(), models.data(), int(models.size()),
                                     train_ckpt.c_str(), train_loss_log.c_str(), nullptr);
      if (s != NRR_OK) return report_failure(s);
      std::printf("checkpoint = %s\nloss_log = %s\n", train_ckpt.c_str(),
                  train_loss_log.c_str());
      return 0;
    }

    if (reg->parsed()) {
      ModelPtr model;
      nrr_status s = nrr_model_load(reg_ckpt.c_str(), &model.p);
      if (s != NRR_OK) return report_failure(s);

      reg_common.section("match");
      if (reg_kc > 0) reg_common.set("k_candidates", reg_kc);
      if (reg_ks > 0) reg_common.set("k_source", reg_ks);
      if (reg_refine) reg_common.set("refine", "true");
      if (reg_no_align) {
        reg_common.section("descriptor");
        reg_common.set("with_alignment", "false");
      }
      StringPtr model_cfg;
      if ((s = nrr_model_config(model.p, &model_cfg.p)) != NRR_OK) return report_failure(s);
      StringPtr resolved;
      if ((s = nrr_config_resolve(model_cfg.p, reg_common.overrides.str().c_str(),
                                  &resolved.p)) != NRR_OK)
        return report_failure(s);
      reg_common.print_resolved(resolved.p);

      CloudPtr source, target;
      if ((s = nrr_cloud_load_xyz(reg_source.c_str(), &source.p)) != NRR_OK)
        return report_failure(s);
      if ((s = nrr_cloud_load_xyz(reg_target.c_str(), &target.p)) != NRR_OK)
        return report_failure(s);

      ResultPtr result;
      if ((s = nrr_register(model.p, source.p, target.p,
                            reg_common.overrides.str().c_str(), &result.p)) != NRR_OK)
        return report_failure(s);

      CloudPtr warped;
      if ((s = nrr_result_warped(result.p, &warped.p)) != NRR_OK) return report_failure(s);
      if ((s = nrr_cloud_save_xyz(warped.p, reg_out.c_str())) != NRR_OK)
        return report_failure(s);

      double dist = 0;
      if (!reg_gt.empty()) {
        std::ifstream gt_in(reg_gt);
        if (!gt_in) {
          std::fprintf(stderr, "error: cannot open %s\n", reg_gt.c_str());
          return 1;
        }
        std::vector<std::int64_t> gt;
        std::int64_t v;
        while (gt_in >> v) gt.push_back(v);
        if ((s = nrr_mean_euclidean(warped.p, target.p, gt.data(), int64_t(gt.size()),
                                    &dist)) != NRR_OK)
          return report_failure(s);
        std::printf("mean_distance = %.9g\n", dist);
      } else {
        if ((s = nrr_mean_nn_distance(warped.p, target.p, &dist)) != NRR_OK)
          return report_failure(s);
        std::printf("mean_nn_distance = %.9g\n", dist);
      }
      std::printf("elapsed_ms = %.3f\n", nrr_result_elapsed_ms(result.p));
      std::printf("warped = %s\n", reg_out.c_str());
      return 0;
    }

    if (sweep->parsed()) {
      sweep_common.section("sweep");
      if (!sweep_axis.empty()) sweep_common.set("axis", sweep_axis);
      if (!sweep_levels.empty()) sweep_common.set("levels", sweep_levels);
      if (sweep_trials > 0) sweep_common.set("trials_per_level", sweep_trials);
      if (sweep_points > 0) sweep_common.set("points_per_cloud", sweep_points);
      if (sweep_baseline) sweep_common.set("compare_baseline", "true");
      if (sweep_no_timing) sweep_common.set("measure_time", "false");

      ModelPtr model;
      nrr_status s = nrr_model_load(sweep_ckpt.c_str(), &model.p);
      if (s != NRR_OK) return report_failure(s);
      StringPtr model_cfg;
      if ((s = nrr_model_config(model.p, &model_cfg.p)) != NRR_OK) return report_failure(s);

      std::string base = model_cfg.p;
      if (!sweep_common.config_file.empty()) base += "\n" + read_file(sweep_common.config_file);
      sweep_common.config_file.clear();  // already folded into base
      StringPtr resolved;
      if ((s = nrr_config_resolve(base.c_str(), sweep_common.overrides.str().c_str(),
                                  &resolved.p)) != NRR_OK)
        return report_failure(s);
      sweep_common.print_resolved(resolved.p);

      if (sweep_models.empty()) sweep_models = default_models();
      const auto models = c_strs(sweep_models);
      if ((s = nrr_sweep(resolved.p, model.p, models.data(), int(models.size()),
                         sweep_csv.c_str(), sweep_svg.c_str())) != NRR_OK)
        return report_failure(s);
      std::printf("csv = %s\nsvg = %s\n", sweep_csv.c_str(), sweep_svg.c_str());
      return 0;
    }

    if (gradcheck->parsed()) {
      const std::string cfg = grad_common.resolve();
      grad_common.print_resolved(cfg);
      double max_err = 0;
      const nrr_status s = nrr_gradcheck(
          &max_err,
          [](const char* name, double err, void*) {
            std::printf("%-24s max rel err %.3g\n", name, err);
          },
          nullptr);
      std::printf("gradcheck max relative error = %.3g\n", max_err);
      if (s != NRR_OK) return report_failure(s);
      return 0;
    }

    if (selftest->parsed()) {
      const std::string cfg = self_common.resolve();
      self_common.print_resolved(cfg);
      int failed = 0;
      const nrr_status s = nrr_selftest(
          [](const char* name, int pass, const char* detail, void*) {
            std::printf("[%s] %s%s%s\n", pass ? "PASS" : "FAIL", name,
                        detail && *detail ? " - " : "", detail ? detail : "");
          },
          nullptr, &failed);
      std::printf("selftest failures = %d\n", failed);
      if (s != NRR_OK) return report_failure(s);
      return 0;
    }
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
