#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "nrreg/featnet.hpp"
#include "nrreg/lbp.hpp"
#include "nrreg/tensor.hpp"

namespace nrreg {

struct TrainConfig {
  double learning_rate = 1e-4;  // the conventional reading of the paper's rate
  int epochs = 1;
  int samples_per_epoch = 100;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  int points_per_cloud = 1024;
  double max_deform = 0.9;  // augmentation deformation cap
  DescriptorConfig descriptor;
  MatchConfig match;

  void validate() const;
};

// Mean absolute error between warped source points and their ground-truth
// targets (matching sizes; surviving correspondences only).
template <typename T>
Tensor<T> l1_loss(Tape<T>& tape, Tensor<T> warped, Tensor<T> gt_targets);

struct AdamState {
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
  std::uint64_t step = 0;
};

AdamState make_adam_state(const ParamStore<float>& params);

// Standard Adam with bias correction; element arithmetic in double.
void adam_step(ParamStore<float>& params, const std::vector<std::vector<float>>& grads,
               AdamState& state, const TrainConfig& hyper);

struct TrainResult {
  ParamStore<float> params;
  AdamState adam;
  std::vector<double> loss_log;  // one entry per step
};

// Batch-size-one loop: per step, sample a model surface, augment, run the
// full differentiable pipeline, and take one Adam step.  Deterministic in
// cfg.seed.
TrainResult train(const std::vector<std::string>& model_paths, const TrainConfig& cfg);

void save_loss_log(const std::vector<double>& losses, const std::string& path);

enum class Dtype : std::uint8_t { kFloat32 = 0, kFloat64 = 1 };

struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  Dtype dtype = Dtype::kFloat32;
  std::vector<unsigned char> raw;  // little-endian payload
};

struct Checkpoint {
  std::vector<NamedTensor> tensors;
  std::uint64_t step = 0;
  std::string config_text;  // manifest-text config snapshot
};

// Binary format, little-endian: magic "RDRG", version u32 = 1, tensor
// count u32; per tensor: name length u16, name bytes, rank u8, dims u32
// each, dtype u8, raw data; then step u64 and a u32-length-prefixed
// config snapshot.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

Checkpoint make_checkpoint(const ParamStore<float>& params, const AdamState& adam,
                           std::uint64_t step, const std::string& config_text);
// Restores parameters (tensors named "param.*") and, when `adam` is not
// null, optimizer moments ("adam.m.*" / "adam.v.*").
void unpack_checkpoint(const Checkpoint& ckpt, ParamStore<float>& params, AdamState* adam);

}  // namespace nrreg
