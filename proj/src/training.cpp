#include "nrreg/training.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "nrreg/benchgen.hpp"
#include "nrreg/errors.hpp"
#include "nrreg/prng.hpp"
#include "nrreg/synthetic.hpp"

namespace nrreg {

void TrainConfig::validate() const {
  if (learning_rate <= 0) throw ContractError("train: learning_rate must be positive");
  if (epochs < 1) throw ContractError("train: epochs must be >= 1");
  if (samples_per_epoch < 1) throw ContractError("train: samples_per_epoch must be >= 1");
  if (points_per_cloud < 32) throw ContractError("train: points_per_cloud must be >= 32");
  if (max_deform < 0 || max_deform > 0.9)
    throw ContractError("train: max_deform must be in [0, 0.9]");
  descriptor.validate();
  match.validate();
}

template <typename T>
Tensor<T> l1_loss(Tape<T>& tape, Tensor<T> warped, Tensor<T> gt_targets) {
  if (warped.shape() != gt_targets.shape())
    throw ContractError("loss: size mismatch " + shape_str(warped.shape()) + " vs " +
                        shape_str(gt_targets.shape()));
  return tape.mae(warped, gt_targets);
}

AdamState make_adam_state(const ParamStore<float>& params) {
  AdamState state;
  state.m.reserve(params.entries.size());
  state.v.reserve(params.entries.size());
  for (const auto& e : params.entries) {
    state.m.emplace_back(e.value.size(), 0.0f);
    state.v.emplace_back(e.value.size(), 0.0f);
  }
  return state;
}

void adam_step(ParamStore<float>& params, const std::vector<std::vector<float>>& grads,
               AdamState& state, const TrainConfig& hyper) {
  if (grads.size() != params.entries.size() || state.m.size() != params.entries.size())
    throw ContractError("adam_step: parameter/gradient/state count mismatch");
  state.step += 1;
  const double t = double(state.step);
  const double bc1 = 1.0 - std::pow(hyper.beta1, t);
  const double bc2 = 1.0 - std::pow(hyper.beta2, t);
  for (std::size_t pi = 0; pi < params.entries.size(); ++pi) {
    auto& value = params.entries[pi].value;
    const auto& g = grads[pi];
    if (g.size() != value.size())
      throw ContractError("adam_step: gradient shape mismatch for " + params.entries[pi].name);
    auto& m = state.m[pi];
    auto& v = state.v[pi];
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double gi = double(g[i]);
      const double mi = hyper.beta1 * double(m[i]) + (1.0 - hyper.beta1) * gi;
      const double vi = hyper.beta2 * double(v[i]) + (1.0 - hyper.beta2) * gi * gi;
      m[i] = float(mi);
      v[i] = float(vi);
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      value[i] = float(double(value[i]) -
                       hyper.learning_rate * mhat / (std::sqrt(vhat) + hyper.adam_eps));
    }
  }
}

TrainResult train(const std::vector<std::string>& model_paths, const TrainConfig& cfg) {
  cfg.validate();
  if (model_paths.empty()) throw ContractError("train: empty model list");

  std::vector<TriMesh> meshes;
  meshes.reserve(model_paths.size());
  for (const auto& p : model_paths) meshes.push_back(load_model(p));

  TrainResult result;
  result.params = init_descriptor_params<float>(cfg.descriptor, derive_seed(cfg.seed, "init"));
  result.adam = make_adam_state(result.params);

  const long long total_steps = (long long)cfg.epochs * cfg.samples_per_epoch;
  result.loss_log.reserve(std::size_t(total_steps));

  for (long long step = 0; step < total_steps; ++step) {
    const std::uint64_t step_seed = derive_seed(cfg.seed, "step", std::uint64_t(step));
    RandomStream pick(step_seed, "model_pick");
    const std::size_t model_idx = std::size_t(pick.below(meshes.size()));

    PointCloud cloud = sample_surface(meshes[model_idx], std::size_t(cfg.points_per_cloud),
                                      derive_seed(step_seed, "sample"));
    normalize(cloud);
    SamplePair pair = training_augment(cloud, derive_seed(step_seed, "augment"),
                                       cfg.max_deform);

    Tape<float> tape;
    BoundParams<float> bound = bind_params(tape, result.params, /*trainable=*/true);
    PipelineOut<float> pipe =
        run_pipeline(tape, pair.source, pair.target, bound, cfg.descriptor, cfg.match);

    const std::size_t n = pair.source.size();
    std::vector<float> src_flat(n * 3), gt_flat(n * 3);
    for (std::size_t i = 0; i < n; ++i) {
      const Point3& gt = pair.target.points[std::size_t(pair.gt_map[i])];
      for (int d = 0; d < 3; ++d) {
        src_flat[i * 3 + d] = float(pair.source.points[i][d]);
        gt_flat[i * 3 + d] = float(gt[d]);
      }
    }
    Tensor<float> warped =
        tape.add(pipe.displacement, tape.constant({n, 3}, std::move(src_flat)));
    Tensor<float> loss =
        l1_loss(tape, warped, tape.constant({n, 3}, std::move(gt_flat)));
    result.loss_log.push_back(double(loss.values()[0]));

    tape.backward(loss);
    std::vector<std::vector<float>> grads;
    grads.reserve(result.params.entries.size());
    for (const auto& e : result.params.entries) grads.push_back(tape.grad(bound.at(e.name)));
    adam_step(result.params, grads, result.adam, cfg);
  }
  return result;
}

void save_loss_log(const std::vector<double>& losses, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("save_loss_log: cannot open " + path);
  char buf[64];
  for (double l : losses) {
    std::snprintf(buf, sizeof(buf), "%.17g\n", l);
    out << buf;
  }
  if (!out) throw IoError("save_loss_log: write failed for " + path);
}

namespace {

constexpr char kMagic[4] = {'R', 'D', 'R', 'G'};
constexpr std::uint32_t kVersion = 1;

void put_bytes(std::string& buf, const void* p, std::size_t n) {
  buf.append(reinterpret_cast<const char*>(p), n);
}
template <typename V>
void put(std::string& buf, V v) {
  put_bytes(buf, &v, sizeof(v));
}

struct Reader {
  const unsigned char* data;
  std::size_t size;
  std::size_t off = 0;

  void need(std::size_t n, const char* what) const {
    if (off + n > size)
      throw FormatError("checkpoint: truncated " + std::string(what) + " at offset " +
                        std::to_string(off));
  }
  void read(void* p, std::size_t n, const char* what) {
    need(n, what);
    std::memcpy(p, data + off, n);
    off += n;
  }
  template <typename V>
  V get(const char* what) {
    V v;
    read(&v, sizeof(v), what);
    return v;
  }
};

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::string buf;
  put_bytes(buf, kMagic, 4);
  put(buf, kVersion);
  put(buf, std::uint32_t(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    put(buf, std::uint16_t(t.name.size()));
    put_bytes(buf, t.name.data(), t.name.size());
    put(buf, std::uint8_t(t.dims.size()));
    for (std::uint32_t d : t.dims) put(buf, d);
    put(buf, std::uint8_t(t.dtype));
    put_bytes(buf, t.raw.data(), t.raw.size());
  }
  put(buf, ckpt.step);
  put(buf, std::uint32_t(ckpt.config_text.size()));
  put_bytes(buf, ckpt.config_text.data(), ckpt.config_text.size());

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_checkpoint: cannot open " + path);
  out.write(buf.data(), std::streamsize(buf.size()));
  if (!out) throw IoError("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_checkpoint: cannot open " + path);
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r{reinterpret_cast<const unsigned char*>(data.data()), data.size()};

  char magic[4];
  r.read(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("checkpoint: bad magic at offset 0");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kVersion)
    throw FormatError("checkpoint: unsupported version " + std::to_string(version) +
                      " at offset 4");
  const auto count = r.get<std::uint32_t>("tensor count");

  Checkpoint ckpt;
  ckpt.tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const auto name_len = r.get<std::uint16_t>("name length");
    t.name.resize(name_len);
    r.read(t.name.data(), name_len, "name");
    const auto rank = r.get<std::uint8_t>("rank");
    std::size_t numel = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      t.dims.push_back(r.get<std::uint32_t>("dims"));
      numel *= t.dims.back();
    }
    const auto dt = r.get<std::uint8_t>("dtype");
    if (dt > 1)
      throw FormatError("checkpoint: bad dtype " + std::to_string(dt) + " at offset " +
                        std::to_string(r.off - 1));
    t.dtype = Dtype(dt);
    const std::size_t bytes = numel * (t.dtype == Dtype::kFloat32 ? 4 : 8);
    t.raw.resize(bytes);
    r.read(t.raw.data(), bytes, "tensor data");
    ckpt.tensors.push_back(std::move(t));
  }
  ckpt.step = r.get<std::uint64_t>("step counter");
  const auto cfg_len = r.get<std::uint32_t>("config length");
  ckpt.config_text.resize(cfg_len);
  r.read(ckpt.config_text.data(), cfg_len, "config snapshot");
  if (r.off != r.size)
    throw FormatError("checkpoint: " + std::to_string(r.size - r.off) +
                      " trailing bytes at offset " + std::to_string(r.off));
  return ckpt;
}

namespace {

NamedTensor tensor_from_floats(const std::string& name, const Shape& shape,
                               const std::vector<float>& v) {
  NamedTensor t;
  t.name = name;
  for (std::size_t d : shape) t.dims.push_back(std::uint32_t(d));
  t.dtype = Dtype::kFloat32;
  t.raw.resize(v.size() * 4);
  std::memcpy(t.raw.data(), v.data(), t.raw.size());
  return t;
}

std::vector<float> floats_from_tensor(const NamedTensor& t) {
  if (t.dtype != Dtype::kFloat32)
    throw FormatError("checkpoint: tensor " + t.name + " has unexpected dtype");
  std::vector<float> v(t.raw.size() / 4);
  std::memcpy(v.data(), t.raw.data(), t.raw.size());
  return v;
}

}  // namespace

Checkpoint make_checkpoint(const ParamStore<float>& params, const AdamState& adam,
                           std::uint64_t step, const std::string& config_text) {
  Checkpoint ckpt;
  ckpt.step = step;
  ckpt.config_text = config_text;
  for (const auto& e : params.entries)
    ckpt.tensors.push_back(tensor_from_floats("param." + e.name, e.shape, e.value));
  for (std::size_t i = 0; i < adam.m.size(); ++i) {
    ckpt.tensors.push_back(
        tensor_from_floats("adam.m." + params.entries[i].name,
                           {adam.m[i].size()}, adam.m[i]));
    ckpt.tensors.push_back(
        tensor_from_floats("adam.v." + params.entries[i].name,
                           {adam.v[i].size()}, adam.v[i]));
  }
  return ckpt;
}

void unpack_checkpoint(const Checkpoint& ckpt, ParamStore<float>& params, AdamState* adam) {
  params.entries.clear();
  for (const auto& t : ckpt.tensors) {
    if (t.name.rfind("param.", 0) != 0) continue;
    Shape shape;
    for (std::uint32_t d : t.dims) shape.push_back(d);
    params.add(t.name.substr(6), shape, floats_from_tensor(t));
  }
  if (params.entries.empty()) throw FormatError("checkpoint: no parameter tensors");
  if (adam) {
    adam->step = ckpt.step;
    adam->m.clear();
    adam->v.clear();
    for (const auto& e : params.entries) {
      bool found_m = false, found_v = false;
      for (const auto& t : ckpt.tensors) {
        if (t.name == "adam.m." + e.name) {
          adam->m.push_back(floats_from_tensor(t));
          found_m = true;
        } else if (t.name == "adam.v." + e.name) {
          adam->v.push_back(floats_from_tensor(t));
          found_v = true;
        }
      }
      if (!found_m || !found_v)
        throw FormatError("checkpoint: missing optimizer state for " + e.name);
    }
  }
}

template Tensor<float> l1_loss<float>(Tape<float>&, Tensor<float>, Tensor<float>);
template Tensor<double> l1_loss<double>(Tape<double>&, Tensor<double>, Tensor<double>);

}  // namespace nrreg
