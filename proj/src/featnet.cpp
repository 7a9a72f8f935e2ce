#include "nrreg/featnet.hpp"

#include <cmath>

#include "nrreg/errors.hpp"
#include "nrreg/prng.hpp"

namespace nrreg {

void DescriptorConfig::validate() const {
  if (k_graph < 1) throw ContractError("descriptor: k_graph must be >= 1");
  for (int w : layer_widths)
    if (w < 1) throw ContractError("descriptor: layer widths must be >= 1");
  if (out_dim < 1) throw ContractError("descriptor: out_dim must be >= 1");
  if (align_width0 < 1 || align_width1 < 1 || align_hidden < 1)
    throw ContractError("descriptor: alignment widths must be >= 1");
}

template <typename T>
void ParamStore<T>::add(std::string name, Shape shape, std::vector<T> value) {
  if (shape_numel(shape) != value.size())
    throw ContractError("param " + name + ": value size does not match shape");
  entries.push_back({std::move(name), std::move(shape), std::move(value)});
}

template <typename T>
typename ParamStore<T>::Entry& ParamStore<T>::at(std::string_view name) {
  for (auto& e : entries)
    if (e.name == name) return e;
  throw ContractError("param store: no tensor named '" + std::string(name) + "'");
}

template <typename T>
const typename ParamStore<T>::Entry& ParamStore<T>::at(std::string_view name) const {
  for (const auto& e : entries)
    if (e.name == name) return e;
  throw ContractError("param store: no tensor named '" + std::string(name) + "'");
}

template <typename T>
const typename ParamStore<T>::Entry* ParamStore<T>::find(std::string_view name) const {
  for (const auto& e : entries)
    if (e.name == name) return &e;
  return nullptr;
}

template <typename T>
std::size_t ParamStore<T>::total_values() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.value.size();
  return n;
}

namespace {

template <typename T>
std::vector<T> uniform_init(std::uint64_t seed, const std::string& name, std::size_t count,
                            std::size_t fan_in) {
  RandomStream rs(seed, name);
  const double bound = 1.0 / std::sqrt(double(fan_in));
  std::vector<T> v(count);
  for (auto& x : v) x = T(rs.uniform(-bound, bound));
  return v;
}

template <typename T>
void add_linear(ParamStore<T>& store, std::uint64_t seed, const std::string& prefix,
                std::size_t in, std::size_t out) {
  store.add(prefix + ".w", {in, out}, uniform_init<T>(seed, prefix + ".w", in * out, in));
  store.add(prefix + ".b", {out}, uniform_init<T>(seed, prefix + ".b", out, in));
}

template <typename T>
void add_norm(ParamStore<T>& store, const std::string& prefix, std::size_t c) {
  store.add(prefix + ".g", {c}, std::vector<T>(c, T(1)));
  store.add(prefix + ".b", {c}, std::vector<T>(c, T(0)));
}

}  // namespace

template <typename T>
ParamStore<T> init_descriptor_params(const DescriptorConfig& config, std::uint64_t seed) {
  config.validate();
  ParamStore<T> store;

  add_linear(store, seed, "align.p1", 3, config.align_width0);
  add_norm(store, "align.in1", config.align_width0);
  add_linear(store, seed, "align.p2", config.align_width0, config.align_width1);
  add_norm(store, "align.in2", config.align_width1);
  add_linear(store, seed, "align.h1", config.align_width1, config.align_hidden);
  // Zero weight plus identity bias: the initial transform is exactly I.
  store.add("align.out.w", {std::size_t(config.align_hidden), 9},
            std::vector<T>(std::size_t(config.align_hidden) * 9, T(0)));
  store.add("align.out.b", {9}, {T(1), T(0), T(0), T(0), T(1), T(0), T(0), T(0), T(1)});

  std::size_t c_in = 3;
  for (int layer = 0; layer < 3; ++layer) {
    const std::string p = "ec" + std::to_string(layer + 1);
    const std::size_t w = std::size_t(config.layer_widths[layer]);
    add_linear(store, seed, p + ".l1", 2 * c_in, w);
    add_norm(store, p + ".in1", w);
    add_linear(store, seed, p + ".l2", w, w);
    add_norm(store, p + ".in2", w);
    c_in = w;
  }
  const std::size_t cat = std::size_t(config.layer_widths[0]) +
                          std::size_t(config.layer_widths[1]) +
                          std::size_t(config.layer_widths[2]);
  add_linear(store, seed, "proj", cat, std::size_t(config.out_dim));
  return store;
}

template <typename T>
BoundParams<T> bind_params(Tape<T>& tape, const ParamStore<T>& store, bool trainable) {
  BoundParams<T> bound;
  for (const auto& e : store.entries) {
    bound.emplace(e.name, trainable ? tape.leaf(e.shape, e.value)
                                    : tape.constant(e.shape, e.value));
  }
  return bound;
}

namespace {

template <typename T>
Tensor<T> param(const BoundParams<T>& params, std::string_view name) {
  auto it = params.find(name);
  if (it == params.end())
    throw ContractError("bound params: missing tensor '" + std::string(name) + "'");
  return it->second;
}

template <typename T>
Tensor<T> linear(Tape<T>& tape, Tensor<T> x, const BoundParams<T>& params,
                 const std::string& prefix) {
  return tape.add_rowvec(tape.matmul(x, param(params, prefix + ".w")),
                         param(params, prefix + ".b"));
}

template <typename T>
Tensor<T> norm_act(Tape<T>& tape, Tensor<T> x, const BoundParams<T>& params,
                   const std::string& prefix) {
  return tape.leaky_relu(
      tape.instance_norm(x, param(params, prefix + ".g"), param(params, prefix + ".b")),
      kLeakySlope);
}

}  // namespace

template <typename T>
AlignResult<T> align(Tape<T>& tape, Tensor<T> coords, const BoundParams<T>& params,
                     const DescriptorConfig& config) {
  const std::size_t n = coords.shape()[0];
  if (n < std::size_t(config.k_graph))
    throw ContractError("align: cloud size " + std::to_string(n) +
                        " is smaller than k_graph " + std::to_string(config.k_graph));
  Tensor<T> h = norm_act(tape, linear(tape, coords, params, "align.p1"), params, "align.in1");
  h = norm_act(tape, linear(tape, h, params, "align.p2"), params, "align.in2");
  Tensor<T> pooled = tape.segment_max(h, n);  // 1 x width
  // No normalization on the pooled head: a single row has no instance axis.
  Tensor<T> head = tape.leaky_relu(linear(tape, pooled, params, "align.h1"), kLeakySlope);
  Tensor<T> out9 = linear(tape, head, params, "align.out");
  Tensor<T> transform = tape.reshape(out9, {3, 3});
  return {transform, tape.matmul(coords, transform)};
}

template <typename T>
Tensor<T> edgeconv(Tape<T>& tape, Tensor<T> features, const std::vector<int>& graph,
                   int k_graph, const BoundParams<T>& params, const std::string& prefix) {
  const std::size_t n = features.shape()[0];
  if (graph.size() != n * std::size_t(k_graph))
    throw ContractError("edgeconv: graph size does not match n*k_graph");
  std::vector<int> centers(graph.size());
  for (std::size_t i = 0; i < n; ++i)
    for (int j = 0; j < k_graph; ++j) centers[i * k_graph + j] = int(i);

  Tensor<T> hc = tape.gather_rows(features, centers);
  Tensor<T> hn = tape.gather_rows(features, graph);
  Tensor<T> edges = tape.concat_cols({hc, tape.sub(hn, hc)});

  Tensor<T> z = norm_act(tape, linear(tape, edges, params, prefix + ".l1"), params,
                         prefix + ".in1");
  z = norm_act(tape, linear(tape, z, params, prefix + ".l2"), params, prefix + ".in2");
  return tape.segment_max(z, std::size_t(k_graph));
}

template <typename T>
DescribeResult<T> describe(Tape<T>& tape, const PointCloud& cloud,
                           const BoundParams<T>& params, const DescriptorConfig& config) {
  config.validate();
  const std::size_t n = cloud.size();
  if (n < std::size_t(config.k_graph))
    throw ContractError("describe: cloud size " + std::to_string(n) +
                        " is smaller than k_graph " + std::to_string(config.k_graph));

  std::vector<T> flat(n * 3);
  for (std::size_t i = 0; i < n; ++i)
    for (int d = 0; d < 3; ++d) flat[i * 3 + d] = T(cloud.points[i][d]);
  Tensor<T> coords = tape.constant({n, 3}, std::move(flat));

  Tensor<T> transform;
  Tensor<T> aligned;
  if (config.with_alignment) {
    AlignResult<T> ar = align(tape, coords, params, config);
    transform = ar.transform;
    aligned = ar.coords;
  } else {
    transform = tape.constant({3, 3}, {T(1), T(0), T(0), T(0), T(1), T(0), T(0), T(0), T(1)});
    aligned = tape.matmul(coords, transform);
  }

  // One static graph on the transformed coordinates, shared by all layers.
  const auto& av = aligned.values();
  std::vector<double> pos(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) pos[i] = double(av[i]);
  std::vector<int> graph = knn(pos.data(), n, pos.data(), n, 3, std::size_t(config.k_graph));

  Tensor<T> h1 = edgeconv(tape, aligned, graph, config.k_graph, params, "ec1");
  Tensor<T> h2 = edgeconv(tape, h1, graph, config.k_graph, params, "ec2");
  Tensor<T> h3 = edgeconv(tape, h2, graph, config.k_graph, params, "ec3");
  Tensor<T> cat = tape.concat_cols({h1, h2, h3});
  Tensor<T> features = linear(tape, cat, params, "proj");
  ensure_finite(features, "describe");
  return {features, transform, std::move(graph)};
}

template struct ParamStore<float>;
template struct ParamStore<double>;
template ParamStore<float> init_descriptor_params<float>(const DescriptorConfig&, std::uint64_t);
template ParamStore<double> init_descriptor_params<double>(const DescriptorConfig&, std::uint64_t);
template BoundParams<float> bind_params<float>(Tape<float>&, const ParamStore<float>&, bool);
template BoundParams<double> bind_params<double>(Tape<double>&, const ParamStore<double>&, bool);
template AlignResult<float> align<float>(Tape<float>&, Tensor<float>, const BoundParams<float>&,
                                         const DescriptorConfig&);
template AlignResult<double> align<double>(Tape<double>&, Tensor<double>,
                                           const BoundParams<double>&, const DescriptorConfig&);
template Tensor<float> edgeconv<float>(Tape<float>&, Tensor<float>, const std::vector<int>&,
                                       int, const BoundParams<float>&, const std::string&);
template Tensor<double> edgeconv<double>(Tape<double>&, Tensor<double>, const std::vector<int>&,
                                         int, const BoundParams<double>&, const std::string&);
template DescribeResult<float> describe<float>(Tape<float>&, const PointCloud&,
                                               const BoundParams<float>&,
                                               const DescriptorConfig&);
template DescribeResult<double> describe<double>(Tape<double>&, const PointCloud&,
                                                 const BoundParams<double>&,
                                                 const DescriptorConfig&);

}  // namespace nrreg
