#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "nrreg/geometry.hpp"
#include "nrreg/tensor.hpp"

namespace nrreg {

struct DescriptorConfig {
  int k_graph = 20;                          // neighbors for the feature graph
  std::array<int, 3> layer_widths{64, 64, 64};
  int out_dim = 64;
  bool with_alignment = true;                // off = baseline descriptor
  // Alignment-subnetwork widths: pointwise MLP, then a pooled head.
  int align_width0 = 32;
  int align_width1 = 64;
  int align_hidden = 32;

  void validate() const;
};

// Named parameter tensors, in a fixed registration order.
template <typename T>
struct ParamStore {
  struct Entry {
    std::string name;
    Shape shape;
    std::vector<T> value;
  };
  std::vector<Entry> entries;

  void add(std::string name, Shape shape, std::vector<T> value);
  Entry& at(std::string_view name);
  const Entry& at(std::string_view name) const;
  const Entry* find(std::string_view name) const;
  std::size_t total_values() const;
};

// Weights uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)] from per-tensor
// named substreams of `seed`; normalization gains 1, biases 0.  The
// alignment head's final layer starts at exactly the identity transform.
template <typename T>
ParamStore<T> init_descriptor_params(const DescriptorConfig& config, std::uint64_t seed);

// Parameters registered on a tape, as trainable leaves or constants.
template <typename T>
using BoundParams = std::map<std::string, Tensor<T>, std::less<>>;

template <typename T>
BoundParams<T> bind_params(Tape<T>& tape, const ParamStore<T>& store, bool trainable);

template <typename T>
struct AlignResult {
  Tensor<T> transform;  // 3 x 3
  Tensor<T> coords;     // n x 3, input multiplied by the transform
};

// Shared alignment network: pointwise MLP -> max pool -> head -> 3x3.
template <typename T>
AlignResult<T> align(Tape<T>& tape, Tensor<T> coords, const BoundParams<T>& params,
                     const DescriptorConfig& config);

// One edge-convolution layer: per edge MLP([h_i || h_j - h_i]) with
// instance normalization and leaky-ReLU, then per-channel max over the
// k_graph neighbors of each point.
template <typename T>
Tensor<T> edgeconv(Tape<T>& tape, Tensor<T> features, const std::vector<int>& graph,
                   int k_graph, const BoundParams<T>& params, const std::string& prefix);

template <typename T>
struct DescribeResult {
  Tensor<T> features;      // n x out_dim
  Tensor<T> transform;     // 3 x 3 (identity when alignment is disabled)
  std::vector<int> graph;  // n*k_graph feature-graph indices
};

// Full descriptor: align (optional) -> one k-NN graph on the transformed
// coordinates -> three edgeconv layers -> concat -> linear projection.
template <typename T>
DescribeResult<T> describe(Tape<T>& tape, const PointCloud& cloud,
                           const BoundParams<T>& params, const DescriptorConfig& config);

constexpr double kLeakySlope = 0.2;

}  // namespace nrreg
