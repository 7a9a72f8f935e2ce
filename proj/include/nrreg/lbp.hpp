#pragma once

#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

#include "nrreg/featnet.hpp"
#include "nrreg/geometry.hpp"
#include "nrreg/tensor.hpp"

namespace nrreg {

struct LbpConfig {
  double alpha = 50.0;     // pairwise regularization strength
  int iterations = 3;      // synchronous message rounds
  double temperature = 1.0;  // softmax sharpness on negative beliefs

  void validate() const;
};

struct MatchConfig {
  int k_candidates = 16;  // target neighbors considered per source point
  int k_source = 10;      // source-graph k-NN
  LbpConfig lbp;
  bool refine = false;    // optional second pass from the warped source

  void validate() const;
};

// Per source point: k_c coordinate-space target candidates, their
// displacements, and the geometry shared by every LBP node of a run.
struct CandidateGeometry {
  std::size_t n = 0;
  int k = 0;
  std::vector<int> cand_idx;       // n*k target indices, ascending distance
  std::vector<double> cand_disp;   // n*k*3, candidate minus source point
};

template <typename T>
struct CandidateGraph {
  CandidateGeometry geom;
  Tensor<T> unary;  // n x k feature-space squared distances
};

// Directed source graph; for every edge (i,j) the reverse (j,i) exists,
// no self loops.  Edges are sorted by (src, dst).
struct SourceGraph {
  std::size_t n = 0;
  std::vector<int> src;
  std::vector<int> dst;
  std::vector<int> reverse_edge;  // index of (dst,src) for each edge

  std::size_t edge_count() const { return src.size(); }
};

// Symmetrized k-NN graph over the cloud coordinates (self excluded).
SourceGraph build_source_graph(const PointCloud& cloud, int k_source);
// Explicit construction from undirected edges (tests, tree oracles).
SourceGraph graph_from_undirected(std::size_t n,
                                  const std::vector<std::pair<int, int>>& edges);

// Coordinate-space k-NN candidates with displacements c - x and unary
// costs |f(x_i) - f(c_i^p)|^2, differentiable w.r.t. the feature tensors.
template <typename T>
CandidateGraph<T> build_candidates(Tape<T>& tape, const PointCloud& source,
                                   const PointCloud& target, Tensor<T> f_src,
                                   Tensor<T> f_tgt, int k_candidates);

// r[p][q] = |disp_i[p] - disp_j[q]|^2, row-major k x k.
std::vector<double> pairwise_reg(const double* disp_i, const double* disp_j, int k);

// Synchronous min-sum message passing.  Messages start at zero; each round
// recomputes every directed message from the previous round, subtracting
// the per-vector min as a numerical-safety rescale (argmins unchanged, the
// constant cancels in the softmax weights).  Returns beliefs
// b_i = d_i + sum of final incoming messages, differentiable via min
// pass-through.  iterations = 0 returns the unary costs.
template <typename T>
Tensor<T> lbp_run(Tape<T>& tape, const CandidateGraph<T>& cand, const SourceGraph& graph,
                  const LbpConfig& config);

template <typename T>
struct SoftDisplacement {
  Tensor<T> displacement;  // n x 3
  Tensor<T> weights;       // n x k, softmax of negative beliefs
};

template <typename T>
SoftDisplacement<T> soft_displacement(Tape<T>& tape, Tensor<T> beliefs,
                                      const CandidateGeometry& geom, double temperature);

template <typename T>
struct PipelineOut {
  DescribeResult<T> src_desc;
  DescribeResult<T> tgt_desc;
  CandidateGraph<T> cand;
  SourceGraph graph;
  Tensor<T> beliefs;
  Tensor<T> weights;
  Tensor<T> displacement;  // n x 3
};

// describe both clouds (on internally normalized copies) -> candidates ->
// source graph -> LBP -> softmax blending.
template <typename T>
PipelineOut<T> run_pipeline(Tape<T>& tape, const PointCloud& source, const PointCloud& target,
                            const BoundParams<T>& params, const DescriptorConfig& dcfg,
                            const MatchConfig& mcfg);

struct RegistrationResult {
  PointCloud warped;
  std::vector<Point3> displacement;
  std::vector<double> weights;  // n*k_candidates blending weights
  double elapsed_ms = 0;
};

RegistrationResult register_clouds(const PointCloud& source, const PointCloud& target,
                                   const ParamStore<float>& params,
                                   const DescriptorConfig& dcfg, const MatchConfig& mcfg);

}  // namespace nrreg
