#include "nrreg/lbp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>

#include "nrreg/errors.hpp"

namespace nrreg {

void LbpConfig::validate() const {
  if (alpha < 0) throw ContractError("lbp: alpha must be >= 0");
  if (iterations < 0) throw ContractError("lbp: iterations must be >= 0");
  if (temperature <= 0) throw ContractError("lbp: temperature must be positive");
}

void MatchConfig::validate() const {
  if (k_candidates < 1) throw ContractError("match: k_candidates must be >= 1");
  if (k_source < 1) throw ContractError("match: k_source must be >= 1");
  lbp.validate();
}

SourceGraph build_source_graph(const PointCloud& cloud, int k_source) {
  const std::size_t n = cloud.size();
  if (n < 2) throw ContractError("source graph: need at least 2 points");
  if (k_source < 1) throw ContractError("source graph: k_source must be >= 1");
  const std::size_t k_eff = std::min<std::size_t>(std::size_t(k_source), n - 1);
  const std::vector<int> nbrs = knn(cloud, cloud, k_eff + 1);

  std::vector<std::pair<int, int>> edges;
  edges.reserve(n * k_eff * 2);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t taken = 0;
    for (std::size_t j = 0; j < k_eff + 1 && taken < k_eff; ++j) {
      const int nb = nbrs[i * (k_eff + 1) + j];
      if (nb == int(i)) continue;
      edges.emplace_back(int(i), nb);
      edges.emplace_back(nb, int(i));
      ++taken;
    }
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

  SourceGraph g;
  g.n = n;
  g.src.reserve(edges.size());
  g.dst.reserve(edges.size());
  std::map<std::pair<int, int>, int> index;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    g.src.push_back(edges[e].first);
    g.dst.push_back(edges[e].second);
    index[edges[e]] = int(e);
  }
  g.reverse_edge.resize(edges.size());
  for (std::size_t e = 0; e < edges.size(); ++e)
    g.reverse_edge[e] = index.at({edges[e].second, edges[e].first});
  return g;
}

SourceGraph graph_from_undirected(std::size_t n,
                                  const std::vector<std::pair<int, int>>& edges) {
  std::vector<std::pair<int, int>> directed;
  directed.reserve(edges.size() * 2);
  for (const auto& [a, b] : edges) {
    if (a == b) throw ContractError("source graph: self loop");
    if (a < 0 || b < 0 || std::size_t(a) >= n || std::size_t(b) >= n)
      throw ContractError("source graph: edge endpoint out of range");
    directed.emplace_back(a, b);
    directed.emplace_back(b, a);
  }
  std::sort(directed.begin(), directed.end());
  directed.erase(std::unique(directed.begin(), directed.end()), directed.end());

  SourceGraph g;
  g.n = n;
  std::map<std::pair<int, int>, int> index;
  for (std::size_t e = 0; e < directed.size(); ++e) {
    g.src.push_back(directed[e].first);
    g.dst.push_back(directed[e].second);
    index[directed[e]] = int(e);
  }
  g.reverse_edge.resize(directed.size());
  for (std::size_t e = 0; e < directed.size(); ++e)
    g.reverse_edge[e] = index.at({directed[e].second, directed[e].first});
  return g;
}

template <typename T>
CandidateGraph<T> build_candidates(Tape<T>& tape, const PointCloud& source,
                                   const PointCloud& target, Tensor<T> f_src, Tensor<T> f_tgt,
                                   int k_candidates) {
  const std::size_t n = source.size();
  const std::size_t m = target.size();
  if (k_candidates < 1 || std::size_t(k_candidates) > m)
    throw ContractError("build_candidates: k_candidates " + std::to_string(k_candidates) +
                        " exceeds target size " + std::to_string(m));
  if (f_src.shape()[0] != n || f_tgt.shape()[0] != m)
    throw ContractError("build_candidates: feature sets do not match cloud sizes");
  const std::size_t k = std::size_t(k_candidates);

  CandidateGraph<T> cg;
  cg.geom.n = n;
  cg.geom.k = k_candidates;
  cg.geom.cand_idx = knn(source, target, k);
  cg.geom.cand_disp.resize(n * k * 3);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const Point3& c = target.points[std::size_t(cg.geom.cand_idx[i * k + p])];
      for (int d = 0; d < 3; ++d)
        cg.geom.cand_disp[(i * k + p) * 3 + d] = c[d] - source.points[i][d];
    }
  }

  std::vector<int> centers(n * k);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < k; ++p) centers[i * k + p] = int(i);
  Tensor<T> fs = tape.gather_rows(f_src, centers);
  Tensor<T> ft = tape.gather_rows(f_tgt, cg.geom.cand_idx);
  Tensor<T> diff = tape.sub(fs, ft);
  Tensor<T> sq = tape.mul(diff, diff);
  cg.unary = tape.reshape(tape.row_sum(sq), {n, k});
  return cg;
}

std::vector<double> pairwise_reg(const double* disp_i, const double* disp_j, int k) {
  std::vector<double> r(std::size_t(k) * std::size_t(k));
  for (int p = 0; p < k; ++p) {
    for (int q = 0; q < k; ++q) {
      const double dx = disp_i[3 * p] - disp_j[3 * q];
      const double dy = disp_i[3 * p + 1] - disp_j[3 * q + 1];
      const double dz = disp_i[3 * p + 2] - disp_j[3 * q + 2];
      r[std::size_t(p) * k + q] = dx * dx + dy * dy + dz * dz;
    }
  }
  return r;
}

template <typename T>
Tensor<T> lbp_run(Tape<T>& tape, const CandidateGraph<T>& cand, const SourceGraph& graph,
                  const LbpConfig& config) {
  config.validate();
  if (graph.n != cand.geom.n)
    throw ContractError("lbp_run: graph and candidate sizes disagree");
  Tensor<T> unary = cand.unary;
  if (config.iterations == 0 || graph.edge_count() == 0) return unary;

  const std::size_t k = std::size_t(cand.geom.k);
  const std::size_t ne = graph.edge_count();

  auto ctx = std::make_shared<LbpEdgeContext>();
  ctx->k = cand.geom.k;
  ctx->alpha = config.alpha;
  ctx->src = graph.src;
  ctx->dst = graph.dst;
  ctx->disp = cand.geom.cand_disp;

  Tensor<T> messages = tape.zeros({ne, k});
  for (int t = 0; t < config.iterations; ++t) {
    Tensor<T> incoming = tape.index_sum_rows(messages, graph.dst, graph.n);
    Tensor<T> pre = tape.sub(
        tape.add(tape.gather_rows(unary, graph.src), tape.gather_rows(incoming, graph.src)),
        tape.gather_rows(messages, graph.reverse_edge));
    Tensor<T> raw = tape.lbp_min_plus(pre, ctx);
    messages = tape.sub_colvec(raw, tape.min_select_rows(raw).values);
  }
  Tensor<T> beliefs = tape.add(unary, tape.index_sum_rows(messages, graph.dst, graph.n));
  ensure_finite(beliefs, "lbp_run");
  return beliefs;
}

template <typename T>
SoftDisplacement<T> soft_displacement(Tape<T>& tape, Tensor<T> beliefs,
                                      const CandidateGeometry& geom, double temperature) {
  if (temperature <= 0) throw ContractError("soft_displacement: temperature must be positive");
  Tensor<T> weights = tape.softmax_rows(tape.scale(beliefs, -temperature));
  std::vector<T> disp(geom.cand_disp.size());
  for (std::size_t i = 0; i < disp.size(); ++i) disp[i] = T(geom.cand_disp[i]);
  Tensor<T> d = tape.constant({geom.n, std::size_t(geom.k), 3}, std::move(disp));
  Tensor<T> u = tape.blend_rows(weights, d);
  ensure_finite(u, "soft_displacement");
  return {u, weights};
}

template <typename T>
PipelineOut<T> run_pipeline(Tape<T>& tape, const PointCloud& source, const PointCloud& target,
                            const BoundParams<T>& params, const DescriptorConfig& dcfg,
                            const MatchConfig& mcfg) {
  mcfg.validate();
  if (source.size() == 0 || target.size() == 0)
    throw ContractError("register: clouds must be non-empty");
  if (source.size() < std::size_t(mcfg.k_source))
    throw ContractError("register: source size " + std::to_string(source.size()) +
                        " is smaller than k_source " + std::to_string(mcfg.k_source));
  if (target.size() < std::size_t(mcfg.k_candidates))
    throw ContractError("register: target size " + std::to_string(target.size()) +
                        " is smaller than k_candidates " + std::to_string(mcfg.k_candidates));

  // Features come from normalized copies; candidates and displacements
  // stay in the input coordinate frame.
  PointCloud ns = source;
  PointCloud nt = target;
  normalize(ns);
  normalize(nt);

  PipelineOut<T> out;
  out.src_desc = describe(tape, ns, params, dcfg);
  out.tgt_desc = describe(tape, nt, params, dcfg);
  out.cand = build_candidates(tape, source, target, out.src_desc.features,
                              out.tgt_desc.features, mcfg.k_candidates);
  out.graph = build_source_graph(source, mcfg.k_source);
  out.beliefs = lbp_run(tape, out.cand, out.graph, mcfg.lbp);
  SoftDisplacement<T> sd = soft_displacement(tape, out.beliefs, out.cand.geom,
                                             mcfg.lbp.temperature);
  out.weights = sd.weights;
  out.displacement = sd.displacement;
  return out;
}

RegistrationResult register_clouds(const PointCloud& source, const PointCloud& target,
                                   const ParamStore<float>& params,
                                   const DescriptorConfig& dcfg, const MatchConfig& mcfg) {
  const auto t0 = std::chrono::steady_clock::now();

  RegistrationResult result;
  result.displacement.assign(source.size(), {0, 0, 0});

  PointCloud current = source;
  const int passes = mcfg.refine ? 2 : 1;
  for (int pass = 0; pass < passes; ++pass) {
    Tape<float> tape;
    BoundParams<float> bound = bind_params(tape, params, /*trainable=*/false);
    PipelineOut<float> pipe = run_pipeline(tape, current, target, bound, dcfg, mcfg);
    const auto& u = pipe.displacement.values();
    for (std::size_t i = 0; i < current.size(); ++i)
      for (int d = 0; d < 3; ++d) {
        current.points[i][d] += double(u[i * 3 + d]);
        result.displacement[i][d] += double(u[i * 3 + d]);
      }
    const auto& w = pipe.weights.values();
    result.weights.assign(w.begin(), w.end());
  }
  result.warped = current;

  const auto t1 = std::chrono::steady_clock::now();
  result.elapsed_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  return result;
}

template CandidateGraph<float> build_candidates<float>(Tape<float>&, const PointCloud&,
                                                       const PointCloud&, Tensor<float>,
                                                       Tensor<float>, int);
template CandidateGraph<double> build_candidates<double>(Tape<double>&, const PointCloud&,
                                                         const PointCloud&, Tensor<double>,
                                                         Tensor<double>, int);
template Tensor<float> lbp_run<float>(Tape<float>&, const CandidateGraph<float>&,
                                      const SourceGraph&, const LbpConfig&);
template Tensor<double> lbp_run<double>(Tape<double>&, const CandidateGraph<double>&,
                                        const SourceGraph&, const LbpConfig&);
template SoftDisplacement<float> soft_displacement<float>(Tape<float>&, Tensor<float>,
                                                          const CandidateGeometry&, double);
template SoftDisplacement<double> soft_displacement<double>(Tape<double>&, Tensor<double>,
                                                            const CandidateGeometry&, double);
template PipelineOut<float> run_pipeline<float>(Tape<float>&, const PointCloud&,
                                                const PointCloud&, const BoundParams<float>&,
                                                const DescriptorConfig&, const MatchConfig&);
template PipelineOut<double> run_pipeline<double>(Tape<double>&, const PointCloud&,
                                                  const PointCloud&, const BoundParams<double>&,
                                                  const DescriptorConfig&, const MatchConfig&);

}  // namespace nrreg
