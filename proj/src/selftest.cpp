#include "nrreg/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "nrreg/benchgen.hpp"
#include "nrreg/config.hpp"
#include "nrreg/errors.hpp"
#include "nrreg/evalrep.hpp"
#include "nrreg/featnet.hpp"
#include "nrreg/geometry.hpp"
#include "nrreg/lbp.hpp"
#include "nrreg/prng.hpp"
#include "nrreg/synthetic.hpp"
#include "nrreg/tensor.hpp"
#include "nrreg/training.hpp"

namespace nrreg {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::vector<double> rand_vec(RandomStream& rs, std::size_t n, double lo = -1, double hi = 1) {
  std::vector<double> v(n);
  for (auto& x : v) x = rs.uniform(lo, hi);
  return v;
}

PointCloud rand_cloud(std::uint64_t seed, std::size_t n) {
  RandomStream rs(seed, "cloud");
  PointCloud c;
  c.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    c.points.push_back({rs.uniform(-1, 1), rs.uniform(-1, 1), rs.uniform(-1, 1)});
  return c;
}

// Exhaustive MAP over k^n labelings of sum_i d_i[x_i] + alpha * sum_edges r.
std::vector<int> brute_force_map(const std::vector<std::vector<double>>& unary,
                                 const std::vector<std::pair<int, int>>& edges,
                                 const std::vector<double>& disp, int k, double alpha) {
  const std::size_t n = unary.size();
  std::vector<int> label(n, 0), best(n, 0);
  double best_cost = std::numeric_limits<double>::infinity();
  while (true) {
    double cost = 0;
    for (std::size_t i = 0; i < n; ++i) cost += unary[i][std::size_t(label[i])];
    for (const auto& [a, b] : edges) {
      const double* da = disp.data() + (std::size_t(a) * k + label[a]) * 3;
      const double* db = disp.data() + (std::size_t(b) * k + label[b]) * 3;
      const double dx = da[0] - db[0], dy = da[1] - db[1], dz = da[2] - db[2];
      cost += alpha * (dx * dx + dy * dy + dz * dz);
    }
    if (cost < best_cost) {
      best_cost = cost;
      best = label;
    }
    std::size_t pos = 0;
    while (pos < n && ++label[pos] == k) label[pos++] = 0;
    if (pos == n) break;
  }
  return best;
}

int tree_diameter(std::size_t n, const std::vector<std::pair<int, int>>& edges) {
  std::vector<std::vector<int>> adj(n);
  for (const auto& [a, b] : edges) {
    adj[std::size_t(a)].push_back(b);
    adj[std::size_t(b)].push_back(a);
  }
  auto bfs = [&](int start) {
    std::vector<int> dist(n, -1);
    std::vector<int> queue{start};
    dist[std::size_t(start)] = 0;
    for (std::size_t qi = 0; qi < queue.size(); ++qi)
      for (int nb : adj[std::size_t(queue[qi])])
        if (dist[std::size_t(nb)] < 0) {
          dist[std::size_t(nb)] = dist[std::size_t(queue[qi])] + 1;
          queue.push_back(nb);
        }
    int far = start;
    for (std::size_t i = 0; i < n; ++i)
      if (dist[i] > dist[std::size_t(far)]) far = int(i);
    return std::make_pair(far, dist[std::size_t(far)]);
  };
  const auto [far, unused] = bfs(0);
  return bfs(far).second;
}

// Belief argmins from lbp_run on an explicitly constructed instance.
std::vector<int> lbp_argmins(const std::vector<std::vector<double>>& unary,
                             const std::vector<std::pair<int, int>>& edges,
                             const std::vector<double>& disp, int k, double alpha,
                             int iterations) {
  const std::size_t n = unary.size();
  Tape<double> tape;
  std::vector<double> flat;
  for (const auto& row : unary) flat.insert(flat.end(), row.begin(), row.end());
  CandidateGraph<double> cand;
  cand.geom.n = n;
  cand.geom.k = k;
  cand.geom.cand_idx.assign(n * std::size_t(k), 0);
  cand.geom.cand_disp = disp;
  cand.unary = tape.constant({n, std::size_t(k)}, flat);
  const SourceGraph graph = graph_from_undirected(n, edges);
  LbpConfig cfg;
  cfg.alpha = alpha;
  cfg.iterations = iterations;
  Tensor<double> beliefs = lbp_run(tape, cand, graph, cfg);
  const auto& b = beliefs.values();
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    int arg = 0;
    for (int q = 1; q < k; ++q)
      if (b[i * std::size_t(k) + std::size_t(q)] < b[i * std::size_t(k) + std::size_t(arg)])
        arg = q;
    out[i] = arg;
  }
  return out;
}

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

std::vector<SelfTestResult> run_selftest() {
  std::vector<SelfTestResult> results;
  auto check = [&](const std::string& name, bool ok, const std::string& detail = "") {
    results.push_back({name, ok, detail});
  };
  auto close = [](double a, double b, double tol) { return std::abs(a - b) <= tol; };

  // ---- tensor primitives ----
  {
    Tape<double> t;
    Tensor<double> eye = t.constant({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Tensor<double> m = t.constant({3, 3}, {2, -1, 4, 0, 3, 5, 7, 1, -2});
    check("matmul.identity", t.matmul(eye, m).values() == m.values());

    Tensor<double> a = t.constant({2, 2}, {1, 2, 3, 4});
    Tensor<double> b = t.constant({2, 1}, {1, 1});
    const auto& v = t.matmul(a, b).values();
    check("matmul.hand", v[0] == 3 && v[1] == 7);
  }
  {
    RandomStream rs(11, "mm");
    const std::vector<double> a = rand_vec(rs, 20), b = rand_vec(rs, 10);
    Tape<double> t;
    const auto& c = t.matmul(t.constant({4, 5}, a), t.constant({5, 2}, b)).values();
    double worst = 0;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 2; ++j) {
        double ref = 0;
        for (int k = 0; k < 5; ++k) ref += a[i * 5 + k] * b[k * 2 + j];
        worst = std::max(worst, std::abs(ref - c[i * 2 + j]) /
                                    std::max({std::abs(ref), std::abs(c[i * 2 + j]), 1.0}));
      }
    check("matmul.triple_loop", worst <= 1e-6, "rel err " + std::to_string(worst));
  }
  {
    Tape<double> t;
    Tensor<double> g = t.constant({1}, {1});
    Tensor<double> bz = t.constant({1}, {0});
    Tensor<double> x = t.constant({4, 1}, {5, 5, 5, 5});
    const auto& y = t.instance_norm(x, g, bz).values();
    check("instance_norm.constant_column",
          std::all_of(y.begin(), y.end(), [](double v) { return std::abs(v) < 1e-12; }));

    Tensor<double> x2 = t.constant({2, 1}, {1, 3});
    const auto& y2 = t.instance_norm(x2, g, bz, 1e-12).values();
    check("instance_norm.hand_pm1", close(y2[0], -1, 1e-5) && close(y2[1], 1, 1e-5));

    RandomStream rs(12, "in");
    Tensor<double> x3 = t.constant({64, 1}, rand_vec(rs, 64, -3, 3));
    const auto& y3 = t.instance_norm(x3, g, bz).values();
    double mean = 0, var = 0;
    for (double v : y3) mean += v;
    mean /= 64;
    for (double v : y3) var += (v - mean) * (v - mean);
    var /= 64;
    check("instance_norm.moments", std::abs(mean) < 1e-5 && std::abs(var - 1) < 1e-3,
          "mean " + std::to_string(mean) + " var " + std::to_string(var));
  }
  {
    Tape<double> t;
    const auto& s = t.softmax_rows(t.constant({1, 3}, {0, 0, 0})).values();
    check("softmax.symmetry", close(s[0], 1.0 / 3, 1e-12) && close(s[1], 1.0 / 3, 1e-12));
    const auto& s2 = t.softmax_rows(t.constant({1, 2}, {1000, 0})).values();
    check("softmax.saturation", close(s2[0], 1, 1e-12) && close(s2[1], 0, 1e-12));
    const auto& s3 =
        t.softmax_rows(t.constant({1, 3}, {std::log(1.0), std::log(2.0), std::log(3.0)}))
            .values();
    check("softmax.hand_log123", close(s3[0], 1.0 / 6, 1e-9) && close(s3[1], 2.0 / 6, 1e-9) &&
                                     close(s3[2], 3.0 / 6, 1e-9));
    RandomStream rs(13, "sm");
    const auto& s4 = t.softmax_rows(t.constant({4, 5}, rand_vec(rs, 20, -4, 4))).values();
    bool ok = true;
    for (int i = 0; i < 4; ++i) {
      double sum = 0;
      for (int j = 0; j < 5; ++j) {
        ok = ok && s4[i * 5 + j] >= 0;
        sum += s4[i * 5 + j];
      }
      ok = ok && std::abs(sum - 1) <= 1e-6;
    }
    check("softmax.probability_vector", ok);
  }
  {
    Tape<double> t;
    MinSelectResult<double> r = t.min_select_rows(t.constant({1, 3}, {3, 1, 2}));
    check("min_select.basic", r.values.values()[0] == 1 && r.indices[0] == 1);
    MinSelectResult<double> r2 = t.min_select_rows(t.constant({1, 2}, {2, 2}));
    check("min_select.tie_first", r2.values.values()[0] == 2 && r2.indices[0] == 0);
  }
  {
    // y = x and y = sum(x*x): hand-checked backward results.
    Tape<double> t;
    Tensor<double> x = t.leaf({1}, {1.5});
    t.backward(x);
    check("backward.identity", t.grad(x)[0] == 1.0);

    Tape<double> t2;
    Tensor<double> x2 = t2.leaf({1, 3}, {1, -2, 3});
    Tensor<double> y = t2.reshape(t2.row_sum(t2.mul(x2, x2)), {1});
    t2.backward(y);
    const auto& g = t2.grad(x2);
    check("backward.sum_square", g[0] == 2 && g[1] == -4 && g[2] == 6);

    t2.backward(y);
    check("backward.repeatable", t2.grad(x2) == g);
  }

  // ---- geometry ----
  {
    const std::string p = tmp_path("nrreg_selftest_tetra.off");
    {
      std::ofstream f(p);
      f << "OFF\n4 4 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 1 2\n3 0 1 3\n3 0 2 3\n3 1 2 3\n";
    }
    const TriMesh mesh = load_off(p);
    check("off.tetrahedron", mesh.vertices.size() == 4 && mesh.faces.size() == 4);

    const std::string p2 = tmp_path("nrreg_selftest_coff.off");
    {
      std::ofstream f(p2);
      f << "COFF\n1 0 0\n0 0 0\n";
    }
    bool threw = false;
    try {
      load_off(p2);
    } catch (const ParseError&) {
      threw = true;
    }
    check("off.coff_rejected", threw);

    const std::string p3 = tmp_path("nrreg_selftest_quad.off");
    {
      std::ofstream f(p3);
      f << "OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n";
    }
    const TriMesh quad = load_off(p3);
    check("off.quad_fan", quad.faces.size() == 2 && quad.faces[0] == std::array<int, 3>{0, 1, 2} &&
                              quad.faces[1] == std::array<int, 3>{0, 2, 3});
  }
  {
    TriMesh tri;
    tri.vertices = {{0, 0, 0}, {2, 0, 0}, {0, 2, 0}};
    tri.faces = {{0, 1, 2}};
    const PointCloud s = sample_surface(tri, 500, 7);
    bool inside = true;
    for (const auto& p : s.points) {
      const double u = p[0] / 2, v = p[1] / 2;
      inside = inside && u >= -1e-6 && v >= -1e-6 && u + v <= 1 + 1e-6 &&
               std::abs(p[2]) < 1e-12;
    }
    check("sample.barycentric", inside);

    TriMesh two;
    two.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 2, 0}, {5, 0, 0}, {5 + 3, 0, 0}, {5, 2, 0}};
    two.faces = {{0, 1, 2}, {3, 4, 5}};  // areas 1 and 3
    const PointCloud s2 = sample_surface(two, 4000, 11);
    std::size_t first = 0;
    for (const auto& p : s2.points)
      if (p[0] < 4) ++first;
    check("sample.area_weighted", first > 800 && first < 1200,
          "triangle-1 count " + std::to_string(first));
    const PointCloud s3 = sample_surface(two, 4000, 11);
    check("sample.deterministic", s2.points == s3.points);
  }
  {
    PointCloud c = rand_cloud(21, 200);
    const std::vector<int> got = knn(c, c, 10);
    bool ok = true;
    for (std::size_t i = 0; i < c.size() && ok; ++i) {
      std::vector<std::pair<double, int>> all;
      for (std::size_t j = 0; j < c.size(); ++j) {
        double d = 0;
        for (int dd = 0; dd < 3; ++dd)
          d += (c.points[i][dd] - c.points[j][dd]) * (c.points[i][dd] - c.points[j][dd]);
        all.push_back({d, int(j)});
      }
      std::sort(all.begin(), all.end());
      for (int k = 0; k < 10; ++k) ok = ok && got[i * 10 + std::size_t(k)] == all[std::size_t(k)].second;
    }
    check("knn.brute_force", ok);

    PointCloud ref;
    ref.points = {{0, 0, 0}, {1, 0, 0}, {3, 0, 0}};
    PointCloud q;
    q.points = {{0.9, 0, 0}};
    const std::vector<int> r = knn(q, ref, 2);
    check("knn.hand", r[0] == 1 && r[1] == 0);
  }
  {
    PointCloud c = rand_cloud(22, 64);
    const PointCloud r = rotate_z(c, kPi / 2);
    PointCloud one;
    one.points = {{1, 0, 0}};
    const PointCloud r1 = rotate_z(one, kPi / 2);
    check("rotate.quarter_turn", close(r1.points[0][0], 0, 1e-9) &&
                                     close(r1.points[0][1], 1, 1e-9) &&
                                     close(r1.points[0][2], 0, 1e-9));
    const PointCloud back = rotate_z(r, -kPi / 2);
    double worst = 0;
    for (std::size_t i = 0; i < c.size(); ++i)
      for (int d = 0; d < 3; ++d)
        worst = std::max(worst, std::abs(back.points[i][d] - c.points[i][d]));
    check("rotate.inverse", worst <= 1e-6);
  }
  {
    RandomStream rs(23, "tps");
    std::vector<Point3> controls(5), disps(5), zero(5, {0, 0, 0});
    for (auto& c : controls) c = {rs.uniform(-1, 1), rs.uniform(-1, 1), rs.uniform(-1, 1)};
    for (auto& d : disps) d = {rs.uniform(-.2, .2), rs.uniform(-.2, .2), rs.uniform(-.2, .2)};

    const TpsWarp ident = tps_fit(controls, zero);
    double worst = 0;
    for (int i = 0; i < 20; ++i) {
      const Point3 x{rs.uniform(-1, 1), rs.uniform(-1, 1), rs.uniform(-1, 1)};
      const Point3 y = tps_apply(ident, x);
      for (int d = 0; d < 3; ++d) worst = std::max(worst, std::abs(y[d] - x[d]));
    }
    check("tps.zero_identity", worst <= 1e-9, "max dev " + std::to_string(worst));

    const TpsWarp tr = tps_fit({controls[0]}, {{0.3, -0.1, 0.2}});
    const Point3 probe{0.5, 0.6, -0.4};
    const Point3 moved = tps_apply(tr, probe);
    check("tps.single_control_translation",
          close(moved[0], probe[0] + 0.3, 1e-9) && close(moved[1], probe[1] - 0.1, 1e-9) &&
              close(moved[2], probe[2] + 0.2, 1e-9));

    const TpsWarp warp = tps_fit(controls, disps);
    worst = 0;
    for (std::size_t j = 0; j < controls.size(); ++j) {
      const Point3 y = tps_apply(warp, controls[j]);
      for (int d = 0; d < 3; ++d)
        worst = std::max(worst, std::abs(y[d] - (controls[j][d] + disps[j][d])));
    }
    check("tps.interpolation", worst <= 1e-6, "max residual " + std::to_string(worst));

    double colsum = 0, cross = 0;
    for (int d = 0; d < 3; ++d) {
      double s = 0;
      for (const auto& w : warp.weights) s += w[d];
      colsum = std::max(colsum, std::abs(s));
    }
    for (int a = 0; a < 3; ++a)
      for (int d = 0; d < 3; ++d) {
        double s = 0;
        for (std::size_t j = 0; j < controls.size(); ++j)
          s += warp.weights[j][d] * controls[j][a];
        cross = std::max(cross, std::abs(s));
      }
    check("tps.side_conditions", colsum <= 1e-8 && cross <= 1e-8);
  }

  // ---- matching ----
  {
    PointCloud c = rand_cloud(31, 50);
    Tape<float> t;
    std::vector<float> feat(50 * 8);
    RandomStream rs(32, "feat");
    for (auto& f : feat) f = float(rs.uniform(-1, 1));
    Tensor<float> fs = t.constant({50, 8}, feat);
    CandidateGraph<float> cg = build_candidates(t, c, c, fs, fs, 4);
    bool ok = true;
    for (std::size_t i = 0; i < 50; ++i) {
      ok = ok && cg.geom.cand_idx[i * 4] == int(i);
      for (int d = 0; d < 3; ++d) ok = ok && cg.geom.cand_disp[i * 12 + d] == 0;
      ok = ok && cg.unary.values()[i * 4] == 0;
    }
    check("candidates.self_pair", ok);
  }
  {
    Tape<double> t;
    PointCloud src, tgt;
    src.points = {{0, 0, 0}};
    tgt.points = {{1, 0, 0}};
    Tensor<double> fs = t.constant({1, 3}, {1, 0, 0});
    Tensor<double> ft = t.constant({1, 3}, {0, 1, 0});
    CandidateGraph<double> cg = build_candidates(t, src, tgt, fs, ft, 1);
    check("candidates.hand_cost", close(cg.unary.values()[0], 2.0, 1e-12));
  }
  {
    RandomStream rs(33, "eq1");
    PointCloud src = rand_cloud(34, 50), tgt = rand_cloud(35, 60);
    const std::size_t dim = 16;
    std::vector<double> f_s = rand_vec(rs, 50 * dim), f_t = rand_vec(rs, 60 * dim);
    Tape<double> t;
    CandidateGraph<double> cg = build_candidates(t, src, tgt, t.constant({50, dim}, f_s),
                                                 t.constant({60, dim}, f_t), 5);
    double worst = 0;
    for (std::size_t i = 0; i < 50; ++i)
      for (std::size_t p = 0; p < 5; ++p) {
        const std::size_t c = std::size_t(cg.geom.cand_idx[i * 5 + p]);
        double ref = 0;
        for (std::size_t d = 0; d < dim; ++d) {
          const double diff = f_s[i * dim + d] - f_t[c * dim + d];
          ref += diff * diff;
        }
        worst = std::max(worst, std::abs(ref - cg.unary.values()[i * 5 + p]));
      }
    check("candidates.direct_eval", worst <= 1e-6, "max dev " + std::to_string(worst));
  }
  {
    const std::vector<double> di = {1, 0, 0, 0.5, 0.5, 0};
    const std::vector<double> dj = {0, 1, 0, 1, 0, 0};
    const std::vector<double> r = pairwise_reg(di.data(), dj.data(), 2);
    check("pairwise.hand", close(r[0], 2.0, 1e-12) && close(r[1], 0.0, 1e-12));
    const std::vector<double> rt = pairwise_reg(dj.data(), di.data(), 2);
    bool sym = true;
    for (int p = 0; p < 2; ++p)
      for (int q = 0; q < 2; ++q) sym = sym && r[p * 2 + q] == rt[q * 2 + p];
    check("pairwise.symmetry", sym);
  }
  {
    // iterations = 0 returns the unary costs exactly.
    RandomStream rs(41, "lbp0");
    std::vector<std::vector<double>> unary = {{0.3, 0.7}, {0.9, 0.1}};
    const std::vector<double> disp = rand_vec(rs, 2 * 2 * 3);
    const std::vector<int> args = lbp_argmins(unary, {{0, 1}}, disp, 2, 50, 0);
    check("lbp.zero_iterations", args[0] == 0 && args[1] == 1);
  }
  {
    // alpha = 0 on a 2-node graph: belief argmin equals unary argmin.
    RandomStream rs(42, "lbpa0");
    std::vector<std::vector<double>> unary = {{0.8, 0.2, 0.5}, {0.1, 0.9, 0.4}};
    const std::vector<double> disp = rand_vec(rs, 2 * 3 * 3);
    const std::vector<int> args = lbp_argmins(unary, {{0, 1}}, disp, 3, 0, 3);
    check("lbp.alpha_zero", args[0] == 1 && args[1] == 0);
  }
  {
    // 5-node chain vs exhaustive enumeration.
    RandomStream rs(43, "chain");
    const int n = 5, k = 3;
    std::vector<std::vector<double>> unary(n);
    for (auto& row : unary) row = rand_vec(rs, k, 0, 1);
    const std::vector<double> disp = rand_vec(rs, std::size_t(n) * k * 3, -0.5, 0.5);
    const std::vector<std::pair<int, int>> edges = {{0, 1}, {1, 2}, {2, 3}, {3, 4}};
    const std::vector<int> expect = brute_force_map(unary, edges, disp, k, 50);
    const std::vector<int> got = lbp_argmins(unary, edges, disp, k, 50, 5);
    check("lbp.chain_exact", got == expect);
  }
  {
    // Random trees, mixed alphas, diameter iterations.
    bool all_ok = true;
    int done = 0;
    for (std::uint64_t trial = 0; trial < 12 && all_ok; ++trial) {
      RandomStream rs(derive_seed(44, "tree", trial), "mk");
      const int n = 4 + int(rs.below(5));  // 4..8
      const int k = 2 + int(rs.below(3));  // 2..4
      std::vector<std::pair<int, int>> edges;
      for (int i = 1; i < n; ++i) edges.push_back({int(rs.below(std::uint64_t(i))), i});
      std::vector<std::vector<double>> unary;
      unary.resize(std::size_t(n));
      for (auto& row : unary) row = rand_vec(rs, std::size_t(k), 0, 1);
      const std::vector<double> disp = rand_vec(rs, std::size_t(n) * k * 3, -0.5, 0.5);
      const double alphas[3] = {0, 1, 50};
      const double alpha = alphas[trial % 3];
      const int diam = tree_diameter(std::size_t(n), edges);
      const std::vector<int> expect = brute_force_map(unary, edges, disp, k, alpha);
      const std::vector<int> got = lbp_argmins(unary, edges, disp, k, alpha, std::max(diam, 1));
      all_ok = got == expect;
      ++done;
    }
    check("lbp.tree_exactness", all_ok, std::to_string(done) + " trees");
  }
  {
    Tape<double> t;
    CandidateGeometry geom;
    geom.n = 2;
    geom.k = 3;
    geom.cand_disp = {1, 0, 0, 0, 1, 0, 0, 0, 1, 2, 0, 0, 0, 2, 0, 0, 0, 2};
    Tensor<double> beliefs = t.constant({2, 3}, {0, 100, 100, 5, 5, 5});
    SoftDisplacement<double> sd = soft_displacement(t, beliefs, geom, 1.0);
    const auto& u = sd.displacement.values();
    check("soft_disp.saturation", close(u[0], 1, 1e-6) && close(u[1], 0, 1e-6));
    check("soft_disp.uniform_mean",
          close(u[3], 2.0 / 3, 1e-9) && close(u[4], 2.0 / 3, 1e-9) && close(u[5], 2.0 / 3, 1e-9));
    const auto& w = sd.weights.values();
    double sum = w[0] + w[1] + w[2];
    check("soft_disp.weights_sum", std::abs(sum - 1) <= 1e-6 && w[0] >= 0);
  }

  // ---- benchgen ----
  {
    PointCloud cloud = rand_cloud(51, 200);
    normalize(cloud);
    ChallengeSpec spec;
    spec.seed = 5;
    const SamplePair pair = make_pair(cloud, spec);
    bool ident = pair.source.points == cloud.points && pair.target.points == cloud.points;
    for (std::size_t i = 0; i < pair.gt_map.size(); ++i)
      ident = ident && pair.gt_map[i] == std::int64_t(i);
    check("benchgen.all_zero_identity", ident);

    ChallengeSpec noisy;
    noisy.noise_level = 0.01;
    noisy.seed = 6;
    const SamplePair np = make_pair(cloud, noisy);
    double worst = 0;
    for (std::size_t i = 0; i < cloud.size(); ++i)
      for (int d = 0; d < 3; ++d)
        worst = std::max(worst, std::abs(np.target.points[i][d] - cloud.points[i][d]));
    check("benchgen.noise_bound", worst <= 0.01 && np.gt_map.size() == cloud.size());

    ChallengeSpec out_spec;
    out_spec.outlier_ratio = 0.1;
    out_spec.seed = 7;
    PointCloud big = rand_cloud(52, 1000);
    normalize(big);
    const SamplePair op = make_pair(big, out_spec);
    bool in_box = op.target.size() == 1100;
    for (std::int64_t g : op.gt_map) in_box = in_box && g < 1000;
    check("benchgen.outliers", in_box);

    const SamplePair again = make_pair(big, out_spec);
    check("benchgen.deterministic", again.target.points == op.target.points &&
                                        again.source.points == op.source.points);
  }
  {
    std::vector<std::string> paths;
    for (int i = 0; i < 10; ++i) paths.push_back("model_" + std::to_string(i));
    const auto [train_set, val] = split_dataset(paths, 0.8, 99);
    bool ok = train_set.size() == 8 && val.size() == 2;
    std::vector<std::string> all = train_set;
    all.insert(all.end(), val.begin(), val.end());
    std::sort(all.begin(), all.end());
    std::vector<std::string> sorted_paths = paths;
    std::sort(sorted_paths.begin(), sorted_paths.end());
    ok = ok && all == sorted_paths;
    const auto [train2, val2] = split_dataset(paths, 0.8, 99);
    ok = ok && train2 == train_set && val2 == val;
    check("benchgen.split", ok);
  }
  {
    PointCloud cloud = rand_cloud(53, 128);
    normalize(cloud);
    const SamplePair a = training_augment(cloud, 1);
    const SamplePair b = training_augment(cloud, 2);
    bool ok = a.applied_rotation <= kPi / 4 && b.applied_rotation <= kPi / 4;
    ok = ok && a.target.points != b.target.points;
    ok = ok && a.gt_map.size() == cloud.size();
    check("benchgen.training_augment", ok);
  }

  // ---- training ----
  {
    ParamStore<float> params;
    params.add("w", {2, 2}, {1, 1, 1, 1});
    AdamState state = make_adam_state(params);
    TrainConfig hyper;
    hyper.learning_rate = 1e-4;
    adam_step(params, {{1, 1, 1, 1}}, state, hyper);
    // First bias-corrected step with g = 1 moves by -lr/(1 + eps').
    bool ok = true;
    for (float v : params.entries[0].value) ok = ok && close(double(v), 1.0 - 1e-4, 1e-9);
    check("adam.first_step", ok);

    adam_step(params, {{0, 0, 0, 0}}, state, hyper);
    const float after = params.entries[0].value[0];
    adam_step(params, {{0, 0, 0, 0}}, state, hyper);
    check("adam.zero_grad_decays", params.entries[0].value[0] != after || state.step == 3);
  }
  {
    ParamStore<float> params;
    RandomStream rs(61, "ck");
    std::vector<float> w(12);
    for (auto& x : w) x = float(rs.uniform(-1, 1));
    params.add("layer.w", {3, 4}, w);
    AdamState adam = make_adam_state(params);
    adam.m[0][0] = 0.25f;
    const Checkpoint ck = make_checkpoint(params, adam, 7, "[train]\nseed = 1\n");
    const std::string p = tmp_path("nrreg_selftest_ckpt.bin");
    save_checkpoint(ck, p);
    const Checkpoint back = load_checkpoint(p);
    bool ok = back.step == 7 && back.config_text == ck.config_text &&
              back.tensors.size() == ck.tensors.size();
    for (std::size_t i = 0; ok && i < ck.tensors.size(); ++i)
      ok = back.tensors[i].name == ck.tensors[i].name && back.tensors[i].raw == ck.tensors[i].raw;
    check("checkpoint.round_trip", ok);

    std::ifstream in(p, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    bytes[0] = 'X';
    const std::string pbad = tmp_path("nrreg_selftest_ckpt_bad.bin");
    {
      std::ofstream out(pbad, std::ios::binary);
      out.write(bytes.data(), std::streamsize(bytes.size()));
    }
    bool threw = false;
    try {
      load_checkpoint(pbad);
    } catch (const FormatError&) {
      threw = true;
    }
    check("checkpoint.bad_magic", threw);

    bytes[0] = 'R';
    bytes[4] = 2;  // version + 1
    {
      std::ofstream out(pbad, std::ios::binary);
      out.write(bytes.data(), std::streamsize(bytes.size()));
    }
    threw = false;
    try {
      load_checkpoint(pbad);
    } catch (const FormatError&) {
      threw = true;
    }
    check("checkpoint.bad_version", threw);
  }

  // ---- eval ----
  {
    std::vector<Point3> a = {{1, 1, 1}, {2, 2, 2}};
    check("metric.identical", mean_euclidean(a, a) == 0);
    std::vector<Point3> b = a;
    for (auto& p : b) p[0] += 0.3;
    check("metric.uniform_offset", close(mean_euclidean(a, b), 0.3, 1e-12));
    RandomStream rs(71, "me");
    std::vector<Point3> c(40), d(40);
    for (std::size_t i = 0; i < 40; ++i) {
      c[i] = {rs.uniform(-1, 1), rs.uniform(-1, 1), rs.uniform(-1, 1)};
      d[i] = {rs.uniform(-1, 1), rs.uniform(-1, 1), rs.uniform(-1, 1)};
    }
    double ref = 0;
    for (std::size_t i = 0; i < 40; ++i) {
      double s = 0;
      for (int dd = 0; dd < 3; ++dd) s += (c[i][dd] - d[i][dd]) * (c[i][dd] - d[i][dd]);
      ref += std::sqrt(s);
    }
    ref /= 40;
    check("metric.loop_oracle", close(mean_euclidean(c, d), ref, 1e-7));
  }
  {
    std::vector<ReportRow> rows(3);
    for (int i = 0; i < 3; ++i) {
      rows[std::size_t(i)].level = 0.1 * (i + 1);
      rows[std::size_t(i)].before_mean = 0.05 * (i + 1);
      rows[std::size_t(i)].after_mean = 0.02 * (i + 1);
      rows[std::size_t(i)].after_std = 0.001;
      rows[std::size_t(i)].time_ms_mean = 12.5;
      rows[std::size_t(i)].time_ms_std = 0.5;
    }
    const std::string p = tmp_path("nrreg_selftest.csv");
    write_csv(p, "deformation", rows);
    std::string axis;
    const std::vector<ReportRow> back = read_csv(p, &axis);
    bool ok = axis == "deformation" && back.size() == 3;
    for (std::size_t i = 0; ok && i < 3; ++i)
      ok = back[i].level == rows[i].level && back[i].before_mean == rows[i].before_mean &&
           back[i].after_mean == rows[i].after_mean && back[i].after_std == rows[i].after_std &&
           back[i].time_ms_mean == rows[i].time_ms_mean &&
           back[i].time_ms_std == rows[i].time_ms_std;
    check("csv.round_trip", ok);

    const std::string sp = tmp_path("nrreg_selftest.svg");
    emit_svg(rows, sp);
    std::ifstream svg(sp);
    std::string content((std::istreambuf_iterator<char>(svg)), std::istreambuf_iterator<char>());
    std::size_t polylines = 0, pos = 0;
    while ((pos = content.find("<polyline", pos)) != std::string::npos) {
      ++polylines;
      pos += 9;
    }
    check("svg.two_series", polylines == 2 && content.find("</svg>") != std::string::npos);
  }

  // ---- descriptor + registration ----
  {
    DescriptorConfig dcfg;
    dcfg.k_graph = 8;
    dcfg.layer_widths = {8, 8, 8};
    dcfg.out_dim = 16;
    dcfg.align_width0 = 8;
    dcfg.align_width1 = 16;
    dcfg.align_hidden = 8;
    const ParamStore<float> params = init_descriptor_params<float>(dcfg, 101);
    const ParamStore<float> params2 = init_descriptor_params<float>(dcfg, 101);
    const ParamStore<float> params3 = init_descriptor_params<float>(dcfg, 102);
    bool same = params.entries.size() == params2.entries.size();
    bool differ = false;
    for (std::size_t i = 0; i < params.entries.size() && same; ++i) {
      same = params.entries[i].value == params2.entries[i].value;
      if (params.entries[i].value != params3.entries[i].value) differ = true;
    }
    check("params.seed_determinism", same && differ);

    PointCloud cloud = rand_cloud(81, 64);
    normalize(cloud);
    Tape<float> tape;
    BoundParams<float> bound = bind_params(tape, params, false);
    AlignResult<float> ar = align(tape, tape.constant({64, 3}, [&] {
                                    std::vector<float> f(64 * 3);
                                    for (std::size_t i = 0; i < 64; ++i)
                                      for (int d = 0; d < 3; ++d)
                                        f[i * 3 + d] = float(cloud.points[i][d]);
                                    return f;
                                  }()),
                                  bound, dcfg);
    const auto& tv = ar.transform.values();
    const bool is_identity = tv[0] == 1 && tv[1] == 0 && tv[2] == 0 && tv[3] == 0 &&
                             tv[4] == 1 && tv[5] == 0 && tv[6] == 0 && tv[7] == 0 && tv[8] == 1;
    check("align.initial_identity", is_identity);

    DescribeResult<float> ds = describe(tape, cloud, bound, dcfg);
    check("describe.shape", ds.features.shape() == Shape{64, 16});

    MatchConfig mcfg;
    mcfg.k_candidates = 8;
    mcfg.k_source = 4;
    const RegistrationResult r1 = register_clouds(cloud, cloud, params, dcfg, mcfg);
    const RegistrationResult r2 = register_clouds(cloud, cloud, params, dcfg, mcfg);
    check("register.deterministic", r1.warped.points == r2.warped.points);
    check("register.shape", r1.warped.size() == cloud.size() &&
                                r1.weights.size() == cloud.size() * 8);
    const double self_dist = mean_euclidean(r1.warped.points, cloud.points);
    check("register.self_residual", self_dist <= 1e-3,
          "residual " + std::to_string(self_dist));
  }

  return results;
}

}  // namespace nrreg
