#include "nrreg/gradcheck.hpp"

#include <cmath>
#include <functional>
#include <memory>

#include "nrreg/benchgen.hpp"
#include "nrreg/featnet.hpp"
#include "nrreg/lbp.hpp"
#include "nrreg/prng.hpp"
#include "nrreg/tensor.hpp"
#include "nrreg/training.hpp"

namespace nrreg {

namespace {

struct BuiltGraph {
  Tensor<double> output;
  std::vector<Tensor<double>> leaves;
};

using Builder =
    std::function<BuiltGraph(Tape<double>&, const std::vector<std::vector<double>>&)>;

std::vector<double> random_vec(RandomStream& rs, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = rs.uniform(lo, hi);
  return v;
}

// Fixed-weight linear scalarizer; keeps the output smooth in the inputs.
Tensor<double> scalarize(Tape<double>& tape, Tensor<double> x, std::uint64_t salt) {
  const std::size_t n = x.numel();
  RandomStream rs(salt, "scalarize");
  std::vector<double> w(n);
  for (auto& v : w) v = rs.uniform(0.25, 1.0) * (rs.below(2) ? 1.0 : -1.0);
  Tensor<double> flat = tape.reshape(x, {1, n});
  Tensor<double> weighted = tape.mul(flat, tape.constant({1, n}, std::move(w)));
  return tape.reshape(tape.row_sum(weighted), {1});
}

double check_fd(const Builder& build, const std::vector<std::vector<double>>& base) {
  Tape<double> tape;
  BuiltGraph g = build(tape, base);
  tape.backward(g.output);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(g.leaves.size());
  for (const auto& leaf : g.leaves) analytic.push_back(tape.grad(leaf));

  double worst = 0;
  const double h = kGradCheckStep;
  for (std::size_t li = 0; li < base.size(); ++li) {
    for (std::size_t ei = 0; ei < base[li].size(); ++ei) {
      std::vector<std::vector<double>> vp = base;
      std::vector<std::vector<double>> vm = base;
      vp[li][ei] += h;
      vm[li][ei] -= h;
      Tape<double> tp, tm;
      const double fp = build(tp, vp).output.values()[0];
      const double fm = build(tm, vm).output.values()[0];
      const double fd = (fp - fm) / (2 * h);
      const double an = analytic[li][ei];
      const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace

GradCheckReport run_gradcheck() {
  GradCheckReport report;
  auto run = [&](const std::string& name, const Builder& build,
                 const std::vector<std::vector<double>>& base) {
    const double err = check_fd(build, base);
    report.checks.push_back({name, err});
    report.max_rel_err = std::max(report.max_rel_err, err);
  };

  RandomStream rs(20250809, "gradcheck");

  run("matmul",
      [](Tape<double>& t, const std::vector<std::vector<double>>& v) -> BuiltGraph {
        Tensor<double> a = t.leaf({3, 4}, v[0]);
        Tensor<double> b = t.leaf({4, 2}, v[1]);
        return {scalarize(t, t.matmul(a, b), 1), {a, b}};
      },
      {random_vec(rs, 12, -1, 1), random_vec(rs, 8, -1, 1)});

  run("add_sub_mul",
      [](Tape<double>& t, const std::vector<std::vector<double>>& v) -> BuiltGraph {
        Tensor<double> a = t.leaf({2, 3}, v[0]);
        Tensor<double> b = t.leaf({2, 3}, v[1]);
        Tensor<double> c = t.leaf({2, 3}, v[2]);
        return {scalarize(t, t.mul(t.add(a, b), t.sub(a, c)), 2), {a, b, c}};
      },
      {random_vec(rs, 6, -1, 1), random_vec(rs, 6, -1, 1), random_vec(rs, 6, -1, 1)});

  run("scale_add_n",
      [](Tape<double>& t, const std::vector<std::vector<double>>& v) -> BuiltGraph {
        Tensor<double> a = t.leaf({2, 2}, v[0]);
        Tensor<double> b = t.leaf({2, 2}, v[1]);
        return {scalarize(t, t.add_n({t.scale(a, -2.5), b, a}), 3), {a, b}};
      },
      {random_vec(rs, 4, -1, 1), random_vec(rs, 4, -1, 1)});

  run("add_rowvec_sub_colvec",
      [](Tape<double>& t, const std::vector<std::vector<double>>& v) -> BuiltGraph {
        Tensor<double> m = t.leaf({3, 4}, v[0]);
        Tensor<double> r = t.leaf({4}, v[1]);
        Tensor<double> c = t.leaf({3}, v[2]);
        return {scalarize(t, t.sub_colvec(t.add_rowvec(m, r), c), 4), {m, r, c}};
      },
      {random_vec(rs, 12, -1, 1), random_vec(rs, 4, -1, 1), random_vec(rs, 3, -1, 1)});

  run("concat_cols",
      [](Tape<double>& t, const std::vector<std::vector<double>>& v) -> BuiltGraph {
        Tensor<double> a = t.leaf({3, 2}, v[0]);
        Tensor<double> b = t.leaf({3, 3}, v[1]);
        return {scalarize(t, t.concat_cols({a, b, a}), 5), {a, b}};
      },
      {random_vec(rs, 6, -1, 1), random_vec(rs, 9, -1, 1)});

  // Inputs kept away from the kink at zero.
  run("leaky_relu",
      [](Tape<double>& t, const std::vector<std::vector<double>>& v) -> BuiltGraph {
        Tensor<double> a = t.leaf({2, 4}, v[0]);
        return {scalarize(t, t.leaky_relu(a, 0.2), 6), {a}};
      },
      {{0.7, -0.9, 0.4, -0.3, 1.2, -1.5, 0.8, -0.6}});

  run("instance_norm",
      [](Tape<double>& t, const std::vector<std::vector<double>>& v) -> BuiltGraph {
        Tensor<double> x = t.leaf({5, 3}, v[0]);
        Tensor<double> g = t.leaf({3}, v[1]);
        Tensor<double> b = t.leaf({3}, v[2]);
        return {scalarize(t, t.instance_norm(x, g, b), 7), {x, g, b}};
      },
      {random_vec(rs, 15, -2, 2), random_vec(rs, 3, 0.5, 1.5), random_vec(rs, 3, -0.5, 0.5)});

  run("softmax_rows",
      [](Tape<double>& t, const std::vector<std::vector<double>>& v) -> BuiltGraph {
        Tensor<double> x = t.leaf({3, 4}, v[0]);
        return {scalarize(t, t.softmax_rows(x), 8), {x}};
      },
      {random_vec(rs, 12, -2, 2)});

  run("min_select_rows",
      [](Tape<double>& t, const std::vector<std::vector<double>>& v) -> BuiltGraph {
        Tensor<double> x = t.leaf({2, 3}, v[0]);
        Tensor<double> mins = t.min_select_rows(x).values;
        return {scalarize(t, t.reshape(mins, {1, 2}), 9), {x}};
      },
      {{0.3, 1.1, 2.0, 1.7, 0.2, 0.9}});  // clear per-row margins

  run("segment_max",
      [](Tape<double>& t, const std::vector<std::vector<double>>& v) -> BuiltGraph {
        Tensor<double> x = t.leaf({6, 2}, v[0]);
        return {scalarize(t, t.segment_max(x, 3), 10), {x}};
      },
      {{0.1, 1.9, 0.8, 0.2, 0.4, 1.0, 1.5, 0.6, 0.3, 1.2, 0.9, 0.1}});

  run("gather_scatter",
      [](Tape<double>& t, const std::vector<std::vector<double>>& v) -> BuiltGraph {
        Tensor<double> x = t.leaf({4, 2}, v[0]);
        Tensor<double> gathered = t.gather_rows(x, {0, 2, 2, 1, 3, 0});
        Tensor<double> summed = t.index_sum_rows(gathered, {0, 1, 1, 0, 2, 2}, 3);
        return {scalarize(t, summed, 11), {x}};
      },
      {random_vec(rs, 8, -1, 1)});

  run("row_sum_reshape",
      [](Tape<double>& t, const std::vector<std::vector<double>>& v) -> BuiltGraph {
        Tensor<double> x = t.leaf({3, 4}, v[0]);
        return {scalarize(t, t.reshape(t.row_sum(x), {1, 3}), 12), {x}};
      },
      {random_vec(rs, 12, -1, 1)});

  // Residuals kept away from zero so |.| has a well-defined slope.
  run("mae",
      [](Tape<double>& t, const std::vector<std::vector<double>>& v) -> BuiltGraph {
        Tensor<double> a = t.leaf({2, 3}, v[0]);
        Tensor<double> b = t.leaf({2, 3}, v[1]);
        return {t.mae(a, b), {a, b}};
      },
      {{1.0, 2.0, -1.5, 0.7, -0.9, 1.8}, {0.2, 1.1, -0.3, -0.4, 0.3, 0.9}});

  run("blend_rows",
      [](Tape<double>& t, const std::vector<std::vector<double>>& v) -> BuiltGraph {
        Tensor<double> w = t.leaf({2, 3}, v[0]);
        Tensor<double> d = t.leaf({2, 3, 3}, v[1]);
        return {scalarize(t, t.blend_rows(w, d), 13), {w, d}};
      },
      {random_vec(rs, 6, -1, 1), random_vec(rs, 18, -1, 1)});

  {
    auto ctx = std::make_shared<LbpEdgeContext>();
    ctx->k = 3;
    ctx->alpha = 2.0;
    ctx->src = {0, 1, 1, 2};
    ctx->dst = {1, 0, 2, 1};
    RandomStream drs(77, "lbp_disp");
    ctx->disp = random_vec(drs, 3 * 3 * 3, -1, 1);
    run("lbp_min_plus",
        [ctx](Tape<double>& t, const std::vector<std::vector<double>>& v) -> BuiltGraph {
          Tensor<double> s = t.leaf({4, 3}, v[0]);
          return {scalarize(t, t.lbp_min_plus(s, ctx), 14), {s}};
        },
        {random_vec(rs, 12, -1, 1)});
  }

  // Composed pipeline: descriptor + candidates + LBP + softmax blend + L1
  // loss on a 32-point pair, compact widths, every parameter checked.
  {
    DescriptorConfig dcfg;
    dcfg.k_graph = 6;
    dcfg.layer_widths = {8, 8, 8};
    dcfg.out_dim = 16;
    dcfg.align_width0 = 8;
    dcfg.align_width1 = 16;
    dcfg.align_hidden = 8;
    MatchConfig mcfg;
    mcfg.k_candidates = 4;
    mcfg.k_source = 3;
    mcfg.lbp.alpha = 50;
    mcfg.lbp.iterations = 3;

    PointCloud source;
    RandomStream crs(4242, "cloud");
    for (int i = 0; i < 32; ++i)
      source.points.push_back({crs.uniform(-1, 1), crs.uniform(-1, 1), crs.uniform(-1, 1)});
    normalize(source);
    SamplePair pair;
    {
      ChallengeSpec cs;
      cs.deform_level = 0.3;
      cs.rotation_level = 0.2;
      cs.seed = 99;
      pair = make_pair(source, cs);
    }
    ParamStore<double> params = init_descriptor_params<double>(dcfg, 31337);
    std::vector<std::vector<double>> base;
    base.reserve(params.entries.size());
    for (std::size_t i = 0; i < params.entries.size(); ++i) {
      base.push_back(params.entries[i].value);
      // Perturb the zero-initialized alignment output weights so the
      // transform, and with it every selection margin, is generic.
      if (params.entries[i].name == "align.out.w") {
        RandomStream prs(555, "perturb");
        for (auto& w : base.back()) w = prs.uniform(-0.05, 0.05);
      }
    }

    const ParamStore<double> proto = params;
    Builder build = [proto, pair, dcfg, mcfg](Tape<double>& t,
                                              const std::vector<std::vector<double>>& v)
        -> BuiltGraph {
      BuiltGraph g;
      BoundParams<double> bound;
      for (std::size_t i = 0; i < proto.entries.size(); ++i) {
        Tensor<double> leaf = t.leaf(proto.entries[i].shape, v[i]);
        bound.emplace(proto.entries[i].name, leaf);
        g.leaves.push_back(leaf);
      }
      PipelineOut<double> pipe = run_pipeline(t, pair.source, pair.target, bound, dcfg, mcfg);
      const std::size_t n = pair.source.size();
      std::vector<double> src_flat(n * 3), gt_flat(n * 3);
      for (std::size_t i = 0; i < n; ++i)
        for (int d = 0; d < 3; ++d) {
          src_flat[i * 3 + d] = pair.source.points[i][d];
          gt_flat[i * 3 + d] = pair.target.points[std::size_t(pair.gt_map[i])][d];
        }
      Tensor<double> warped = t.add(pipe.displacement, t.constant({n, 3}, std::move(src_flat)));
      g.output = l1_loss(t, warped, t.constant({n, 3}, std::move(gt_flat)));
      return g;
    };
    run("pipeline_end_to_end", build, base);
  }

  report.pass = report.max_rel_err <= kGradCheckTol;
  return report;
}

}  // namespace nrreg
