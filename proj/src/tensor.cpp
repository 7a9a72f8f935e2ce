#include "nrreg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>

#include "nrreg/errors.hpp"

namespace nrreg {

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "{";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  out += "}";
  return out;
}

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw ContractError(msg);
}

// c[m x n] += or = a[m x k] * b[k x n], accumulation in storage precision.
template <typename T>
void gemm(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    std::fill(crow, crow + n, T(0));
    const T* arow = a + i * k;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const T aik = arow[kk];
      if (aik == T(0)) continue;
      const T* brow = b + kk * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
}

// c[m x k] += a[m x n] * b^T where b is k x n (i.e. a * b^T).
template <typename T>
void gemm_nt_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * n;
    T* crow = c + i * k;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const T* brow = b + kk * n;
      double acc = 0;
      for (std::size_t j = 0; j < n; ++j) acc += double(arow[j]) * double(brow[j]);
      crow[kk] += T(acc);
    }
  }
}

// c[k x n] += a^T * b where a is m x k, b is m x n.
template <typename T>
void gemm_tn_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    const T* brow = b + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const T aik = arow[kk];
      if (aik == T(0)) continue;
      T* crow = c + kk * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> Tape<T>::push(Node n) {
  nodes_.push_back(std::move(n));
  return Tensor<T>(this, static_cast<int>(nodes_.size()) - 1);
}

template <typename T>
bool Tape<T>::any_needs_grad(const std::vector<Tensor<T>>& xs) const {
  for (const auto& x : xs)
    if (nodes_[x.id()].needs_grad) return true;
  return false;
}

template <typename T>
Tensor<T> Tape<T>::constant(Shape shape, std::vector<T> data) {
  require(shape_numel(shape) == data.size(),
          "tensor: data length " + std::to_string(data.size()) +
              " does not match shape " + shape_str(shape));
  Node n;
  n.op = Op::kConstant;
  n.shape = std::move(shape);
  n.val = std::move(data);
  return push(std::move(n));
}

template <typename T>
Tensor<T> Tape<T>::scalar(T v) {
  return constant({1}, {v});
}

template <typename T>
Tensor<T> Tape<T>::zeros(Shape shape, bool needs_grad) {
  Node n;
  n.op = needs_grad ? Op::kLeaf : Op::kConstant;
  n.val.assign(shape_numel(shape), T(0));
  n.shape = std::move(shape);
  n.needs_grad = needs_grad;
  return push(std::move(n));
}

template <typename T>
Tensor<T> Tape<T>::leaf(Shape shape, std::vector<T> data) {
  require(shape_numel(shape) == data.size(),
          "tensor: data length " + std::to_string(data.size()) +
              " does not match shape " + shape_str(shape));
  Node n;
  n.op = Op::kLeaf;
  n.shape = std::move(shape);
  n.val = std::move(data);
  n.needs_grad = true;
  return push(std::move(n));
}

template <typename T>
Tensor<T> Tape<T>::matmul(Tensor<T> a, Tensor<T> b) {
  const auto& sa = shape(a);
  const auto& sb = shape(b);
  require(sa.size() == 2 && sb.size() == 2 && sa[1] == sb[0],
          "matmul: incompatible shapes " + shape_str(sa) + " x " + shape_str(sb));
  Node n;
  n.op = Op::kMatmul;
  n.shape = {sa[0], sb[1]};
  n.in = {a.id(), b.id()};
  n.needs_grad = any_needs_grad({a, b});
  n.val.resize(sa[0] * sb[1]);
  gemm(values(a).data(), values(b).data(), n.val.data(), sa[0], sa[1], sb[1]);
  return push(std::move(n));
}

template <typename T>
Tensor<T> Tape<T>::add(Tensor<T> a, Tensor<T> b) {
  require(shape(a) == shape(b), "add: shape mismatch " + shape_str(shape(a)) + " vs " +
                                    shape_str(shape(b)));
  Node n;
  n.op = Op::kAdd;
  n.shape = shape(a);
  n.in = {a.id(), b.id()};
  n.needs_grad = any_needs_grad({a, b});
  const auto& va = values(a);
  const auto& vb = values(b);
  n.val.resize(va.size());
  for (std::size_t i = 0; i < va.size(); ++i) n.val[i] = va[i] + vb[i];
  return push(std::move(n));
}

template <typename T>
Tensor<T> Tape<T>::sub(Tensor<T> a, Tensor<T> b) {
  require(shape(a) == shape(b), "sub: shape mismatch " + shape_str(shape(a)) + " vs " +
                                    shape_str(shape(b)));
  Node n;
  n.op = Op::kSub;
  n.shape = shape(a);
  n.in = {a.id(), b.id()};
  n.needs_grad = any_needs_grad({a, b});
  const auto& va = values(a);
  const auto& vb = values(b);
  n.val.resize(va.size());
  for (std::size_t i = 0; i < va.size(); ++i) n.val[i] = va[i] - vb[i];
  return push(std::move(n));
}

template <typename T>
Tensor<T> Tape<T>::mul(Tensor<T> a, Tensor<T> b) {
  require(shape(a) == shape(b), "mul: shape mismatch " + shape_str(shape(a)) + " vs " +
                                    shape_str(shape(b)));
  Node n;
  n.op = Op::kMul;
  n.shape = shape(a);
  n.in = {a.id(), b.id()};
  n.needs_grad = any_needs_grad({a, b});
  const auto& va = values(a);
  const auto& vb = values(b);
  n.val.resize(va.size());
  for (std::size_t i = 0; i < va.size(); ++i) n.val[i] = va[i] * vb[i];
  return push(std::move(n));
}

template <typename T>
Tensor<T> Tape<T>::scale(Tensor<T> a, double s) {
  Node n;
  n.op = Op::kScale;
  n.shape = shape(a);
  n.in = {a.id()};
  n.aux_d = {s};
  n.needs_grad = nodes_[a.id()].needs_grad;
  const auto& va = values(a);
  n.val.resize(va.size());
  for (std::size_t i = 0; i < va.size(); ++i) n.val[i] = T(s * va[i]);
  return push(std::move(n));
}

template <typename T>
Tensor<T> Tape<T>::add_rowvec(Tensor<T> mat, Tensor<T> vec) {
  const auto& sm = shape(mat);
  const auto& sv = shape(vec);
  require(sm.size() == 2 && sv.size() == 1 && sm[1] == sv[0],
          "add_rowvec: shapes " + shape_str(sm) + " and " + shape_str(sv));
  Node n;
  n.op = Op::kAddRowvec;
  n.shape = sm;
  n.in = {mat.id(), vec.id()};
  n.needs_grad = any_needs_grad({mat, vec});
  const auto& vm = values(mat);
  const auto& vv = values(vec);
  n.val.resize(vm.size());
  const std::size_t c = sm[1];
  for (std::size_t i = 0; i < sm[0]; ++i)
    for (std::size_t j = 0; j < c; ++j) n.val[i * c + j] = vm[i * c + j] + vv[j];
  return push(std::move(n));
}

template <typename T>
Tensor<T> Tape<T>::sub_colvec(Tensor<T> mat, Tensor<T> col) {
  const auto& sm = shape(mat);
  const auto& sc = shape(col);
  require(sm.size() == 2 && sc.size() == 1 && sm[0] == sc[0],
          "sub_colvec: shapes " + shape_str(sm) + " and " + shape_str(sc));
  Node n;
  n.op = Op::kSubColvec;
  n.shape = sm;
  n.in = {mat.id(), col.id()};
  n.needs_grad = any_needs_grad({mat, col});
  const auto& vm = values(mat);
  const auto& vc = values(col);
  n.val.resize(vm.size());
  const std::size_t c = sm[1];
  for (std::size_t i = 0; i < sm[0]; ++i)
    for (std::size_t j = 0; j < c; ++j) n.val[i * c + j] = vm[i * c + j] - vc[i];
  return push(std::move(n));
}

template <typename T>
Tensor<T> Tape<T>::add_n(const std::vector<Tensor<T>>& xs) {
  require(!xs.empty(), "add_n: empty input list");
  for (const auto& x : xs)
    require(shape(x) == shape(xs[0]), "add_n: shape mismatch");
  Node n;
  n.op = Op::kAddN;
  n.shape = shape(xs[0]);
  n.needs_grad = any_needs_grad(xs);
  for (const auto& x : xs) n.in.push_back(x.id());
  n.val.assign(values(xs[0]).size(), T(0));
  for (const auto& x : xs) {
    const auto& v = values(x);
    for (std::size_t i = 0; i < v.size(); ++i) n.val[i] += v[i];
  }
  return push(std::move(n));
}

template <typename T>
Tensor<T> Tape<T>::concat_cols(const std::vector<Tensor<T>>& xs) {
  require(!xs.empty(), "concat_cols: empty input list");
  const std::size_t rows = shape(xs[0])[0];
  std::size_t cols = 0;
  for (const auto& x : xs) {
    require(shape(x).size() == 2 && shape(x)[0] == rows, "concat_cols: row count mismatch");
    cols += shape(x)[1];
  }
  Node n;
  n.op = Op::kConcatCols;
  n.shape = {rows, cols};
  n.needs_grad = any_needs_grad(xs);
  for (const auto& x : xs) n.in.push_back(x.id());
  n.val.resize(rows * cols);
  std::size_t off = 0;
  for (const auto& x : xs) {
    const std::size_t c = shape(x)[1];
    const auto& v = values(x);
    for (std::size_t i = 0; i < rows; ++i)
      std::copy(v.begin() + i * c, v.begin() + (i + 1) * c, n.val.begin() + i * cols + off);
    off += c;
  }
  return push(std::move(n));
}

template <typename T>
Tensor<T> Tape<T>::leaky_relu(Tensor<T> x, double negative_slope) {
  Node n;
  n.op = Op::kLeakyRelu;
  n.shape = shape(x);
  n.in = {x.id()};
  n.aux_d = {negative_slope};
  n.needs_grad = nodes_[x.id()].needs_grad;
  const auto& v = values(x);
  n.val.resize(v.size());
  const T s = T(negative_slope);
  for (std::size_t i = 0; i < v.size(); ++i) n.val[i] = v[i] > T(0) ? v[i] : s * v[i];
  return push(std::move(n));
}

template <typename T>
Tensor<T> Tape<T>::instance_norm(Tensor<T> x, Tensor<T> gain, Tensor<T> bias, double eps) {
  const auto& sx = shape(x);
  require(sx.size() == 2, "instance_norm: input must be 2-D, got " + shape_str(sx));
  require(sx[0] >= 1, "instance_norm: empty input (n = 0)");
  require(eps > 0, "instance_norm: eps must be positive");
  const std::size_t nrows = sx[0], c = sx[1];
  require(shape(gain) == Shape{c} && shape(bias) == Shape{c},
          "instance_norm: gain/bias must have shape {" + std::to_string(c) + "}");
  Node n;
  n.op = Op::kInstanceNorm;
  n.shape = sx;
  n.in = {x.id(), gain.id(), bias.id()};
  n.needs_grad = any_needs_grad({x, gain, bias});
  const auto& v = values(x);
  const auto& g = values(gain);
  const auto& b = values(bias);
  n.val.resize(v.size());
  n.aux_d.resize(2 * c);  // per channel: mean, inv_std
  for (std::size_t j = 0; j < c; ++j) {
    double mean = 0;
    for (std::size_t i = 0; i < nrows; ++i) mean += v[i * c + j];
    mean /= double(nrows);
    double var = 0;
    for (std::size_t i = 0; i < nrows; ++i) {
      const double d = double(v[i * c + j]) - mean;
      var += d * d;
    }
    var /= double(nrows);  // population variance
    const double inv = 1.0 / std::sqrt(var + eps);
    n.aux_d[2 * j] = mean;
    n.aux_d[2 * j + 1] = inv;
    for (std::size_t i = 0; i < nrows; ++i) {
      const double xhat = (double(v[i * c + j]) - mean) * inv;
      n.val[i * c + j] = T(xhat * double(g[j]) + double(b[j]));
    }
  }
  return push(std::move(n));
}

template <typename T>
Tensor<T> Tape<T>::softmax_rows(Tensor<T> x) {
  const auto& sx = shape(x);
  require(sx.size() == 2 && sx[1] >= 1, "softmax_rows: input must be n x k with k >= 1");
  Node n;
  n.op = Op::kSoftmaxRows;
  n.shape = sx;
  n.in = {x.id()};
  n.needs_grad = nodes_[x.id()].needs_grad;
  const auto& v = values(x);
  const std::size_t rows = sx[0], k = sx[1];
  n.val.resize(v.size());
  for (std::size_t i = 0; i < rows; ++i) {
    const T* row = v.data() + i * k;
    T m = row[0];
    for (std::size_t j = 1; j < k; ++j) m = std::max(m, row[j]);
    double denom = 0;
    for (std::size_t j = 0; j < k; ++j) denom += std::exp(double(row[j]) - double(m));
    for (std::size_t j = 0; j < k; ++j)
      n.val[i * k + j] = T(std::exp(double(row[j]) - double(m)) / denom);
  }
  return push(std::move(n));
}

template <typename T>
MinSelectResult<T> Tape<T>::min_select_rows(Tensor<T> x) {
  const auto& sx = shape(x);
  require(sx.size() == 2 && sx[1] >= 1, "min_select_rows: input must be n x k with k >= 1");
  Node n;
  n.op = Op::kMinSelectRows;
  n.shape = {sx[0]};
  n.in = {x.id()};
  n.needs_grad = nodes_[x.id()].needs_grad;
  const auto& v = values(x);
  const std::size_t rows = sx[0], k = sx[1];
  n.val.resize(rows);
  n.aux_i.resize(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const T* row = v.data() + i * k;
    int arg = 0;
    T best = row[0];
    for (std::size_t j = 1; j < k; ++j) {
      if (row[j] < best) {
        best = row[j];
        arg = static_cast<int>(j);
      }
    }
    n.val[i] = best;
    n.aux_i[i] = arg;
  }
  Tensor<T> t = push(std::move(n));
  return {t, nodes_[t.id()].aux_i};
}

template <typename T>
Tensor<T> Tape<T>::segment_max(Tensor<T> x, std::size_t segment) {
  const auto& sx = shape(x);
  require(sx.size() == 2 && segment >= 1 && sx[0] % segment == 0,
          "segment_max: rows of " + shape_str(sx) + " not divisible by segment " +
              std::to_string(segment));
  const std::size_t groups = sx[0] / segment, c = sx[1];
  Node n;
  n.op = Op::kSegmentMax;
  n.shape = {groups, c};
  n.in = {x.id()};
  n.needs_grad = nodes_[x.id()].needs_grad;
  const auto& v = values(x);
  n.val.resize(groups * c);
  n.aux_i.resize(groups * c);
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t j = 0; j < c; ++j) {
      std::size_t arg = g * segment;
      T best = v[arg * c + j];
      for (std::size_t r = 1; r < segment; ++r) {
        const std::size_t row = g * segment + r;
        if (v[row * c + j] > best) {
          best = v[row * c + j];
          arg = row;
        }
      }
      n.val[g * c + j] = best;
      n.aux_i[g * c + j] = static_cast<int>(arg);
    }
  }
  return push(std::move(n));
}

template <typename T>
Tensor<T> Tape<T>::gather_rows(Tensor<T> x, std::vector<int> idx) {
  const auto& sx = shape(x);
  require(sx.size() == 2, "gather_rows: input must be 2-D");
  for (int i : idx)
    require(i >= 0 && std::size_t(i) < sx[0],
            "gather_rows: index " + std::to_string(i) + " out of range for " + shape_str(sx));
  const std::size_t c = sx[1];
  Node n;
  n.op = Op::kGatherRows;
  n.shape = {idx.size(), c};
  n.in = {x.id()};
  n.needs_grad = nodes_[x.id()].needs_grad;
  const auto& v = values(x);
  n.val.resize(idx.size() * c);
  for (std::size_t r = 0; r < idx.size(); ++r)
    std::copy(v.begin() + std::size_t(idx[r]) * c, v.begin() + (std::size_t(idx[r]) + 1) * c,
              n.val.begin() + r * c);
  n.aux_i = std::move(idx);
  return push(std::move(n));
}

template <typename T>
Tensor<T> Tape<T>::index_sum_rows(Tensor<T> x, std::vector<int> dst, std::size_t n_out) {
  const auto& sx = shape(x);
  require(sx.size() == 2 && dst.size() == sx[0], "index_sum_rows: dst size must match rows");
  for (int i : dst)
    require(i >= 0 && std::size_t(i) < n_out, "index_sum_rows: destination index out of range");
  const std::size_t c = sx[1];
  Node n;
  n.op = Op::kIndexSumRows;
  n.shape = {n_out, c};
  n.in = {x.id()};
  n.needs_grad = nodes_[x.id()].needs_grad;
  const auto& v = values(x);
  n.val.assign(n_out * c, T(0));
  for (std::size_t r = 0; r < dst.size(); ++r) {
    T* out = n.val.data() + std::size_t(dst[r]) * c;
    const T* src = v.data() + r * c;
    for (std::size_t j = 0; j < c; ++j) out[j] += src[j];
  }
  n.aux_i = std::move(dst);
  return push(std::move(n));
}

template <typename T>
Tensor<T> Tape<T>::row_sum(Tensor<T> x) {
  const auto& sx = shape(x);
  require(sx.size() == 2, "row_sum: input must be 2-D");
  Node n;
  n.op = Op::kRowSum;
  n.shape = {sx[0]};
  n.in = {x.id()};
  n.needs_grad = nodes_[x.id()].needs_grad;
  const auto& v = values(x);
  n.val.resize(sx[0]);
  for (std::size_t i = 0; i < sx[0]; ++i) {
    double acc = 0;
    for (std::size_t j = 0; j < sx[1]; ++j) acc += v[i * sx[1] + j];
    n.val[i] = T(acc);
  }
  return push(std::move(n));
}

template <typename T>
Tensor<T> Tape<T>::reshape(Tensor<T> x, Shape shape_out) {
  require(shape_numel(shape_out) == shape_numel(shape(x)),
          "reshape: cannot reshape " + shape_str(shape(x)) + " to " + shape_str(shape_out));
  Node n;
  n.op = Op::kReshape;
  n.shape = std::move(shape_out);
  n.in = {x.id()};
  n.needs_grad = nodes_[x.id()].needs_grad;
  n.val = values(x);
  return push(std::move(n));
}

template <typename T>
Tensor<T> Tape<T>::mae(Tensor<T> a, Tensor<T> b) {
  require(shape(a) == shape(b), "mae: shape mismatch " + shape_str(shape(a)) + " vs " +
                                    shape_str(shape(b)));
  Node n;
  n.op = Op::kMae;
  n.shape = {1};
  n.in = {a.id(), b.id()};
  n.needs_grad = any_needs_grad({a, b});
  const auto& va = values(a);
  const auto& vb = values(b);
  require(!va.empty(), "mae: empty input");
  double acc = 0;
  for (std::size_t i = 0; i < va.size(); ++i) acc += std::abs(double(va[i]) - double(vb[i]));
  n.val = {T(acc / double(va.size()))};
  return push(std::move(n));
}

template <typename T>
Tensor<T> Tape<T>::blend_rows(Tensor<T> w, Tensor<T> d) {
  const auto& sw = shape(w);
  const auto& sd = shape(d);
  require(sw.size() == 2 && sd.size() == 3 && sd[0] == sw[0] && sd[1] == sw[1],
          "blend_rows: shapes " + shape_str(sw) + " and " + shape_str(sd));
  const std::size_t rows = sw[0], k = sw[1], c = sd[2];
  Node n;
  n.op = Op::kBlendRows;
  n.shape = {rows, c};
  n.in = {w.id(), d.id()};
  n.needs_grad = any_needs_grad({w, d});
  const auto& vw = values(w);
  const auto& vd = values(d);
  n.val.resize(rows * c);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      double acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += double(vw[i * k + p]) * double(vd[(i * k + p) * c + j]);
      n.val[i * c + j] = T(acc);
    }
  }
  return push(std::move(n));
}

template <typename T>
Tensor<T> Tape<T>::lbp_min_plus(Tensor<T> s, std::shared_ptr<const LbpEdgeContext> ctx) {
  const auto& ss = shape(s);
  require(ctx != nullptr, "lbp_min_plus: null edge context");
  const std::size_t k = std::size_t(ctx->k);
  require(ss.size() == 2 && ss[0] == ctx->src.size() && ss[1] == k,
          "lbp_min_plus: input shape " + shape_str(ss) + " does not match edge context");
  Node n;
  n.op = Op::kLbpMinPlus;
  n.shape = ss;
  n.in = {s.id()};
  n.needs_grad = nodes_[s.id()].needs_grad;
  n.lbp = ctx;
  const auto& v = values(s);
  const std::size_t ne = ctx->src.size();
  n.val.resize(ne * k);
  n.aux_i.resize(ne * k);
  const double alpha = ctx->alpha;
  for (std::size_t e = 0; e < ne; ++e) {
    const double* di = ctx->disp.data() + std::size_t(ctx->src[e]) * k * 3;
    const double* dj = ctx->disp.data() + std::size_t(ctx->dst[e]) * k * 3;
    const T* srow = v.data() + e * k;
    for (std::size_t q = 0; q < k; ++q) {
      double best = std::numeric_limits<double>::infinity();
      int arg = 0;
      for (std::size_t p = 0; p < k; ++p) {
        const double dx = di[3 * p] - dj[3 * q];
        const double dy = di[3 * p + 1] - dj[3 * q + 1];
        const double dz = di[3 * p + 2] - dj[3 * q + 2];
        const double score = double(srow[p]) + alpha * (dx * dx + dy * dy + dz * dz);
        if (score < best) {
          best = score;
          arg = static_cast<int>(p);
        }
      }
      n.val[e * k + q] = T(best);
      n.aux_i[e * k + q] = arg;
    }
  }
  return push(std::move(n));
}

template <typename T>
std::vector<T>& Tape<T>::grad_buf(int id) {
  if (grads_[id].empty()) grads_[id].assign(nodes_[id].val.size(), T(0));
  return grads_[id];
}

template <typename T>
void Tape<T>::backward(Tensor<T> output) {
  require(output.valid() && output.tape() == this, "backward: output not on this tape");
  require(shape_numel(nodes_[output.id()].shape) == 1,
          "backward: output must be a scalar, got shape " +
              shape_str(nodes_[output.id()].shape));
  grads_.assign(nodes_.size(), {});
  grad_buf(output.id())[0] = T(1);
  for (int id = output.id(); id >= 0; --id) {
    if (!nodes_[id].needs_grad || grads_[id].empty()) continue;
    backward_node(id);
  }
}

template <typename T>
void Tape<T>::backward_node(int id) {
  Node& n = nodes_[id];
  const std::vector<T>& g = grads_[id];
  auto in_needs = [&](int slot) { return nodes_[n.in[slot]].needs_grad; };

  switch (n.op) {
    case Op::kLeaf:
    case Op::kConstant:
      break;
    case Op::kMatmul: {
      const auto& sa = nodes_[n.in[0]].shape;
      const std::size_t m = sa[0], k = sa[1], nn = n.shape[1];
      if (in_needs(0))
        gemm_nt_acc(g.data(), nodes_[n.in[1]].val.data(), grad_buf(n.in[0]).data(), m, nn, k);
      if (in_needs(1))
        gemm_tn_acc(nodes_[n.in[0]].val.data(), g.data(), grad_buf(n.in[1]).data(), m, k, nn);
      break;
    }
    case Op::kAdd: {
      for (int slot = 0; slot < 2; ++slot) {
        if (!in_needs(slot)) continue;
        auto& gb = grad_buf(n.in[slot]);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
      break;
    }
    case Op::kSub: {
      if (in_needs(0)) {
        auto& gb = grad_buf(n.in[0]);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
      if (in_needs(1)) {
        auto& gb = grad_buf(n.in[1]);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
      break;
    }
    case Op::kMul: {
      if (in_needs(0)) {
        auto& gb = grad_buf(n.in[0]);
        const auto& vb = nodes_[n.in[1]].val;
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * vb[i];
      }
      if (in_needs(1)) {
        auto& gb = grad_buf(n.in[1]);
        const auto& va = nodes_[n.in[0]].val;
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
      }
      break;
    }
    case Op::kScale: {
      if (!in_needs(0)) break;
      auto& gb = grad_buf(n.in[0]);
      const T s = T(n.aux_d[0]);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += s * g[i];
      break;
    }
    case Op::kAddRowvec: {
      const std::size_t c = n.shape[1];
      if (in_needs(0)) {
        auto& gb = grad_buf(n.in[0]);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
      if (in_needs(1)) {
        auto& gb = grad_buf(n.in[1]);
        for (std::size_t j = 0; j < c; ++j) {
          double acc = 0;
          for (std::size_t i = 0; i < n.shape[0]; ++i) acc += g[i * c + j];
          gb[j] += T(acc);
        }
      }
      break;
    }
    case Op::kSubColvec: {
      const std::size_t c = n.shape[1];
      if (in_needs(0)) {
        auto& gb = grad_buf(n.in[0]);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
      if (in_needs(1)) {
        auto& gb = grad_buf(n.in[1]);
        for (std::size_t i = 0; i < n.shape[0]; ++i) {
          double acc = 0;
          for (std::size_t j = 0; j < c; ++j) acc += g[i * c + j];
          gb[i] -= T(acc);
        }
      }
      break;
    }
    case Op::kAddN: {
      for (std::size_t slot = 0; slot < n.in.size(); ++slot) {
        if (!nodes_[n.in[slot]].needs_grad) continue;
        auto& gb = grad_buf(n.in[slot]);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
      break;
    }
    case Op::kConcatCols: {
      const std::size_t rows = n.shape[0], cols = n.shape[1];
      std::size_t off = 0;
      for (std::size_t slot = 0; slot < n.in.size(); ++slot) {
        const std::size_t c = nodes_[n.in[slot]].shape[1];
        if (nodes_[n.in[slot]].needs_grad) {
          auto& gb = grad_buf(n.in[slot]);
          for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < c; ++j) gb[i * c + j] += g[i * cols + off + j];
        }
        off += c;
      }
      break;
    }
    case Op::kLeakyRelu: {
      if (!in_needs(0)) break;
      auto& gb = grad_buf(n.in[0]);
      const auto& x = nodes_[n.in[0]].val;
      const T s = T(n.aux_d[0]);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += x[i] > T(0) ? g[i] : s * g[i];
      break;
    }
    case Op::kInstanceNorm: {
      const std::size_t rows = n.shape[0], c = n.shape[1];
      const auto& x = nodes_[n.in[0]].val;
      const auto& gain = nodes_[n.in[1]].val;
      for (std::size_t j = 0; j < c; ++j) {
        const double mean = n.aux_d[2 * j];
        const double inv = n.aux_d[2 * j + 1];
        double sum_dxhat = 0, sum_dxhat_xhat = 0, sum_g = 0, sum_g_xhat = 0;
        for (std::size_t i = 0; i < rows; ++i) {
          const double xhat = (double(x[i * c + j]) - mean) * inv;
          const double gi = double(g[i * c + j]);
          const double dxhat = gi * double(gain[j]);
          sum_dxhat += dxhat;
          sum_dxhat_xhat += dxhat * xhat;
          sum_g += gi;
          sum_g_xhat += gi * xhat;
        }
        if (in_needs(0)) {
          auto& gb = grad_buf(n.in[0]);
          const double invn = 1.0 / double(rows);
          for (std::size_t i = 0; i < rows; ++i) {
            const double xhat = (double(x[i * c + j]) - mean) * inv;
            const double dxhat = double(g[i * c + j]) * double(gain[j]);
            gb[i * c + j] += T(inv * (dxhat - invn * sum_dxhat - xhat * invn * sum_dxhat_xhat));
          }
        }
        if (in_needs(1)) grad_buf(n.in[1])[j] += T(sum_g_xhat);
        if (in_needs(2)) grad_buf(n.in[2])[j] += T(sum_g);
      }
      break;
    }
    case Op::kSoftmaxRows: {
      if (!in_needs(0)) break;
      auto& gb = grad_buf(n.in[0]);
      const std::size_t rows = n.shape[0], k = n.shape[1];
      for (std::size_t i = 0; i < rows; ++i) {
        double dot = 0;
        for (std::size_t j = 0; j < k; ++j) dot += double(g[i * k + j]) * double(n.val[i * k + j]);
        for (std::size_t j = 0; j < k; ++j)
          gb[i * k + j] += T(double(n.val[i * k + j]) * (double(g[i * k + j]) - dot));
      }
      break;
    }
    case Op::kMinSelectRows: {
      if (!in_needs(0)) break;
      auto& gb = grad_buf(n.in[0]);
      const std::size_t k = nodes_[n.in[0]].shape[1];
      for (std::size_t i = 0; i < n.val.size(); ++i) gb[i * k + std::size_t(n.aux_i[i])] += g[i];
      break;
    }
    case Op::kSegmentMax: {
      if (!in_needs(0)) break;
      auto& gb = grad_buf(n.in[0]);
      const std::size_t c = n.shape[1];
      for (std::size_t i = 0; i < n.val.size(); ++i) {
        const std::size_t row = std::size_t(n.aux_i[i]);
        gb[row * c + i % c] += g[i];
      }
      break;
    }
    case Op::kGatherRows: {
      if (!in_needs(0)) break;
      auto& gb = grad_buf(n.in[0]);
      const std::size_t c = n.shape[1];
      for (std::size_t r = 0; r < n.aux_i.size(); ++r) {
        T* dst = gb.data() + std::size_t(n.aux_i[r]) * c;
        const T* src = g.data() + r * c;
        for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
      }
      break;
    }
    case Op::kIndexSumRows: {
      if (!in_needs(0)) break;
      auto& gb = grad_buf(n.in[0]);
      const std::size_t c = n.shape[1];
      for (std::size_t r = 0; r < n.aux_i.size(); ++r) {
        const T* src = g.data() + std::size_t(n.aux_i[r]) * c;
        T* dst = gb.data() + r * c;
        for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
      }
      break;
    }
    case Op::kRowSum: {
      if (!in_needs(0)) break;
      auto& gb = grad_buf(n.in[0]);
      const std::size_t c = nodes_[n.in[0]].shape[1];
      for (std::size_t i = 0; i < n.shape[0]; ++i)
        for (std::size_t j = 0; j < c; ++j) gb[i * c + j] += g[i];
      break;
    }
    case Op::kReshape: {
      if (!in_needs(0)) break;
      auto& gb = grad_buf(n.in[0]);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      break;
    }
    case Op::kMae: {
      const auto& va = nodes_[n.in[0]].val;
      const auto& vb = nodes_[n.in[1]].val;
      const T gs = g[0];
      const T invn = T(1) / T(double(va.size()));
      for (int slot = 0; slot < 2; ++slot) {
        if (!in_needs(slot)) continue;
        auto& gb = grad_buf(n.in[slot]);
        const T sgn = slot == 0 ? T(1) : T(-1);
        for (std::size_t i = 0; i < va.size(); ++i) {
          const T d = va[i] - vb[i];
          const T s = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
          gb[i] += sgn * gs * invn * s;
        }
      }
      break;
    }
    case Op::kBlendRows: {
      const std::size_t rows = n.shape[0], c = n.shape[1];
      const std::size_t k = nodes_[n.in[0]].shape[1];
      const auto& vw = nodes_[n.in[0]].val;
      const auto& vd = nodes_[n.in[1]].val;
      if (in_needs(0)) {
        auto& gb = grad_buf(n.in[0]);
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0;
            for (std::size_t j = 0; j < c; ++j)
              acc += double(g[i * c + j]) * double(vd[(i * k + p) * c + j]);
            gb[i * k + p] += T(acc);
          }
      }
      if (in_needs(1)) {
        auto& gb = grad_buf(n.in[1]);
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t p = 0; p < k; ++p)
            for (std::size_t j = 0; j < c; ++j)
              gb[(i * k + p) * c + j] += vw[i * k + p] * g[i * c + j];
      }
      break;
    }
    case Op::kLbpMinPlus: {
      if (!in_needs(0)) break;
      auto& gb = grad_buf(n.in[0]);
      const std::size_t k = std::size_t(n.lbp->k);
      const std::size_t ne = n.lbp->src.size();
      for (std::size_t e = 0; e < ne; ++e)
        for (std::size_t q = 0; q < k; ++q)
          gb[e * k + std::size_t(n.aux_i[e * k + q])] += g[e * k + q];
      break;
    }
  }
}

template <typename T>
const std::vector<T>& Tape<T>::grad(Tensor<T> t) {
  if (grads_.size() != nodes_.size()) grads_.assign(nodes_.size(), {});
  auto& g = grads_[t.id()];
  if (g.empty()) g.assign(nodes_[t.id()].val.size(), T(0));
  return g;
}

template <typename T>
void ensure_finite(const Tensor<T>& t, const char* context) {
  for (T v : t.values())
    if (!std::isfinite(double(v)))
      throw ContractError(std::string(context) + ": non-finite value in result");
}

template class Tape<float>;
template class Tape<double>;
template void ensure_finite<float>(const Tensor<float>&, const char*);
template void ensure_finite<double>(const Tensor<double>&, const char*);

}  // namespace nrreg
