#pragma once

#include <cstddef>
#include <deque>
#include <memory>
#include <string>
#include <vector>

namespace nrreg {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

enum class Op {
  kLeaf,
  kConstant,
  kMatmul,
  kAdd,
  kSub,
  kMul,
  kScale,
  kAddRowvec,
  kSubColvec,
  kAddN,
  kConcatCols,
  kLeakyRelu,
  kInstanceNorm,
  kSoftmaxRows,
  kMinSelectRows,
  kSegmentMax,
  kGatherRows,
  kIndexSumRows,
  kRowSum,
  kReshape,
  kMae,
  kBlendRows,
  kLbpMinPlus,
};

template <typename T>
class Tape;

// Lightweight handle into a tape.  Copyable; the tape owns all storage.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  Tape<T>* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  const Shape& shape() const;
  const std::vector<T>& values() const;
  std::size_t numel() const;

 private:
  friend class Tape<T>;
  Tensor(Tape<T>* t, int id) : tape_(t), id_(id) {}

  Tape<T>* tape_ = nullptr;
  int id_ = -1;
};

// Edge geometry shared by the LBP min-plus nodes of one inference run.
// r[p][q] = ||disp[src][p] - disp[dst][q]||^2 is recomputed on the fly.
struct LbpEdgeContext {
  int k = 0;                 // candidates per point
  double alpha = 0;          // regularization strength
  std::vector<int> src;      // per directed edge: sender node
  std::vector<int> dst;      // per directed edge: receiver node
  std::vector<double> disp;  // n*k*3 candidate displacements
};

template <typename T>
struct MinSelectResult {
  Tensor<T> values;          // one value per row
  std::vector<int> indices;  // argmin per row (first occurrence)
};

// Reverse-mode tape.  Nodes are appended in topological order; forward
// values are computed eagerly at creation.  Single-threaded object.
template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor<T> constant(Shape shape, std::vector<T> data);
  Tensor<T> scalar(T v);
  Tensor<T> zeros(Shape shape, bool needs_grad = false);
  // Trainable parameter: participates in backward.
  Tensor<T> leaf(Shape shape, std::vector<T> data);

  // a: m x k, b: k x n -> m x n.
  Tensor<T> matmul(Tensor<T> a, Tensor<T> b);
  Tensor<T> add(Tensor<T> a, Tensor<T> b);
  Tensor<T> sub(Tensor<T> a, Tensor<T> b);
  Tensor<T> mul(Tensor<T> a, Tensor<T> b);
  Tensor<T> scale(Tensor<T> a, double s);
  // mat: n x c, vec: c -> broadcast add over rows.
  Tensor<T> add_rowvec(Tensor<T> mat, Tensor<T> vec);
  // mat: n x c, col: n -> out[i][j] = mat[i][j] - col[i].
  Tensor<T> sub_colvec(Tensor<T> mat, Tensor<T> col);
  Tensor<T> add_n(const std::vector<Tensor<T>>& xs);
  // 2-D inputs with equal row counts, concatenated along columns.
  Tensor<T> concat_cols(const std::vector<Tensor<T>>& xs);
  Tensor<T> leaky_relu(Tensor<T> x, double negative_slope);
  // x: n x c, gain/bias: c.  Per-channel over the n axis, biased variance.
  Tensor<T> instance_norm(Tensor<T> x, Tensor<T> gain, Tensor<T> bias, double eps = 1e-5);
  // Row-wise softmax with max subtraction.
  Tensor<T> softmax_rows(Tensor<T> x);
  // Row-wise min and first-occurrence argmin; gradient routed to the argmin.
  MinSelectResult<T> min_select_rows(Tensor<T> x);
  // x: (g*segment) x c -> g x c, per-channel max over each block of
  // `segment` consecutive rows, with argmax (flat row index) saved.
  Tensor<T> segment_max(Tensor<T> x, std::size_t segment);
  Tensor<T> gather_rows(Tensor<T> x, std::vector<int> idx);
  // out[dst[r]] += x[r]; rows accumulated in ascending r (fixed order).
  Tensor<T> index_sum_rows(Tensor<T> x, std::vector<int> dst, std::size_t n_out);
  // n x c -> n, sum along the last axis (double accumulation).
  Tensor<T> row_sum(Tensor<T> x);
  Tensor<T> reshape(Tensor<T> x, Shape shape);
  // Mean absolute error over all entries; scalar output.
  Tensor<T> mae(Tensor<T> a, Tensor<T> b);
  // w: n x k, d: n x k x 3 -> n x 3, out[i] = sum_p w[i][p] * d[i][p].
  Tensor<T> blend_rows(Tensor<T> w, Tensor<T> d);
  // s: E x k -> E x k, out[e][q] = min_p(s[e][p] + alpha * r_e[p][q]).
  Tensor<T> lbp_min_plus(Tensor<T> s, std::shared_ptr<const LbpEdgeContext> ctx);

  // Reverse accumulation from a scalar output.  Clears previous gradients;
  // repeat calls on the same tape give bit-identical results.
  void backward(Tensor<T> output);

  const Shape& shape(Tensor<T> t) const { return nodes_[t.id()].shape; }
  const std::vector<T>& values(Tensor<T> t) const { return nodes_[t.id()].val; }
  // Gradient of the last backward output w.r.t. t (zeros if unreachable).
  const std::vector<T>& grad(Tensor<T> t);
  // Saved argmin/argmax indices of selection nodes.
  const std::vector<int>& arg_indices(Tensor<T> t) const { return nodes_[t.id()].aux_i; }
  bool needs_grad(Tensor<T> t) const { return nodes_[t.id()].needs_grad; }
  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Op op;
    Shape shape;
    std::vector<T> val;
    std::vector<int> in;
    std::vector<int> aux_i;
    std::vector<double> aux_d;
    std::shared_ptr<const LbpEdgeContext> lbp;
    bool needs_grad = false;
  };

  Tensor<T> push(Node n);
  bool any_needs_grad(const std::vector<Tensor<T>>& xs) const;
  std::vector<T>& grad_buf(int id);
  void backward_node(int id);

  std::vector<Node> nodes_;
  std::vector<std::vector<T>> grads_;
  std::vector<T> empty_zero_;
};

template <typename T>
const Shape& Tensor<T>::shape() const { return tape_->shape(*this); }
template <typename T>
const std::vector<T>& Tensor<T>::values() const { return tape_->values(*this); }
template <typename T>
std::size_t Tensor<T>::numel() const { return shape_numel(shape()); }

// Throws ContractError if any entry of t is NaN or infinite.
template <typename T>
void ensure_finite(const Tensor<T>& t, const char* context);

}  // namespace nrreg
