// Copyright 2026 The SPEFT Authors
// SPDX-License-Identifier: Apache-2.0

// Minimal reverse-mode automatic differentiation over dense tensors.
//
// A Tensor is a shared handle to a node of a dynamically recorded graph.
// Every operation whose inputs require gradients records its parents and a
// local backward rule; backward() on a scalar walks the graph once in
// reverse topological order. Leaf gradients accumulate across calls until
// zero_grad(). Without retain_graph the traversed graph is released and a
// second backward through it is an error.
//
// Values are stored as row-major matrices. A tensor of shape
// [d0, ..., dn-1] is viewed as a (d0 * ... * dn-2) x dn-1 matrix; rank-0
// and rank-1 tensors are single-row matrices.

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "speft/common.hpp"
#include "speft/dual.hpp"

namespace speft {

/// Non-finite input/output checks. On by default in debug builds.
inline std::atomic<bool>& debug_checks_flag() {
#ifdef NDEBUG
  static std::atomic<bool> flag{false};
#else
  static std::atomic<bool> flag{true};
#endif
  return flag;
}
inline void set_debug_checks(bool on) { debug_checks_flag().store(on); }
inline bool debug_checks() { return debug_checks_flag().load(std::memory_order_relaxed); }

namespace detail {

inline Index numel_of(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

inline std::pair<Index, Index> matrix_dims(const Shape& shape) {
  if (shape.empty()) return {1, 1};
  if (shape.size() == 1) return {1, shape[0]};
  const Index cols = shape.back();
  return {numel_of(shape) / cols, cols};
}

template <typename Scalar>
struct Node {
  using Mat = MatrixX<Scalar>;

  Shape shape;
  Mat value;
  Mat grad;
  bool has_grad = false;
  bool requires_grad = false;
  bool leaf = true;
  bool released = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void accumulate(const Mat& g) {
    if (!has_grad) {
      grad = g;
      has_grad = true;
    } else {
      grad += g;
    }
  }
};

template <typename Scalar>
bool all_finite(const MatrixX<Scalar>& m) {
  for (Index i = 0; i < m.size(); ++i) {
    if (!finite(m.data()[i])) return false;
  }
  return true;
}

}  // namespace detail

template <typename Scalar>
class Tensor {
 public:
  using Mat = MatrixX<Scalar>;
  using NodeT = detail::Node<Scalar>;

  Tensor() = default;

  /// Constant tensor (no gradient).
  Tensor(Shape shape, Mat value) : node_(std::make_shared<NodeT>()) {
    auto [r, c] = detail::matrix_dims(shape);
    if (value.rows() != r || value.cols() != c) {
      throw ShapeError("tensor: value is " + std::to_string(value.rows()) + "x" +
                       std::to_string(value.cols()) + " but shape " + shape_string(shape) +
                       " needs " + std::to_string(r) + "x" + std::to_string(c));
    }
    node_->shape = std::move(shape);
    node_->value = std::move(value);
  }

  /// 2-D constant from a matrix.
  explicit Tensor(Mat value) : node_(std::make_shared<detail::Node<Scalar>>()) {
    node_->shape = Shape{value.rows(), value.cols()};
    node_->value = std::move(value);
  }

  static Tensor constant(Mat value) { return Tensor(std::move(value)); }

  static Tensor scalar(Scalar s) {
    Mat m(1, 1);
    m(0, 0) = s;
    return Tensor(Shape{}, std::move(m));
  }

  static Tensor zeros(const Shape& shape) {
    auto [r, c] = detail::matrix_dims(shape);
    return Tensor(shape, Mat::Zero(r, c));
  }

  static Tensor from_vector(const std::vector<Scalar>& values) {
    Mat m(1, static_cast<Index>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i) m(0, static_cast<Index>(i)) = values[i];
    return Tensor(Shape{static_cast<Index>(values.size())}, std::move(m));
  }

  /// Trainable leaf.
  static Tensor parameter(Mat value) {
    Tensor t(std::move(value));
    t.node_->requires_grad = true;
    return t;
  }
  static Tensor parameter(Shape shape, Mat value) {
    Tensor t(std::move(shape), std::move(value));
    t.node_->requires_grad = true;
    return t;
  }

  /// Wraps a freshly computed result node. Used by operations.
  static Tensor from_node(std::shared_ptr<NodeT> node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  Index rank() const { return static_cast<Index>(node_->shape.size()); }
  Index numel() const { return node_->value.size(); }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  const Mat& value() const { return node_->value; }
  Scalar item() const {
    if (numel() != 1) throw ShapeError("item: tensor of shape " + shape_string(shape()) + " is not a scalar");
    return node_->value(0, 0);
  }

  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->leaf; }
  bool has_grad() const { return node_->has_grad; }
  /// Gradient of a leaf; zeros when nothing has been accumulated yet.
  Mat grad() const {
    if (node_->has_grad) return node_->grad;
    return Mat::Zero(rows(), cols());
  }
  void zero_grad() {
    node_->has_grad = false;
    node_->grad.resize(0, 0);
  }

  /// Mutates a leaf's value in place (optimizers). Not allowed on results.
  Mat& mutable_value() {
    if (!node_->leaf) throw Error("mutable_value: tensor is not a leaf");
    return node_->value;
  }

  void backward(bool retain_graph = false) const;

  const std::shared_ptr<NodeT>& node() const { return node_; }

 private:
  std::shared_ptr<NodeT> node_;
};

namespace detail {

template <typename Scalar>
void check_finite_inputs(const char* op, std::initializer_list<const Tensor<Scalar>*> inputs) {
  if (!debug_checks()) return;
  for (const auto* t : inputs) {
    if (!all_finite(t->value())) {
      throw NumericError(std::string(op) + ": non-finite input of shape " + shape_string(t->shape()));
    }
  }
}

/// Records a result node. Parents are kept only if some parent needs a gradient.
template <typename Scalar, typename Fn>
Tensor<Scalar> make_result(const char* op, Shape shape, MatrixX<Scalar> value,
                           std::vector<Tensor<Scalar>> parents, Fn&& backward_fn) {
  auto node = std::make_shared<Node<Scalar>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->leaf = false;
  if (debug_checks() && !all_finite(node->value)) {
    throw NumericError(std::string(op) + ": produced non-finite values");
  }
  bool needs = false;
  for (const auto& p : parents) needs = needs || p.requires_grad();
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (const auto& p : parents) node->parents.push_back(p.node());
    node->backward_fn = std::forward<Fn>(backward_fn);
  }
  return Tensor<Scalar>::from_node(std::move(node));
}

template <typename Scalar>
void require_same_shape(const char* op, const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

}  // namespace detail

template <typename Scalar>
void Tensor<Scalar>::backward(bool retain_graph) const {
  using detail::Node;
  if (numel() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " + shape_string(shape()));
  }
  if (!node_->requires_grad) throw Error("backward: loss does not depend on any parameter");
  if (node_->released) throw Error("backward: graph already consumed (use retain_graph)");

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node<Scalar>*> order;
  std::unordered_set<Node<Scalar>*> seen;
  std::vector<std::pair<Node<Scalar>*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node<Scalar>* p = n->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  for (auto* n : order) {
    if (!n->leaf) {
      if (n->released) throw Error("backward: graph already consumed (use retain_graph)");
      n->has_grad = false;
    }
  }
  Mat seed = Mat::Constant(1, 1, Scalar(1));
  node_->accumulate(seed);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<Scalar>* n = *it;
    if (n->leaf || !n->has_grad) continue;
    n->backward_fn(*n);
  }
  if (retain_graph) return;
  // Release after the sweep: clearing parents frees nodes that `order`
  // still points to.
  std::vector<std::shared_ptr<Node<Scalar>>> keep;
  for (auto* n : order) {
    if (n->leaf) continue;
    n->released = true;
    n->backward_fn = nullptr;
    n->grad.resize(0, 0);
    n->has_grad = false;
    for (auto& p : n->parents) keep.push_back(std::move(p));
    n->parents.clear();
  }
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  using Mat = MatrixX<Scalar>;
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw ShapeError("matmul: cannot multiply " + shape_string(a.shape()) + " by " +
                     shape_string(b.shape()));
  }
  detail::check_finite_inputs("matmul", {&a, &b});
  Mat out = a.value() * b.value();
  return detail::make_result<Scalar>("matmul", {a.rows(), b.cols()}, std::move(out), {a, b},
                                     [](detail::Node<Scalar>& self) {
    auto& lhs = *self.parents[0];
    auto& rhs = *self.parents[1];
    if (lhs.requires_grad) lhs.accumulate(self.grad * rhs.value.transpose());
    if (rhs.requires_grad) rhs.accumulate(lhs.value.transpose() * self.grad);
  });
}

/// Elementwise sum. `b` may also be a row vector broadcast over rows of `a`.
template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  using Mat = MatrixX<Scalar>;
  detail::check_finite_inputs("add", {&a, &b});
  if (a.shape() == b.shape()) {
    Mat out = a.value() + b.value();
    return detail::make_result<Scalar>("add", a.shape(), std::move(out), {a, b},
                                       [](detail::Node<Scalar>& self) {
      for (auto& p : self.parents) {
        if (p->requires_grad) p->accumulate(self.grad);
      }
    });
  }
  const bool row_broadcast = b.rows() == 1 && b.cols() == a.cols() && b.rank() <= 2;
  if (!row_broadcast) {
    throw ShapeError("add: shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  Mat out = a.value().rowwise() + b.value().row(0);
  return detail::make_result<Scalar>("add", a.shape(), std::move(out), {a, b},
                                     [](detail::Node<Scalar>& self) {
    auto& lhs = *self.parents[0];
    auto& rhs = *self.parents[1];
    if (lhs.requires_grad) lhs.accumulate(self.grad);
    if (rhs.requires_grad) rhs.accumulate(self.grad.colwise().sum());
  });
}

template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  using Mat = MatrixX<Scalar>;
  detail::require_same_shape("sub", a, b);
  detail::check_finite_inputs("sub", {&a, &b});
  Mat out = a.value() - b.value();
  return detail::make_result<Scalar>("sub", a.shape(), std::move(out), {a, b},
                                     [](detail::Node<Scalar>& self) {
    if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad);
    if (self.parents[1]->requires_grad) self.parents[1]->accumulate(-self.grad);
  });
}

/// Elementwise (Hadamard) product.
template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  using Mat = MatrixX<Scalar>;
  detail::require_same_shape("mul", a, b);
  detail::check_finite_inputs("mul", {&a, &b});
  Mat out = a.value().cwiseProduct(b.value());
  return detail::make_result<Scalar>("mul", a.shape(), std::move(out), {a, b},
                                     [](detail::Node<Scalar>& self) {
    auto& lhs = *self.parents[0];
    auto& rhs = *self.parents[1];
    if (lhs.requires_grad) lhs.accumulate(self.grad.cwiseProduct(rhs.value));
    if (rhs.requires_grad) rhs.accumulate(self.grad.cwiseProduct(lhs.value));
  });
}

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar c) {
  using Mat = MatrixX<Scalar>;
  detail::check_finite_inputs("scale", {&a});
  Mat out = a.value() * c;
  return detail::make_result<Scalar>("scale", a.shape(), std::move(out), {a},
                                     [c](detail::Node<Scalar>& self) {
    self.parents[0]->accumulate(self.grad * c);
  });
}

template <typename Scalar>
Tensor<Scalar> neg(const Tensor<Scalar>& a) {
  return scale(a, Scalar(-1));
}

template <typename Scalar> Tensor<Scalar> operator+(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return add(a, b); }
template <typename Scalar> Tensor<Scalar> operator-(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return sub(a, b); }
template <typename Scalar> Tensor<Scalar> operator*(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return mul(a, b); }
template <typename Scalar> Tensor<Scalar> operator-(const Tensor<Scalar>& a) { return neg(a); }

namespace detail {

/// Elementwise op from a value map and a derivative map evaluated at the input.
template <typename Scalar, typename F, typename DF>
Tensor<Scalar> unary(const char* op, const Tensor<Scalar>& a, F f, DF df) {
  using Mat = MatrixX<Scalar>;
  check_finite_inputs(op, {&a});
  Mat out = a.value().unaryExpr(f);
  return make_result<Scalar>(op, a.shape(), std::move(out), {a}, [df](Node<Scalar>& self) {
    auto& in = *self.parents[0];
    in.accumulate(self.grad.cwiseProduct(in.value.unaryExpr(df)));
  });
}

}  // namespace detail

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& a) {
  return detail::unary<Scalar>(
      "relu", a, [](const Scalar& x) { return x > Scalar(0) ? x : Scalar(0); },
      [](const Scalar& x) { return x > Scalar(0) ? Scalar(1) : Scalar(0); });
}

template <typename Scalar>
Tensor<Scalar> tanh(const Tensor<Scalar>& a) {
  using std::tanh;
  return detail::unary<Scalar>(
      "tanh", a, [](const Scalar& x) { return tanh(x); },
      [](const Scalar& x) {
        Scalar t = tanh(x);
        return Scalar(1) - t * t;
      });
}

/// GELU, tanh approximation.
template <typename Scalar>
Tensor<Scalar> gelu(const Tensor<Scalar>& a) {
  using std::tanh;
  static constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  static constexpr double kA = 0.044715;
  return detail::unary<Scalar>(
      "gelu", a,
      [](const Scalar& x) {
        Scalar u = Scalar(kC) * (x + Scalar(kA) * x * x * x);
        return Scalar(0.5) * x * (Scalar(1) + tanh(u));
      },
      [](const Scalar& x) {
        Scalar u = Scalar(kC) * (x + Scalar(kA) * x * x * x);
        Scalar t = tanh(u);
        Scalar du = Scalar(kC) * (Scalar(1) + Scalar(3 * kA) * x * x);
        return Scalar(0.5) * (Scalar(1) + t) + Scalar(0.5) * x * (Scalar(1) - t * t) * du;
      });
}

template <typename Scalar>
Tensor<Scalar> abs(const Tensor<Scalar>& a) {
  using std::abs;
  return detail::unary<Scalar>(
      "abs", a, [](const Scalar& x) { return abs(x); },
      [](const Scalar& x) {
        if (x > Scalar(0)) return Scalar(1);
        if (x < Scalar(0)) return Scalar(-1);
        return Scalar(0);
      });
}

template <typename Scalar>
Tensor<Scalar> square(const Tensor<Scalar>& a) {
  return detail::unary<Scalar>(
      "square", a, [](const Scalar& x) { return x * x; },
      [](const Scalar& x) { return Scalar(2) * x; });
}

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& a) {
  using Mat = MatrixX<Scalar>;
  detail::check_finite_inputs("sum", {&a});
  Mat out(1, 1);
  out(0, 0) = a.value().sum();
  return detail::make_result<Scalar>("sum", {}, std::move(out), {a}, [](detail::Node<Scalar>& self) {
    auto& in = *self.parents[0];
    in.accumulate(Mat::Constant(in.value.rows(), in.value.cols(), self.grad(0, 0)));
  });
}

template <typename Scalar>
Tensor<Scalar> mean(const Tensor<Scalar>& a) {
  return scale(sum(a), Scalar(1.0 / static_cast<double>(a.numel())));
}

template <typename Scalar>
Tensor<Scalar> reshape(const Tensor<Scalar>& a, Shape shape) {
  using Mat = MatrixX<Scalar>;
  if (detail::numel_of(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_string(a.shape()) + " as " + shape_string(shape));
  }
  auto [r, c] = detail::matrix_dims(shape);
  Mat out = Eigen::Map<const Mat>(a.value().data(), r, c);
  return detail::make_result<Scalar>("reshape", std::move(shape), std::move(out), {a},
                                     [](detail::Node<Scalar>& self) {
    auto& in = *self.parents[0];
    in.accumulate(Eigen::Map<const Mat>(self.grad.data(), in.value.rows(), in.value.cols()));
  });
}

template <typename Scalar>
Tensor<Scalar> transpose(const Tensor<Scalar>& a) {
  using Mat = MatrixX<Scalar>;
  if (a.rank() != 2) throw ShapeError("transpose: expected rank 2, got " + shape_string(a.shape()));
  Mat out = a.value().transpose();
  return detail::make_result<Scalar>("transpose", {a.cols(), a.rows()}, std::move(out), {a},
                                     [](detail::Node<Scalar>& self) {
    self.parents[0]->accumulate(self.grad.transpose());
  });
}

/// Rectangular block [row, row+rows) x [col, col+cols) of a 2-D tensor.
template <typename Scalar>
Tensor<Scalar> slice(const Tensor<Scalar>& a, Index row, Index rows, Index col, Index cols) {
  using Mat = MatrixX<Scalar>;
  if (a.rank() != 2 || row < 0 || col < 0 || rows < 0 || cols < 0 || row + rows > a.rows() ||
      col + cols > a.cols()) {
    throw ShapeError("slice: block out of range for " + shape_string(a.shape()));
  }
  Mat out = a.value().block(row, col, rows, cols);
  return detail::make_result<Scalar>("slice", {rows, cols}, std::move(out), {a},
                                     [row, col](detail::Node<Scalar>& self) {
    auto& in = *self.parents[0];
    Mat g = Mat::Zero(in.value.rows(), in.value.cols());
    g.block(row, col, self.grad.rows(), self.grad.cols()) = self.grad;
    in.accumulate(g);
  });
}

template <typename Scalar>
Tensor<Scalar> concat_rows(const std::vector<Tensor<Scalar>>& parts) {
  using Mat = MatrixX<Scalar>;
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Index rows = 0;
  const Index cols = parts.front().cols();
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.cols() != cols) {
      throw ShapeError("concat_rows: shape mismatch " + shape_string(parts.front().shape()) + " vs " +
                       shape_string(p.shape()));
    }
    rows += p.rows();
  }
  Mat out(rows, cols);
  Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return detail::make_result<Scalar>("concat_rows", {rows, cols}, std::move(out), parts,
                                     [](detail::Node<Scalar>& self) {
    Index offset = 0;
    for (auto& p : self.parents) {
      const Index r = p->value.rows();
      if (p->requires_grad) p->accumulate(self.grad.middleRows(offset, r));
      offset += r;
    }
  });
}

template <typename Scalar>
Tensor<Scalar> concat_cols(const std::vector<Tensor<Scalar>>& parts) {
  using Mat = MatrixX<Scalar>;
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Index cols = 0;
  const Index rows = parts.front().rows();
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.rows() != rows) {
      throw ShapeError("concat_cols: shape mismatch " + shape_string(parts.front().shape()) + " vs " +
                       shape_string(p.shape()));
    }
    cols += p.cols();
  }
  Mat out(rows, cols);
  Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return detail::make_result<Scalar>("concat_cols", {rows, cols}, std::move(out), parts,
                                     [](detail::Node<Scalar>& self) {
    Index offset = 0;
    for (auto& p : self.parents) {
      const Index c = p->value.cols();
      if (p->requires_grad) p->accumulate(self.grad.middleCols(offset, c));
      offset += c;
    }
  });
}

/// Row-wise softmax. With `causal`, entry (i, j) for j > i is masked out,
/// which requires a square input.
template <typename Scalar>
Tensor<Scalar> softmax_rows(const Tensor<Scalar>& a, bool causal = false) {
  using Mat = MatrixX<Scalar>;
  using std::exp;
  if (a.rank() != 2) throw ShapeError("softmax_rows: expected rank 2, got " + shape_string(a.shape()));
  if (causal && a.rows() != a.cols()) {
    throw ShapeError("softmax_rows: causal mask needs a square input, got " + shape_string(a.shape()));
  }
  detail::check_finite_inputs("softmax_rows", {&a});
  const Mat& x = a.value();
  Mat y = Mat::Zero(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const Index width = causal ? i + 1 : x.cols();
    Scalar mx = x(i, 0);
    for (Index j = 1; j < width; ++j) mx = x(i, j) > mx ? x(i, j) : mx;
    Scalar total(0);
    for (Index j = 0; j < width; ++j) {
      y(i, j) = exp(x(i, j) - mx);
      total += y(i, j);
    }
    for (Index j = 0; j < width; ++j) y(i, j) /= total;
  }
  Mat kept = y;
  return detail::make_result<Scalar>("softmax_rows", a.shape(), std::move(y), {a},
                                     [kept = std::move(kept)](detail::Node<Scalar>& self) {
    Mat g = self.grad.cwiseProduct(kept);
    for (Index i = 0; i < g.rows(); ++i) {
      const Scalar dot = g.row(i).sum();
      g.row(i) -= kept.row(i) * dot;
    }
    self.parents[0]->accumulate(g);
  });
}

/// Row-wise layer normalization with affine parameters of shape [cols].
template <typename Scalar>
Tensor<Scalar> layer_norm(const Tensor<Scalar>& x, const Tensor<Scalar>& gamma, const Tensor<Scalar>& beta,
                          double eps = 1e-5) {
  using Mat = MatrixX<Scalar>;
  using std::sqrt;
  if (x.rank() != 2 || gamma.numel() != x.cols() || beta.numel() != x.cols()) {
    throw ShapeError("layer_norm: input " + shape_string(x.shape()) + " with gamma " +
                     shape_string(gamma.shape()) + " and beta " + shape_string(beta.shape()));
  }
  detail::check_finite_inputs("layer_norm", {&x, &gamma, &beta});
  const Index n = x.rows();
  const Index d = x.cols();
  Mat xhat(n, d);
  Mat inv_std(n, 1);
  for (Index i = 0; i < n; ++i) {
    Scalar mu = x.value().row(i).sum() / Scalar(static_cast<double>(d));
    Scalar var(0);
    for (Index j = 0; j < d; ++j) {
      Scalar c = x.value()(i, j) - mu;
      var += c * c;
    }
    var /= Scalar(static_cast<double>(d));
    Scalar is = Scalar(1) / sqrt(var + Scalar(eps));
    inv_std(i, 0) = is;
    for (Index j = 0; j < d; ++j) xhat(i, j) = (x.value()(i, j) - mu) * is;
  }
  Mat out(n, d);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j) out(i, j) = xhat(i, j) * gamma.value()(0, j) + beta.value()(0, j);
  }
  return detail::make_result<Scalar>(
      "layer_norm", x.shape(), std::move(out), {x, gamma, beta},
      [xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node<Scalar>& self) {
        auto& in = *self.parents[0];
        auto& g = *self.parents[1];
        auto& b = *self.parents[2];
        const Index n = xhat.rows();
        const Index d = xhat.cols();
        if (g.requires_grad) {
          Mat dg = self.grad.cwiseProduct(xhat).colwise().sum();
          g.accumulate(Eigen::Map<const Mat>(dg.data(), g.value.rows(), g.value.cols()));
        }
        if (b.requires_grad) {
          Mat db = self.grad.colwise().sum();
          b.accumulate(Eigen::Map<const Mat>(db.data(), b.value.rows(), b.value.cols()));
        }
        if (in.requires_grad) {
          Mat dx(n, d);
          for (Index i = 0; i < n; ++i) {
            Scalar mean_dy(0);
            Scalar mean_dy_xhat(0);
            for (Index j = 0; j < d; ++j) {
              Scalar dyh = self.grad(i, j) * g.value(0, j);
              mean_dy += dyh;
              mean_dy_xhat += dyh * xhat(i, j);
            }
            mean_dy /= Scalar(static_cast<double>(d));
            mean_dy_xhat /= Scalar(static_cast<double>(d));
            for (Index j = 0; j < d; ++j) {
              Scalar dyh = self.grad(i, j) * g.value(0, j);
              dx(i, j) = inv_std(i, 0) * (dyh - mean_dy - xhat(i, j) * mean_dy_xhat);
            }
          }
          in.accumulate(dx);
        }
      });
}

/// Gathers rows of `table` ([vocab, dim]) for each id.
template <typename Scalar>
Tensor<Scalar> embedding(const Tensor<Scalar>& table, const std::vector<int>& ids) {
  using Mat = MatrixX<Scalar>;
  if (table.rank() != 2) throw ShapeError("embedding: table must be rank 2, got " + shape_string(table.shape()));
  Mat out(static_cast<Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.rows()) {
      throw ShapeError("embedding: id " + std::to_string(ids[i]) + " outside table " +
                       shape_string(table.shape()));
    }
    out.row(static_cast<Index>(i)) = table.value().row(ids[i]);
  }
  return detail::make_result<Scalar>("embedding", {static_cast<Index>(ids.size()), table.cols()}, std::move(out),
                                     {table}, [ids](detail::Node<Scalar>& self) {
    auto& t = *self.parents[0];
    Mat g = Mat::Zero(t.value.rows(), t.value.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) g.row(ids[i]) += self.grad.row(static_cast<Index>(i));
    t.accumulate(g);
  });
}

/// Mean cross-entropy of row-wise logits [n, classes] against integer targets.
template <typename Scalar>
Tensor<Scalar> cross_entropy(const Tensor<Scalar>& logits, const std::vector<int>& targets) {
  using Mat = MatrixX<Scalar>;
  using std::exp;
  using std::log;
  if (logits.rank() != 2 || logits.rows() != static_cast<Index>(targets.size())) {
    throw ShapeError("cross_entropy: logits " + shape_string(logits.shape()) + " vs " +
                     std::to_string(targets.size()) + " targets");
  }
  if (targets.empty()) throw ShapeError("cross_entropy: empty batch");
  detail::check_finite_inputs("cross_entropy", {&logits});
  const Index n = logits.rows();
  const Index c = logits.cols();
  Mat probs(n, c);
  Scalar total(0);
  for (Index i = 0; i < n; ++i) {
    const int t = targets[static_cast<std::size_t>(i)];
    if (t < 0 || t >= c) {
      throw ShapeError("cross_entropy: target " + std::to_string(t) + " outside " + std::to_string(c) + " classes");
    }
    Scalar mx = logits.value()(i, 0);
    for (Index j = 1; j < c; ++j) mx = logits.value()(i, j) > mx ? logits.value()(i, j) : mx;
    Scalar z(0);
    for (Index j = 0; j < c; ++j) {
      probs(i, j) = exp(logits.value()(i, j) - mx);
      z += probs(i, j);
    }
    for (Index j = 0; j < c; ++j) probs(i, j) /= z;
    total += log(z) + mx - logits.value()(i, t);
  }
  Mat out(1, 1);
  out(0, 0) = total / Scalar(static_cast<double>(n));
  return detail::make_result<Scalar>("cross_entropy", {}, std::move(out), {logits},
                                     [probs = std::move(probs), targets](detail::Node<Scalar>& self) {
    Mat g = probs;
    for (std::size_t i = 0; i < targets.size(); ++i) g(static_cast<Index>(i), targets[i]) -= Scalar(1);
    g *= self.grad(0, 0) / Scalar(static_cast<double>(targets.size()));
    self.parents[0]->accumulate(g);
  });
}

/// Mean squared error over all elements.
template <typename Scalar>
Tensor<Scalar> mse(const Tensor<Scalar>& pred, const Tensor<Scalar>& target) {
  detail::require_same_shape("mse", pred, target);
  if (pred.numel() == 0) throw ShapeError("mse: empty batch");
  return mean(square(sub(pred, target)));
}

}  // namespace speft
