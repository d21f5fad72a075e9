// Copyright 2026 The SPEFT Authors
// SPDX-License-Identifier: Apache-2.0

// Gradients and Hessian-vector products of scalar losses over a list of
// parameter blocks. A loss is any callable that is generic over the scalar
// type: `loss(const std::vector<Tensor<S>>&) -> Tensor<S>`. That lets the
// same closure run on double for gradients and on Dual<double> for the
// exact Hessian-vector product.

#pragma once

#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "speft/tensor.hpp"

namespace speft {

using Blocks = std::vector<Matrix>;

namespace blocks {

inline Blocks zeros_like(const Blocks& b) {
  Blocks out;
  out.reserve(b.size());
  for (const auto& m : b) out.push_back(Matrix::Zero(m.rows(), m.cols()));
  return out;
}

inline double max_abs(const Blocks& b) {
  double m = 0.0;
  for (const auto& x : b) {
    if (x.size()) m = std::max(m, x.cwiseAbs().maxCoeff());
  }
  return m;
}

inline void check_conforming(const Blocks& a, const Blocks& b, const char* what) {
  if (a.size() != b.size()) throw ShapeError(std::string(what) + ": block count mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].rows() != b[i].rows() || a[i].cols() != b[i].cols()) {
      throw ShapeError(std::string(what) + ": block " + std::to_string(i) + " is " +
                       std::to_string(a[i].rows()) + "x" + std::to_string(a[i].cols()) + " vs " +
                       std::to_string(b[i].rows()) + "x" + std::to_string(b[i].cols()));
    }
  }
}

/// a + c * b
inline Blocks axpy(const Blocks& a, double c, const Blocks& b) {
  Blocks out = a;
  for (std::size_t i = 0; i < a.size(); ++i) out[i] += c * b[i];
  return out;
}

}  // namespace blocks

/// Loss value and gradient with respect to every block.
template <typename LossFn>
std::pair<double, Blocks> value_and_gradient(LossFn&& loss, const Blocks& theta) {
  std::vector<Tensor<double>> params;
  params.reserve(theta.size());
  for (const auto& m : theta) params.push_back(Tensor<double>::parameter(m));
  Tensor<double> l = loss(params);
  l.backward();
  Blocks grads;
  grads.reserve(theta.size());
  for (const auto& p : params) grads.push_back(p.grad());
  return {l.item(), std::move(grads)};
}

template <typename LossFn>
Blocks gradient(LossFn&& loss, const Blocks& theta) {
  return value_and_gradient(std::forward<LossFn>(loss), theta).second;
}

struct HvpOptions {
  /// Relative step; the absolute step is delta * (1 + |theta|_inf) / |v|_inf.
  double delta = 1e-4;
};

/// Step size used by the finite-difference Hessian-vector product.
inline double hvp_step(const Blocks& theta, const Blocks& v, double delta) {
  const double vmax = std::max(blocks::max_abs(v), std::numeric_limits<double>::min());
  return delta * (1.0 + blocks::max_abs(theta)) / vmax;
}

/// H v by central differences of a gradient oracle:
/// (grad(theta + eps v) - grad(theta - eps v)) / (2 eps).
/// `grad_fn(const Blocks&) -> Blocks`. A zero direction returns zeros.
template <typename GradFn>
Blocks hvp_from_gradients(GradFn&& grad_fn, const Blocks& theta, const Blocks& v, HvpOptions opts = {}) {
  blocks::check_conforming(theta, v, "hessian_vector_product");
  if (blocks::max_abs(v) == 0.0) return blocks::zeros_like(theta);
  const double eps = hvp_step(theta, v, opts.delta);
  Blocks plus = grad_fn(blocks::axpy(theta, eps, v));
  Blocks minus = grad_fn(blocks::axpy(theta, -eps, v));
  Blocks out = blocks::zeros_like(theta);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = (plus[i] - minus[i]) / (2.0 * eps);
    if (!out[i].allFinite()) {
      std::ostringstream msg;
      msg << "hessian_vector_product: non-finite result with step eps=" << eps;
      throw NumericError(msg.str());
    }
  }
  return out;
}

/// Reference Hessian-vector product: central finite difference of gradients.
template <typename LossFn>
Blocks hessian_vector_product(LossFn&& loss, const Blocks& theta, const Blocks& v, HvpOptions opts = {}) {
  return hvp_from_gradients([&](const Blocks& t) { return gradient(loss, t); }, theta, v, opts);
}

/// Exact Hessian-vector product by forward-over-reverse differentiation:
/// the tape runs on Dual<double> with tangent v, so each gradient's tangent
/// part is the directional derivative of the gradient along v.
template <typename LossFn>
Blocks hessian_vector_product_exact(LossFn&& loss, const Blocks& theta, const Blocks& v) {
  using D = Dual<double>;
  blocks::check_conforming(theta, v, "hessian_vector_product_exact");
  std::vector<Tensor<D>> params;
  params.reserve(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    MatrixX<D> m(theta[i].rows(), theta[i].cols());
    for (Index k = 0; k < m.size(); ++k) m.data()[k] = D(theta[i].data()[k], v[i].data()[k]);
    params.push_back(Tensor<D>::parameter(std::move(m)));
  }
  Tensor<D> l = loss(params);
  l.backward();
  Blocks out;
  out.reserve(theta.size());
  for (const auto& p : params) {
    MatrixX<D> g = p.grad();
    Matrix h(g.rows(), g.cols());
    for (Index k = 0; k < g.size(); ++k) h.data()[k] = g.data()[k].d;
    out.push_back(std::move(h));
  }
  return out;
}

}  // namespace speft
