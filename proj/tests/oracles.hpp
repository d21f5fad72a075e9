// Copyright 2026 The SPEFT Authors
// SPDX-License-Identifier: Apache-2.0

// Independent reference implementations used only by tests: finite
// differences, full-sort top-k, and a dense masked trainer.

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "speft/mask.hpp"
#include "speft/model.hpp"
#include "speft/trainer.hpp"

namespace speft::oracle {

/// Fourth-order central differences, one coordinate at a time.
template <typename F>
Blocks fd_gradient(F&& f, const Blocks& theta, double h = 1e-3) {
  Blocks g = blocks::zeros_like(theta);
  Blocks t = theta;
  for (std::size_t b = 0; b < t.size(); ++b) {
    for (Index k = 0; k < t[b].size(); ++k) {
      const double x = t[b].data()[k];
      auto at = [&](double step) {
        t[b].data()[k] = x + step;
        return f(t);
      };
      const double d1 = at(h) - at(-h);
      const double d2 = at(2.0 * h) - at(-2.0 * h);
      t[b].data()[k] = x;
      g[b].data()[k] = (8.0 * d1 - d2) / (12.0 * h);
    }
  }
  return g;
}

/// |a - b| / max(|a|, |b|, floor).
inline double rel_err(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Top-k by a full stable sort on (value desc, index asc), returned ascending.
inline std::vector<std::uint64_t> top_k_full_sort(const std::vector<double>& v, Index k) {
  std::vector<std::uint64_t> order(v.size());
  std::iota(order.begin(), order.end(), std::uint64_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::uint64_t a, std::uint64_t b) { return v[a] > v[b]; });
  order.resize(static_cast<std::size_t>(std::min<Index>(k, static_cast<Index>(v.size()))));
  std::sort(order.begin(), order.end());
  return order;
}

/// Per-layer index sets of a global top-rho mask, by full sort.
inline std::vector<std::vector<std::uint64_t>> global_mask_full_sort(const SalienceScores& s, double rho) {
  std::vector<double> flat;
  std::vector<std::size_t> owner;
  std::vector<std::uint64_t> local;
  for (std::size_t l = 0; l < s.scores.size(); ++l) {
    for (Index k = 0; k < s.scores[l].size(); ++k) {
      flat.push_back(s.scores[l].data()[k]);
      owner.push_back(l);
      local.push_back(static_cast<std::uint64_t>(k));
    }
  }
  const auto n = static_cast<double>(flat.size());
  const auto k = static_cast<Index>(std::floor(rho * n + 1e-9));
  std::vector<std::vector<std::uint64_t>> out(s.scores.size());
  for (auto g : top_k_full_sort(flat, k)) out[owner[g]].push_back(local[g]);
  return out;
}

inline std::vector<std::vector<std::uint64_t>> local_mask_full_sort(const SalienceScores& s, double rho) {
  std::vector<std::vector<std::uint64_t>> out;
  for (const auto& m : s.scores) {
    std::vector<double> v(m.data(), m.data() + m.size());
    out.push_back(top_k_full_sort(v, static_cast<Index>(std::floor(rho * static_cast<double>(v.size()) + 1e-9))));
  }
  return out;
}

/// Dense reference for sparse training on a fixed mask: the adapted
/// weights are trained in full, the gradient is multiplied by the 0/1 mask
/// elementwise, and AdamW runs on every entry with its own moments. Uses
/// the same batch sequence and learning-rate schedule as the trainer.
inline ParamSet dense_masked_training(const TrainConfig& config, const Model& model, const ParamSet& theta0,
                                      const Dataset& train, const SparsityMask& mask) {
  std::vector<std::size_t> idx;
  Blocks w;
  Blocks tau;
  for (const auto& l : mask.layers) {
    idx.push_back(l.param_index);
    w.push_back(theta0[l.param_index].value);
    Matrix t = Matrix::Zero(l.rows, l.cols);
    for (auto k : l.indices) t.data()[k] = 1.0;
    tau.push_back(t);
  }
  Blocks m = blocks::zeros_like(w);
  Blocks v = blocks::zeros_like(w);
  BatchSampler sampler = training_sampler(train.size(), config.seed);
  const auto& o = config.optimizer;
  for (long t = 1; t <= config.steps; ++t) {
    const Batch batch = train.batch(sampler.next_indices(static_cast<std::size_t>(config.batch_size)));
    std::vector<Tensor<double>> params;
    for (const auto& x : w) params.push_back(Tensor<double>::parameter(x));
    Tensor<double> loss = model.loss(substitute(theta0, idx, params), batch);
    loss.backward();
    const double lr = learning_rate(config, t);
    for (std::size_t b = 0; b < w.size(); ++b) {
      const Matrix g = params[b].grad().cwiseProduct(tau[b]);
      if (o.kind == OptimizerKind::sgd) {
        w[b] -= lr * g;
        continue;
      }
      m[b] = o.beta1 * m[b] + (1.0 - o.beta1) * g;
      v[b] = o.beta2 * v[b] + (1.0 - o.beta2) * g.cwiseProduct(g);
      const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(t));
      const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(t));
      const Matrix upd = (m[b] / c1).array() / ((v[b] / c2).array().sqrt() + o.eps);
      w[b] -= lr * upd;
    }
  }
  ParamSet out = theta0;
  for (std::size_t b = 0; b < idx.size(); ++b) out[idx[b]].value = w[b];
  return out;
}

/// Random scores with deliberate ties (values drawn from a small set).
inline Blocks random_scores(const std::vector<std::pair<Index, Index>>& shapes, std::mt19937_64& rng, int levels) {
  std::uniform_int_distribution<int> u(0, levels - 1);
  Blocks out;
  for (auto [r, c] : shapes) {
    Matrix m(r, c);
    for (Index k = 0; k < m.size(); ++k) m.data()[k] = static_cast<double>(u(rng)) / levels;
    out.push_back(m);
  }
  return out;
}

}  // namespace speft::oracle
