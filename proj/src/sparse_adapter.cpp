// Copyright 2026 The SPEFT Authors
// SPDX-License-Identifier: Apache-2.0

#include "speft/sparse_adapter.hpp"

#include <cmath>

namespace speft {

Index SparseDelta::stored() const {
  Index n = 0;
  for (const auto& l : layers_) n += l.values.size();
  return n;
}

Index SparseDelta::nonzeros() const {
  Index n = 0;
  for (const auto& l : layers_) n += (l.values.array() != 0.0).count();
  return n;
}

void SparseDelta::zero() {
  for (auto& l : layers_) l.values.setZero();
}

bool SparseDelta::is_zero() const { return nonzeros() == 0; }

SparseDelta attach(const SparsityMask& mask, const ParamSet& base) {
  std::vector<DeltaLayer> layers;
  for (const auto& lm : mask.layers) {
    auto idx = base.find(lm.name);
    if (!idx) throw ConfigError("attach: mask references unknown layer '" + lm.name + "'");
    const Param& p = base[*idx];
    if (!p.adaptable() || p.frozen) throw ConfigError("attach: layer '" + lm.name + "' is not adaptable");
    if (p.value.rows() != lm.rows || p.value.cols() != lm.cols) {
      throw ConfigError("attach: layer '" + lm.name + "' is " + shape_string(p.shape) + " but the mask expects " +
                        std::to_string(lm.rows) + "x" + std::to_string(lm.cols));
    }
    DeltaLayer d;
    d.name = lm.name;
    d.param_index = *idx;
    d.rows = lm.rows;
    d.cols = lm.cols;
    d.indices = lm.indices;
    d.values = Vector::Zero(static_cast<Index>(lm.indices.size()));
    layers.push_back(std::move(d));
  }
  return SparseDelta(std::move(layers));
}

Vector gather(const Matrix& dense, const std::vector<std::uint64_t>& indices) {
  Vector out(static_cast<Index>(indices.size()));
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= static_cast<std::uint64_t>(dense.size())) throw ShapeError("gather: index out of range");
    out[static_cast<Index>(i)] = dense.data()[indices[i]];
  }
  return out;
}

Matrix scatter(const Vector& values, const std::vector<std::uint64_t>& indices, Index rows, Index cols) {
  if (values.size() != static_cast<Index>(indices.size())) throw ShapeError("scatter: values/indices length mismatch");
  Matrix out = Matrix::Zero(rows, cols);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= static_cast<std::uint64_t>(out.size())) throw ShapeError("scatter: index out of range");
    out.data()[indices[i]] = values[static_cast<Index>(i)];
  }
  return out;
}

Vector masked_gradient(const Matrix& dense_grad, const DeltaLayer& layer) {
  if (dense_grad.rows() != layer.rows || dense_grad.cols() != layer.cols) {
    throw ShapeError("masked_gradient: gradient is " + std::to_string(dense_grad.rows()) + "x" +
                     std::to_string(dense_grad.cols()) + " but layer '" + layer.name + "' is " +
                     std::to_string(layer.rows) + "x" + std::to_string(layer.cols));
  }
  return gather(dense_grad, layer.indices);
}

Matrix effective_weight(const Matrix& base, const DeltaLayer& layer) {
  Matrix w = base;
  for (std::size_t i = 0; i < layer.indices.size(); ++i) {
    const double v = layer.values[static_cast<Index>(i)];
    if (v != 0.0) w.data()[layer.indices[i]] += v;
  }
  return w;
}

// ---------------------------------------------------------------------------

std::string to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adamw"; }

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adamw") return OptimizerKind::adamw;
  throw ConfigError("unknown optimizer '" + s + "' (expected sgd or adamw)");
}

void OptimizerState::reinitialize(const std::vector<Index>& sizes) {
  step_ = 0;
  m_.clear();
  v_.clear();
  for (Index n : sizes) {
    m_.push_back(Vector::Zero(n));
    v_.push_back(Vector::Zero(n));
  }
}

bool OptimizerState::is_reset() const {
  if (step_ != 0) return false;
  for (const auto& m : m_) {
    if ((m.array() != 0.0).any()) return false;
  }
  for (const auto& v : v_) {
    if ((v.array() != 0.0).any()) return false;
  }
  return true;
}

void OptimizerState::apply(std::vector<std::span<double>> params, const std::vector<std::span<const double>>& grads,
                           double lr) {
  if (params.size() != grads.size()) throw ShapeError("optimizer: parameter/gradient block count mismatch");
  if (config_.kind == OptimizerKind::adamw && m_.size() != params.size()) {
    std::vector<Index> sizes;
    for (const auto& p : params) sizes.push_back(static_cast<Index>(p.size()));
    reinitialize(sizes);
  }
  ++step_;
  if (config_.kind == OptimizerKind::sgd) {
    for (std::size_t b = 0; b < params.size(); ++b) {
      if (params[b].size() != grads[b].size()) throw ShapeError("optimizer: block length mismatch");
      for (std::size_t i = 0; i < params[b].size(); ++i) params[b][i] -= lr * grads[b][i];
    }
    return;
  }
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  const double decay = 1.0 - lr * config_.weight_decay;
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto& m = m_[b];
    auto& v = v_[b];
    if (params[b].size() != grads[b].size() || static_cast<Index>(params[b].size()) != m.size()) {
      throw ShapeError("optimizer: block length mismatch");
    }
    for (std::size_t i = 0; i < params[b].size(); ++i) {
      const auto k = static_cast<Index>(i);
      const double g = grads[b][i];
      m[k] = b1 * m[k] + (1.0 - b1) * g;
      v[k] = b2 * v[k] + (1.0 - b2) * g * g;
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      double p = params[b][i];
      if (config_.weight_decay != 0.0) p *= decay;
      params[b][i] = p - lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
}

void reinitialize(OptimizerState& state, const SparseDelta& delta) {
  std::vector<Index> sizes;
  for (const auto& l : delta.layers()) sizes.push_back(l.values.size());
  state.reinitialize(sizes);
}

void step(SparseDelta& delta, const std::vector<Vector>& sparse_grads, OptimizerState& state, double lr) {
  auto& layers = delta.layers();
  if (sparse_grads.size() != layers.size()) throw ShapeError("step: gradient list does not match delta layers");
  std::vector<std::span<double>> params;
  std::vector<std::span<const double>> grads;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& g = sparse_grads[l];
    if (g.size() != layers[l].values.size()) {
      throw ShapeError("step: layer '" + layers[l].name + "' has " + std::to_string(layers[l].values.size()) +
                       " values but " + std::to_string(g.size()) + " gradients");
    }
    for (Index i = 0; i < g.size(); ++i) {
      if (!std::isfinite(g[i])) {
        throw NumericError("step: non-finite gradient in layer '" + layers[l].name + "' at coordinate " +
                           std::to_string(layers[l].indices[static_cast<std::size_t>(i)]));
      }
    }
    params.emplace_back(layers[l].values.data(), static_cast<std::size_t>(layers[l].values.size()));
    grads.emplace_back(g.data(), static_cast<std::size_t>(g.size()));
  }
  state.apply(std::move(params), grads, lr);
  for (const auto& l : layers) {
    if (!l.values.allFinite()) throw NumericError("step: non-finite values in layer '" + l.name + "' after update");
  }
}

void merge_and_reset(SparseDelta& delta, ParamSet& base) {
  for (auto& l : delta.layers()) base[l.param_index].value = effective_weight(base[l.param_index].value, l);
  delta.zero();
}

ParamSet merged(const ParamSet& base, const SparseDelta& delta) {
  ParamSet out = base;
  for (const auto& l : delta.layers()) out[l.param_index].value = effective_weight(base[l.param_index].value, l);
  return out;
}

StorageReport storage_report(const SparsityMask& mask, const ParamSet& base, DType dtype) {
  StorageReport r;
  r.nnz = mask.nnz();
  r.model_params = base.total_count();
  r.index_bytes = static_cast<std::size_t>(r.nnz) * sizeof(std::uint64_t);
  r.value_bytes = static_cast<std::size_t>(r.nnz) * dtype_size(dtype);
  r.dense_model_bytes = static_cast<std::size_t>(r.model_params) * dtype_size(dtype);
  r.index_fraction = r.dense_model_bytes ? static_cast<double>(r.index_bytes) / static_cast<double>(r.dense_model_bytes)
                                         : 0.0;
  return r;
}

// ---------------------------------------------------------------------------

void export_merged(const std::filesystem::path& path, const ModelConfig& config, const ParamSet& base,
                   const SparseDelta& delta, DType dtype) {
  save_checkpoint(path, config, merged(base, delta), dtype);
}

Container adapter_container(const SparsityMask& mask, const SparseDelta& delta, const ParamSet& base, DType dtype) {
  if (mask.layers.size() != delta.layers().size()) throw ConfigError("adapter: mask and delta layer counts differ");
  Container c = mask_container(mask);
  for (std::size_t i = 0; i < mask.layers.size(); ++i) {
    const auto& d = delta.layers()[i];
    if (d.name != mask.layers[i].name || d.indices != mask.layers[i].indices) {
      throw ConfigError("adapter: delta layer '" + d.name + "' does not match its mask");
    }
    c.blobs.push_back(vector_blob(d.name + ".values", d.values, dtype));
  }
  c.meta["kind"] = "adapter";
  c.meta["base_fingerprint"] = fingerprint(base);
  c.meta["dtype"] = dtype_name(dtype);
  return c;
}

void export_adapter(const std::filesystem::path& path, const SparsityMask& mask, const SparseDelta& delta,
                    const ParamSet& base, DType dtype) {
  save_container(path, adapter_container(mask, delta, base, dtype));
}

AdapterFile adapter_from_container(const Container& c) {
  if (c.meta.value("kind", std::string()) != "adapter") throw IoError("container is not an adapter file");
  AdapterFile a;
  a.mask = mask_from_container(c);
  a.base_fingerprint = c.meta.value("base_fingerprint", std::string());
  std::vector<DeltaLayer> layers;
  for (const auto& lm : a.mask.layers) {
    DeltaLayer d;
    d.name = lm.name;
    d.param_index = lm.param_index;
    d.rows = lm.rows;
    d.cols = lm.cols;
    d.indices = lm.indices;
    d.values = blob_vector(c.blob(lm.name + ".values"));
    if (d.values.size() != static_cast<Index>(d.indices.size())) {
      throw IoError("adapter layer '" + d.name + "': values/indices length mismatch");
    }
    layers.push_back(std::move(d));
  }
  a.delta = SparseDelta(std::move(layers));
  return a;
}

AdapterFile load_adapter(const std::filesystem::path& path) {
  try {
    return adapter_from_container(load_container(path));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

ParamSet apply_adapter(const ParamSet& base, const AdapterFile& adapter) {
  const auto fp = fingerprint(base);
  if (adapter.base_fingerprint != fp) {
    throw ConfigError("adapter was trained on base " + adapter.base_fingerprint + " but this checkpoint is " + fp);
  }
  SparseDelta d = attach(adapter.mask, base);
  for (std::size_t i = 0; i < d.layers().size(); ++i) d.layers()[i].values = adapter.delta.layers()[i].values;
  return merged(base, d);
}

}  // namespace speft
