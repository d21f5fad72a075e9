// Copyright 2026 The SPEFT Authors
// SPDX-License-Identifier: Apache-2.0

// Sparse reparameterization theta = theta0 + W_sp. W_sp stores values only
// at the coordinates of its governing mask; the forward pass scatters them
// into a dense copy of each adapted weight, and gradients are gathered back
// at the same coordinates.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "speft/mask.hpp"
#include "speft/model.hpp"

namespace speft {

struct DeltaLayer {
  std::string name;
  std::size_t param_index = 0;
  Index rows = 0;
  Index cols = 0;
  std::vector<std::uint64_t> indices;
  Vector values;
};

class SparseDelta {
 public:
  SparseDelta() = default;
  explicit SparseDelta(std::vector<DeltaLayer> layers) : layers_(std::move(layers)) {}

  const std::vector<DeltaLayer>& layers() const { return layers_; }
  std::vector<DeltaLayer>& layers() { return layers_; }
  bool empty() const { return layers_.empty(); }

  /// Number of stored values (the trainable-parameter count).
  Index stored() const;
  /// Number of stored values that are non-zero.
  Index nonzeros() const;
  void zero();
  bool is_zero() const;

 private:
  std::vector<DeltaLayer> layers_;
};

/// Zero-initialized delta on the mask's support. Throws ConfigError if the
/// mask names a parameter that is missing, not adaptable, or reshaped.
SparseDelta attach(const SparsityMask& mask, const ParamSet& base);

/// Values of `dense` at `indices` (row-major flat).
Vector gather(const Matrix& dense, const std::vector<std::uint64_t>& indices);
/// Dense rows x cols matrix, zero except `values` at `indices`.
Matrix scatter(const Vector& values, const std::vector<std::uint64_t>& indices, Index rows, Index cols);

/// Gradient restricted to the mask support: tau * dl/dW_sp, stored sparse.
Vector masked_gradient(const Matrix& dense_grad, const DeltaLayer& layer);

/// theta + W_sp for each adapted layer. Only stored non-zero values are
/// added, every other entry is copied from theta unchanged.
Matrix effective_weight(const Matrix& base, const DeltaLayer& layer);

enum class OptimizerKind { sgd, adamw };
std::string to_string(OptimizerKind k);
OptimizerKind parse_optimizer(const std::string& s);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adamw;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Per-entry moment buffers aligned with a list of parameter blocks.
class OptimizerState {
 public:
  OptimizerState() = default;
  explicit OptimizerState(OptimizerConfig config) : config_(config) {}

  const OptimizerConfig& config() const { return config_; }
  long step_count() const { return step_; }
  const std::vector<Vector>& first_moments() const { return m_; }
  const std::vector<Vector>& second_moments() const { return v_; }

  /// Zero moments sized for blocks of the given lengths; step counter to 0.
  void reinitialize(const std::vector<Index>& sizes);
  bool is_reset() const;

  /// One update of every block: SGD p -= lr * g, or AdamW with bias
  /// correction and decoupled weight decay p *= 1 - lr * wd.
  void apply(std::vector<std::span<double>> params, const std::vector<std::span<const double>>& grads, double lr);

 private:
  OptimizerConfig config_;
  long step_ = 0;
  std::vector<Vector> m_;
  std::vector<Vector> v_;
};

/// Moment buffers sized for the delta's layers.
void reinitialize(OptimizerState& state, const SparseDelta& delta);

/// Optimizer step on the stored values only. Throws NumericError naming
/// the layer and coordinate of any non-finite gradient.
void step(SparseDelta& delta, const std::vector<Vector>& sparse_grads, OptimizerState& state, double lr);

/// Adds the delta into `base` at its coordinates, then zeroes the delta.
void merge_and_reset(SparseDelta& delta, ParamSet& base);

/// theta + W_sp as a standalone parameter set.
ParamSet merged(const ParamSet& base, const SparseDelta& delta);

/// Index-storage accounting for a mask over a model.
struct StorageReport {
  Index nnz = 0;
  Index model_params = 0;
  std::size_t index_bytes = 0;  // 8 bytes per stored index
  std::size_t value_bytes = 0;
  std::size_t dense_model_bytes = 0;
  double index_fraction = 0.0;  // index_bytes / dense_model_bytes
};

StorageReport storage_report(const SparsityMask& mask, const ParamSet& base, DType dtype = DType::f64);

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

/// Writes theta0 + W_sp as a model checkpoint.
void export_merged(const std::filesystem::path& path, const ModelConfig& config, const ParamSet& base,
                   const SparseDelta& delta, DType dtype = DType::f64);

/// Adapter file: the mask container plus one aligned values array per layer
/// and the base checkpoint fingerprint.
Container adapter_container(const SparsityMask& mask, const SparseDelta& delta, const ParamSet& base,
                            DType dtype = DType::f64);
void export_adapter(const std::filesystem::path& path, const SparsityMask& mask, const SparseDelta& delta,
                    const ParamSet& base, DType dtype = DType::f64);

struct AdapterFile {
  SparsityMask mask;
  SparseDelta delta;
  std::string base_fingerprint;
};

AdapterFile adapter_from_container(const Container& c);
AdapterFile load_adapter(const std::filesystem::path& path);
/// Merges an adapter into `base`; throws ConfigError on a fingerprint mismatch.
ParamSet apply_adapter(const ParamSet& base, const AdapterFile& adapter);

}  // namespace speft
