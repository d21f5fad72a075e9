// Copyright 2026 The SPEFT Authors
// SPDX-License-Identifier: Apache-2.0

// Model zoo: an MLP (regression or classification) and a pre-norm
// transformer with encoder-classifier and causal-LM heads. Forward passes
// are templated on the scalar so the same code runs on double, float and
// Dual<double>.

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "speft/autodiff.hpp"
#include "speft/batch.hpp"
#include "speft/container.hpp"
#include "speft/tensor.hpp"

namespace speft {

enum class Architecture { mlp, transformer_encoder, transformer_lm };
enum class Activation { relu, gelu, tanh };
enum class MlpTask { regression, classification };

std::string to_string(Architecture a);
std::string to_string(Activation a);
std::string to_string(MlpTask t);
Architecture parse_architecture(const std::string& s);
Activation parse_activation(const std::string& s);
MlpTask parse_mlp_task(const std::string& s);

struct ModelConfig {
  Architecture architecture = Architecture::mlp;
  Activation activation = Activation::gelu;
  // MLP: layer widths including input and output.
  std::vector<int> widths;
  MlpTask task = MlpTask::regression;
  // Transformer.
  int d_model = 32;
  int n_heads = 4;
  int n_layers = 1;
  int d_ff = 64;
  int seq_len = 16;
  int vocab = 256;
  int n_classes = 2;
  std::uint64_t seed = 0;

  /// Throws ConfigError on an invalid dimension combination.
  void validate() const;
  Json to_json() const;
  static ModelConfig from_json(const Json& j);
};

enum class ParamRole { weight, bias, embedding, norm };
std::string to_string(ParamRole r);
ParamRole parse_param_role(const std::string& s);

struct Param {
  std::string name;
  Shape shape;
  Matrix value;
  ParamRole role = ParamRole::weight;
  bool frozen = false;

  /// Only 2-D weight matrices are adaptable.
  bool adaptable() const { return role == ParamRole::weight && shape.size() == 2; }
  Index numel() const { return value.size(); }
};

/// Ordered, uniquely named parameter collection.
class ParamSet {
 public:
  void add(Param p);

  std::size_t size() const { return params_.size(); }
  const Param& operator[](std::size_t i) const { return params_[i]; }
  Param& operator[](std::size_t i) { return params_[i]; }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  std::optional<std::size_t> find(const std::string& name) const;
  std::size_t index_of(const std::string& name) const;

  /// Indices of adaptable parameters, optionally filtered by a regex on names.
  std::vector<std::size_t> adaptable_indices(const std::string& pattern = "") const;

  Index total_count() const;
  Index adaptable_count(const std::string& pattern = "") const;

  Blocks values() const;
  /// Copies of the listed parameters' values.
  Blocks values(const std::vector<std::size_t>& indices) const;

  friend bool bit_identical(const ParamSet& a, const ParamSet& b);

 private:
  std::vector<Param> params_;
};

bool bit_identical(const ParamSet& a, const ParamSet& b);
bool bit_identical(const Matrix& a, const Matrix& b);

/// Forward-pass variants. The linearized mode is the SynFlow chain view:
/// weights enter as given (callers pass |theta|), biases are dropped,
/// activations, normalization and softmax become identity, and the input is
/// a single all-ones row.
struct ForwardMode {
  bool linearized = false;
};

class Model {
 public:
  explicit Model(ModelConfig config);

  const ModelConfig& config() const { return config_; }

  /// Deterministic initialization: normal(0, 0.02) matrices and embeddings,
  /// zero biases, unit/zero layer-norm gain/shift.
  ParamSet init_params(std::uint64_t seed) const;

  /// Predictions (regression) or logits (classification / LM; for the LM
  /// one row per position).
  template <typename S>
  Tensor<S> outputs(const std::vector<Tensor<S>>& params, const Batch& batch) const;

  /// Mini-batch mean loss: MSE for regression, cross-entropy otherwise.
  template <typename S>
  Tensor<S> loss(const std::vector<Tensor<S>>& params, const Batch& batch) const;

  /// SynFlow objective R = 1^T (prod_l |theta_l|) 1 through the linearized
  /// network. `abs_params` must already hold absolute values.
  template <typename S>
  Tensor<S> synflow_objective(const std::vector<Tensor<S>>& abs_params) const;

  bool is_classifier() const;
  bool is_language_model() const { return config_.architecture == Architecture::transformer_lm; }

 private:
  template <typename S>
  Tensor<S> mlp_forward(const std::vector<Tensor<S>>& p, const Batch& batch, ForwardMode mode) const;
  template <typename S>
  Tensor<S> transformer_forward(const std::vector<Tensor<S>>& p, const Batch& batch, ForwardMode mode) const;

  ModelConfig config_;
};

/// Builds the model and its deterministic initial parameters.
std::pair<Model, ParamSet> build_model(const ModelConfig& config, std::uint64_t seed);
std::pair<Model, ParamSet> build_model(const ModelConfig& config);

/// Wraps every parameter as a constant tensor of scalar S.
template <typename S>
std::vector<Tensor<S>> constant_tensors(const ParamSet& params) {
  std::vector<Tensor<S>> out;
  out.reserve(params.size());
  for (const auto& p : params) out.emplace_back(p.shape, p.value.template cast<S>());
  return out;
}

/// Full parameter list in which the parameters at `indices` are replaced by
/// `replacements` (same order) and every other parameter is a constant.
template <typename S>
std::vector<Tensor<S>> substitute(const ParamSet& params, const std::vector<std::size_t>& indices,
                                  const std::vector<Tensor<S>>& replacements) {
  if (indices.size() != replacements.size()) throw ShapeError("substitute: index/replacement count mismatch");
  std::vector<Tensor<S>> out;
  out.reserve(params.size());
  std::size_t next = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (next < indices.size() && indices[next] == i) {
      const auto& r = replacements[next++];
      if (r.shape() != params[i].shape) {
        throw ShapeError("substitute: '" + params[i].name + "' expects " + shape_string(params[i].shape) + ", got " +
                         shape_string(r.shape()));
      }
      out.push_back(r);
    } else {
      out.emplace_back(params[i].shape, params[i].value.template cast<S>());
    }
  }
  if (next != indices.size()) throw ShapeError("substitute: indices must be sorted and in range");
  return out;
}

// ---------------------------------------------------------------------------
// Low-rank adapter baseline: theta = theta0 + (alpha / r) * B * A.
// ---------------------------------------------------------------------------

struct LowRankLayer {
  std::size_t param_index = 0;
  std::string name;
  Matrix a;  // r x d2, normal init
  Matrix b;  // d1 x r, zero init
};

class LowRankAdapter {
 public:
  LowRankAdapter() = default;
  LowRankAdapter(int rank, double alpha, std::vector<LowRankLayer> layers)
      : rank_(rank), alpha_(alpha), layers_(std::move(layers)) {}

  int rank() const { return rank_; }
  double alpha() const { return alpha_; }
  double scaling() const { return alpha_ / rank_; }
  const std::vector<LowRankLayer>& layers() const { return layers_; }
  std::vector<LowRankLayer>& layers() { return layers_; }

  /// sum over adapted layers of r * (d1 + d2).
  Index trainable_count() const;

  /// Trainable blocks in the order [A_0, B_0, A_1, B_1, ...].
  Blocks trainable() const;
  void set_trainable(const Blocks& blocks);

  /// Full parameter list with adapted weights theta0 + scaling * B * A,
  /// built from `ab` tensors ordered like trainable().
  template <typename S>
  std::vector<Tensor<S>> effective(const ParamSet& base, const std::vector<Tensor<S>>& ab) const {
    std::vector<std::size_t> idx;
    std::vector<Tensor<S>> adapted;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& layer = layers_[l];
      idx.push_back(layer.param_index);
      Tensor<S> w0(base[layer.param_index].shape, base[layer.param_index].value.template cast<S>());
      Tensor<S> delta = scale(matmul(ab[2 * l + 1], ab[2 * l]), S(scaling()));
      adapted.push_back(add(w0, delta));
    }
    return substitute(base, idx, adapted);
  }

  /// Dense merged weights theta0 + scaling * B * A.
  ParamSet merged(const ParamSet& base) const;

 private:
  int rank_ = 8;
  double alpha_ = 8.0;
  std::vector<LowRankLayer> layers_;
};

/// Attaches rank-r adapters to every adaptable layer matching `pattern`.
/// Throws ConfigError if r < 1 or r > min(d1, d2) for some layer.
LowRankAdapter apply_low_rank_adapter(const ParamSet& base, int rank, double alpha, std::uint64_t seed,
                                      const std::string& pattern = "");

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

/// Content hash of names, shapes and values; identifies a base model.
std::string fingerprint(const ParamSet& params);

Container checkpoint_container(const ModelConfig& config, const ParamSet& params, DType dtype = DType::f64);
void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config, const ParamSet& params,
                     DType dtype = DType::f64);
std::pair<ModelConfig, ParamSet> load_checkpoint(const std::filesystem::path& path);
std::pair<ModelConfig, ParamSet> checkpoint_from_container(const Container& c);

// ---------------------------------------------------------------------------
// Forward implementations
// ---------------------------------------------------------------------------

namespace detail {

template <typename S>
Tensor<S> activate(const Tensor<S>& x, Activation a, ForwardMode mode) {
  if (mode.linearized) return x;
  switch (a) {
    case Activation::relu: return relu(x);
    case Activation::gelu: return gelu(x);
    case Activation::tanh: return speft::tanh(x);
  }
  return x;
}

template <typename S>
Tensor<S> affine(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b, ForwardMode mode) {
  Tensor<S> y = matmul(x, w);
  return mode.linearized ? y : add(y, b);
}

}  // namespace detail

template <typename S>
Tensor<S> Model::mlp_forward(const std::vector<Tensor<S>>& p, const Batch& batch, ForwardMode mode) const {
  const auto& w = config_.widths;
  Tensor<S> h;
  if (mode.linearized) {
    h = Tensor<S>(MatrixX<S>::Constant(1, w.front(), S(1)));
  } else {
    if (batch.empty()) throw ShapeError("forward: empty batch");
    MatrixX<S> x(static_cast<Index>(batch.size()), w.front());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (static_cast<int>(batch[i]->features.size()) != w.front()) {
        throw ShapeError("forward: example has " + std::to_string(batch[i]->features.size()) +
                         " features, model expects " + std::to_string(w.front()));
      }
      for (int j = 0; j < w.front(); ++j) x(static_cast<Index>(i), j) = S(batch[i]->features[j]);
    }
    h = Tensor<S>(std::move(x));
  }
  const std::size_t layers = w.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    h = detail::affine(h, p[2 * l], p[2 * l + 1], mode);
    if (l + 1 < layers) h = detail::activate(h, config_.activation, mode);
  }
  return h;
}

template <typename S>
Tensor<S> Model::transformer_forward(const std::vector<Tensor<S>>& p, const Batch& batch, ForwardMode mode) const {
  const int d = config_.d_model;
  const int heads = config_.n_heads;
  const int dh = d / heads;
  const bool causal = config_.architecture == Architecture::transformer_lm;
  // Parameter layout, see init_params: tok_emb, pos_emb, then per block
  // 16 entries, then ln_f.g, ln_f.b, head.w, head.b.
  std::size_t k = 2;
  Index seq = 1;
  Index nseq = 1;
  Tensor<S> x;
  if (mode.linearized) {
    x = Tensor<S>(MatrixX<S>::Constant(1, d, S(1)));
  } else {
    if (batch.empty()) throw ShapeError("forward: empty batch");
    seq = static_cast<Index>(batch.front()->tokens.size());
    nseq = static_cast<Index>(batch.size());
    if (seq == 0 || seq > config_.seq_len) {
      throw ShapeError("forward: sequence length " + std::to_string(seq) + " outside 1.." +
                       std::to_string(config_.seq_len));
    }
    std::vector<int> ids;
    std::vector<int> pos;
    ids.reserve(static_cast<std::size_t>(seq * nseq));
    for (const auto* ex : batch) {
      if (static_cast<Index>(ex->tokens.size()) != seq) throw ShapeError("forward: ragged sequence lengths in batch");
      for (Index t = 0; t < seq; ++t) {
        ids.push_back(ex->tokens[static_cast<std::size_t>(t)]);
        pos.push_back(static_cast<int>(t));
      }
    }
    x = add(embedding(p[0], ids), embedding(p[1], pos));
  }
  const S inv_sqrt_dh = S(1.0 / std::sqrt(static_cast<double>(dh)));
  for (int layer = 0; layer < config_.n_layers; ++layer, k += 16) {
    const auto& ln1g = p[k + 0];
    const auto& ln1b = p[k + 1];
    Tensor<S> h = mode.linearized ? x : layer_norm(x, ln1g, ln1b);
    Tensor<S> q = detail::affine(h, p[k + 2], p[k + 3], mode);
    Tensor<S> kk = detail::affine(h, p[k + 4], p[k + 5], mode);
    Tensor<S> v = detail::affine(h, p[k + 6], p[k + 7], mode);
    std::vector<Tensor<S>> seqs;
    seqs.reserve(static_cast<std::size_t>(nseq));
    for (Index s = 0; s < nseq; ++s) {
      std::vector<Tensor<S>> head_out;
      head_out.reserve(static_cast<std::size_t>(heads));
      for (int hd = 0; hd < heads; ++hd) {
        Tensor<S> qh = slice(q, s * seq, seq, hd * dh, dh);
        Tensor<S> kh = slice(kk, s * seq, seq, hd * dh, dh);
        Tensor<S> vh = slice(v, s * seq, seq, hd * dh, dh);
        Tensor<S> scores = scale(matmul(qh, transpose(kh)), inv_sqrt_dh);
        Tensor<S> probs = mode.linearized ? scores : softmax_rows(scores, causal);
        head_out.push_back(matmul(probs, vh));
      }
      seqs.push_back(heads == 1 ? head_out.front() : concat_cols(head_out));
    }
    Tensor<S> attn = nseq == 1 ? seqs.front() : concat_rows(seqs);
    x = add(x, detail::affine(attn, p[k + 8], p[k + 9], mode));
    Tensor<S> h2 = mode.linearized ? x : layer_norm(x, p[k + 10], p[k + 11]);
    Tensor<S> m = detail::activate(detail::affine(h2, p[k + 12], p[k + 13], mode), config_.activation, mode);
    x = add(x, detail::affine(m, p[k + 14], p[k + 15], mode));
  }
  Tensor<S> hf = mode.linearized ? x : layer_norm(x, p[k], p[k + 1]);
  const auto& head_w = p[k + 2];
  const auto& head_b = p[k + 3];
  if (causal || mode.linearized) return detail::affine(hf, head_w, head_b, mode);
  // Mean-pool each sequence, then classify.
  MatrixX<S> pool = MatrixX<S>::Zero(nseq, nseq * seq);
  for (Index s = 0; s < nseq; ++s) pool.block(s, s * seq, 1, seq).setConstant(S(1.0 / static_cast<double>(seq)));
  Tensor<S> pooled = matmul(Tensor<S>(std::move(pool)), hf);
  return detail::affine(pooled, head_w, head_b, mode);
}

template <typename S>
Tensor<S> Model::outputs(const std::vector<Tensor<S>>& params, const Batch& batch) const {
  if (config_.architecture == Architecture::mlp) return mlp_forward(params, batch, {});
  return transformer_forward(params, batch, {});
}

template <typename S>
Tensor<S> Model::loss(const std::vector<Tensor<S>>& params, const Batch& batch) const {
  if (batch.empty()) throw ShapeError("loss: empty batch");
  Tensor<S> out = outputs(params, batch);
  if (config_.architecture == Architecture::mlp && config_.task == MlpTask::regression) {
    MatrixX<S> y(out.rows(), out.cols());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (static_cast<Index>(batch[i]->targets.size()) != out.cols()) {
        throw ShapeError("loss: target width " + std::to_string(batch[i]->targets.size()) + " vs output width " +
                         std::to_string(out.cols()));
      }
      for (Index j = 0; j < out.cols(); ++j) y(static_cast<Index>(i), j) = S(batch[i]->targets[j]);
    }
    return mse(out, Tensor<S>(std::move(y)));
  }
  std::vector<int> targets;
  if (is_language_model()) {
    for (const auto* ex : batch) targets.insert(targets.end(), ex->next_tokens.begin(), ex->next_tokens.end());
  } else {
    for (const auto* ex : batch) targets.push_back(ex->label);
  }
  return cross_entropy(out, targets);
}

template <typename S>
Tensor<S> Model::synflow_objective(const std::vector<Tensor<S>>& abs_params) const {
  const Batch none;
  Tensor<S> out = config_.architecture == Architecture::mlp ? mlp_forward(abs_params, none, {true})
                                                            : transformer_forward(abs_params, none, {true});
  return sum(out);
}

}  // namespace speft
