// Copyright 2026 The SPEFT Authors
// SPDX-License-Identifier: Apache-2.0

#include "speft/model.hpp"

#include <cstring>
#include <random>
#include <regex>
#include <unordered_set>

namespace speft {

std::string to_string(Architecture a) {
  switch (a) {
    case Architecture::mlp: return "mlp";
    case Architecture::transformer_encoder: return "transformer-encoder";
    case Architecture::transformer_lm: return "transformer-lm";
  }
  return "?";
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::gelu: return "gelu";
    case Activation::tanh: return "tanh";
  }
  return "?";
}

std::string to_string(MlpTask t) { return t == MlpTask::regression ? "regression" : "classification"; }

Architecture parse_architecture(const std::string& s) {
  if (s == "mlp") return Architecture::mlp;
  if (s == "transformer-encoder" || s == "transformer_encoder") return Architecture::transformer_encoder;
  if (s == "transformer-lm" || s == "transformer_lm") return Architecture::transformer_lm;
  throw ConfigError("unknown architecture '" + s + "' (expected mlp, transformer-encoder, transformer-lm)");
}

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "gelu") return Activation::gelu;
  if (s == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + s + "' (expected relu, gelu, tanh)");
}

MlpTask parse_mlp_task(const std::string& s) {
  if (s == "regression") return MlpTask::regression;
  if (s == "classification") return MlpTask::classification;
  throw ConfigError("unknown task '" + s + "' (expected regression, classification)");
}

std::string to_string(ParamRole r) {
  switch (r) {
    case ParamRole::weight: return "weight";
    case ParamRole::bias: return "bias";
    case ParamRole::embedding: return "embedding";
    case ParamRole::norm: return "norm";
  }
  return "?";
}

ParamRole parse_param_role(const std::string& s) {
  if (s == "weight") return ParamRole::weight;
  if (s == "bias") return ParamRole::bias;
  if (s == "embedding") return ParamRole::embedding;
  if (s == "norm") return ParamRole::norm;
  throw IoError("unknown parameter role '" + s + "'");
}

void ModelConfig::validate() const {
  auto positive = [](int v, const char* what) {
    if (v <= 0) throw ConfigError(std::string("model: ") + what + " must be positive, got " + std::to_string(v));
  };
  if (architecture == Architecture::mlp) {
    if (widths.size() < 2) throw ConfigError("model: mlp needs at least input and output widths");
    for (int w : widths) positive(w, "every mlp width");
    if (task == MlpTask::classification && widths.back() < 2) {
      throw ConfigError("model: classification needs at least 2 outputs");
    }
    return;
  }
  positive(d_model, "d_model");
  positive(n_heads, "n_heads");
  positive(n_layers, "n_layers");
  positive(d_ff, "d_ff");
  positive(seq_len, "seq_len");
  positive(vocab, "vocab");
  if (d_model % n_heads != 0) {
    throw ConfigError("model: n_heads (" + std::to_string(n_heads) + ") must divide d_model (" +
                      std::to_string(d_model) + ")");
  }
  if (vocab > 256) throw ConfigError("model: byte-level vocabulary is at most 256");
  if (architecture == Architecture::transformer_encoder && n_classes < 2) {
    throw ConfigError("model: encoder classifier needs at least 2 classes");
  }
}

Json ModelConfig::to_json() const {
  Json j{{"architecture", to_string(architecture)}, {"activation", to_string(activation)}, {"seed", seed}};
  if (architecture == Architecture::mlp) {
    j["widths"] = widths;
    j["task"] = to_string(task);
  } else {
    j["d_model"] = d_model;
    j["n_heads"] = n_heads;
    j["n_layers"] = n_layers;
    j["d_ff"] = d_ff;
    j["seq_len"] = seq_len;
    j["vocab"] = vocab;
    if (architecture == Architecture::transformer_encoder) j["n_classes"] = n_classes;
  }
  return j;
}

ModelConfig ModelConfig::from_json(const Json& j) {
  ModelConfig c;
  try {
    c.architecture = parse_architecture(j.value("architecture", std::string("mlp")));
    c.activation = parse_activation(j.value("activation", std::string("gelu")));
    c.seed = j.value("seed", std::uint64_t{0});
    if (c.architecture == Architecture::mlp) {
      c.widths = j.at("widths").get<std::vector<int>>();
      c.task = parse_mlp_task(j.value("task", std::string("regression")));
    } else {
      c.d_model = j.value("d_model", c.d_model);
      c.n_heads = j.value("n_heads", c.n_heads);
      c.n_layers = j.value("n_layers", c.n_layers);
      c.d_ff = j.value("d_ff", c.d_ff);
      c.seq_len = j.value("seq_len", c.seq_len);
      c.vocab = j.value("vocab", c.vocab);
      c.n_classes = j.value("n_classes", c.n_classes);
    }
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

void ParamSet::add(Param p) {
  if (find(p.name)) throw ConfigError("duplicate parameter name '" + p.name + "'");
  auto [r, c] = detail::matrix_dims(p.shape);
  if (p.value.rows() != r || p.value.cols() != c) {
    throw ShapeError("parameter '" + p.name + "' value does not match shape " + shape_string(p.shape));
  }
  params_.push_back(std::move(p));
}

std::optional<std::size_t> ParamSet::find(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return i;
  }
  return std::nullopt;
}

std::size_t ParamSet::index_of(const std::string& name) const {
  if (auto i = find(name)) return *i;
  throw ConfigError("unknown parameter '" + name + "'");
}

std::vector<std::size_t> ParamSet::adaptable_indices(const std::string& pattern) const {
  std::vector<std::size_t> out;
  std::optional<std::regex> re;
  if (!pattern.empty()) re.emplace(pattern);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].adaptable() || params_[i].frozen) continue;
    if (re && !std::regex_search(params_[i].name, *re)) continue;
    out.push_back(i);
  }
  return out;
}

Index ParamSet::total_count() const {
  Index n = 0;
  for (const auto& p : params_) n += p.numel();
  return n;
}

Index ParamSet::adaptable_count(const std::string& pattern) const {
  Index n = 0;
  for (auto i : adaptable_indices(pattern)) n += params_[i].numel();
  return n;
}

Blocks ParamSet::values() const {
  Blocks out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.value);
  return out;
}

Blocks ParamSet::values(const std::vector<std::size_t>& indices) const {
  Blocks out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(params_.at(i).value);
  return out;
}

bool bit_identical(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), static_cast<std::size_t>(a.size()) * sizeof(double)) == 0;
}

bool bit_identical(const ParamSet& a, const ParamSet& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || a[i].shape != b[i].shape || !bit_identical(a[i].value, b[i].value)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------

Model::Model(ModelConfig config) : config_(std::move(config)) { config_.validate(); }

bool Model::is_classifier() const {
  if (config_.architecture == Architecture::mlp) return config_.task == MlpTask::classification;
  return true;
}

namespace {

class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  Matrix normal(Index rows, Index cols, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    Matrix m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng_);
    return m;
  }

 private:
  std::mt19937_64 rng_;
};

constexpr double kInitStd = 0.02;

void add_linear(ParamSet& ps, Initializer& init, const std::string& prefix, Index in, Index out) {
  ps.add({prefix + ".w", {in, out}, init.normal(in, out, kInitStd), ParamRole::weight});
  ps.add({prefix + ".b", {out}, Matrix::Zero(1, out), ParamRole::bias});
}

void add_norm(ParamSet& ps, const std::string& prefix, Index d) {
  ps.add({prefix + ".g", {d}, Matrix::Ones(1, d), ParamRole::norm});
  ps.add({prefix + ".b", {d}, Matrix::Zero(1, d), ParamRole::norm});
}

}  // namespace

ParamSet Model::init_params(std::uint64_t seed) const {
  ParamSet ps;
  Initializer init(seed);
  if (config_.architecture == Architecture::mlp) {
    for (std::size_t l = 0; l + 1 < config_.widths.size(); ++l) {
      add_linear(ps, init, "fc" + std::to_string(l), config_.widths[l], config_.widths[l + 1]);
    }
    return ps;
  }
  const Index d = config_.d_model;
  ps.add({"tok_emb", {config_.vocab, d}, init.normal(config_.vocab, d, kInitStd), ParamRole::embedding});
  ps.add({"pos_emb", {config_.seq_len, d}, init.normal(config_.seq_len, d, kInitStd), ParamRole::embedding});
  for (int l = 0; l < config_.n_layers; ++l) {
    const std::string b = "block" + std::to_string(l);
    add_norm(ps, b + ".ln1", d);
    add_linear(ps, init, b + ".attn.q", d, d);
    add_linear(ps, init, b + ".attn.k", d, d);
    add_linear(ps, init, b + ".attn.v", d, d);
    add_linear(ps, init, b + ".attn.o", d, d);
    add_norm(ps, b + ".ln2", d);
    add_linear(ps, init, b + ".mlp.fc1", d, config_.d_ff);
    add_linear(ps, init, b + ".mlp.fc2", config_.d_ff, d);
  }
  add_norm(ps, "ln_f", d);
  const Index out = config_.architecture == Architecture::transformer_lm ? config_.vocab : config_.n_classes;
  add_linear(ps, init, "head", d, out);
  return ps;
}

std::pair<Model, ParamSet> build_model(const ModelConfig& config, std::uint64_t seed) {
  Model m(config);
  ParamSet ps = m.init_params(seed);
  return {std::move(m), std::move(ps)};
}

std::pair<Model, ParamSet> build_model(const ModelConfig& config) { return build_model(config, config.seed); }

// ---------------------------------------------------------------------------

Index LowRankAdapter::trainable_count() const {
  Index n = 0;
  for (const auto& l : layers_) n += l.a.size() + l.b.size();
  return n;
}

Blocks LowRankAdapter::trainable() const {
  Blocks out;
  out.reserve(2 * layers_.size());
  for (const auto& l : layers_) {
    out.push_back(l.a);
    out.push_back(l.b);
  }
  return out;
}

void LowRankAdapter::set_trainable(const Blocks& blocks) {
  if (blocks.size() != 2 * layers_.size()) throw ShapeError("low-rank adapter: expected A/B pairs");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    layers_[l].a = blocks[2 * l];
    layers_[l].b = blocks[2 * l + 1];
  }
}

ParamSet LowRankAdapter::merged(const ParamSet& base) const {
  ParamSet out = base;
  for (const auto& l : layers_) out[l.param_index].value += scaling() * (l.b * l.a);
  return out;
}

LowRankAdapter apply_low_rank_adapter(const ParamSet& base, int rank, double alpha, std::uint64_t seed,
                                      const std::string& pattern) {
  if (rank < 1) throw ConfigError("low-rank adapter: rank must be at least 1, got " + std::to_string(rank));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(rank)));
  std::vector<LowRankLayer> layers;
  for (auto i : base.adaptable_indices(pattern)) {
    const auto& p = base[i];
    const Index d1 = p.shape[0];
    const Index d2 = p.shape[1];
    if (rank > std::min(d1, d2)) {
      throw ConfigError("low-rank adapter: rank " + std::to_string(rank) + " exceeds min dimension of '" + p.name +
                        "' " + shape_string(p.shape));
    }
    LowRankLayer layer{i, p.name, Matrix(rank, d2), Matrix::Zero(d1, rank)};
    for (Index k = 0; k < layer.a.size(); ++k) layer.a.data()[k] = dist(rng);
    layers.push_back(std::move(layer));
  }
  return LowRankAdapter(rank, alpha, std::move(layers));
}

// ---------------------------------------------------------------------------

std::string fingerprint(const ParamSet& params) {
  std::uint64_t h = 14695981039346656037ULL;
  for (const auto& p : params) {
    h = fnv1a64(p.name.data(), p.name.size(), h);
    h = fnv1a64(p.shape.data(), p.shape.size() * sizeof(Index), h);
    h = fnv1a64(p.value.data(), static_cast<std::size_t>(p.value.size()) * sizeof(double), h);
  }
  return hex64(h);
}

Container checkpoint_container(const ModelConfig& config, const ParamSet& params, DType dtype) {
  Container c;
  Json roles = Json::object();
  for (const auto& p : params) {
    c.blobs.push_back(matrix_blob(p.name, p.value, p.shape, dtype));
    roles[p.name] = {{"role", to_string(p.role)}, {"frozen", p.frozen}};
  }
  c.meta = {{"kind", "checkpoint"},
            {"model", config.to_json()},
            {"seed", config.seed},
            {"dtype", dtype_name(dtype)},
            {"params", roles}};
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config, const ParamSet& params,
                     DType dtype) {
  save_container(path, checkpoint_container(config, params, dtype));
}

std::pair<ModelConfig, ParamSet> checkpoint_from_container(const Container& c) {
  if (c.meta.value("kind", std::string()) != "checkpoint") throw IoError("container is not a checkpoint");
  ModelConfig config = ModelConfig::from_json(c.meta.at("model"));
  const auto& roles = c.meta.at("params");
  ParamSet ps;
  for (const auto& b : c.blobs) {
    const auto& r = roles.at(b.name);
    Param p{b.name, b.shape, blob_matrix(b), parse_param_role(r.at("role").get<std::string>()),
            r.value("frozen", false)};
    ps.add(std::move(p));
  }
  return {config, std::move(ps)};
}

std::pair<ModelConfig, ParamSet> load_checkpoint(const std::filesystem::path& path) {
  Container c = load_container(path);
  try {
    return checkpoint_from_container(c);
  } catch (const Json::exception& e) {
    throw IoError(path.string() + ": malformed checkpoint header: " + e.what());
  }
}

}  // namespace speft
