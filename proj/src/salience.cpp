// Copyright 2026 The SPEFT Authors
// SPDX-License-Identifier: Apache-2.0

#include "speft/salience.hpp"

#include <random>

namespace speft {

namespace {

struct MetricName {
  Metric metric;
  const char* name;
};

constexpr MetricName kMetricNames[] = {
    {Metric::magnitude, "magnitude"}, {Metric::gradient, "gradient"},   {Metric::snip, "snip"},
    {Metric::force, "force"},         {Metric::taylor_fo, "taylor_fo"}, {Metric::synflow, "synflow"},
    {Metric::grasp, "grasp"},         {Metric::fisher, "fisher"},       {Metric::random, "random"},
};

}  // namespace

std::string to_string(Metric m) {
  for (const auto& e : kMetricNames) {
    if (e.metric == m) return e.name;
  }
  return "?";
}

Metric parse_metric(const std::string& name) {
  for (const auto& e : kMetricNames) {
    if (name == e.name) return e.metric;
  }
  if (name == "taylor-fo" || name == "taylorfo") return Metric::taylor_fo;
  std::string valid;
  for (const auto& e : kMetricNames) valid += std::string(valid.empty() ? "" : ", ") + e.name;
  throw ConfigError("unknown metric '" + name + "'; valid metrics: " + valid);
}

const std::vector<Metric>& standard_metrics() {
  static const std::vector<Metric> all{Metric::magnitude, Metric::gradient, Metric::snip,  Metric::force,
                                       Metric::taylor_fo, Metric::synflow,  Metric::grasp, Metric::fisher};
  return all;
}

bool is_data_free(Metric m) { return m == Metric::magnitude || m == Metric::synflow || m == Metric::random; }
bool is_second_order(Metric m) { return m == Metric::grasp || m == Metric::fisher; }
bool is_signed(Metric m) { return m == Metric::force || m == Metric::grasp; }

double gradient_evaluation_multiplier(Metric m) {
  switch (m) {
    case Metric::magnitude:
    case Metric::random: return 0.0;
    case Metric::grasp:
    case Metric::fisher: return 2.0;
    default: return 1.0;
  }
}

Json SalienceConfig::to_json() const {
  return {{"metric", to_string(metric)},
          {"batches", batches},
          {"batch_size", batch_size},
          {"seed", seed},
          {"gradient_mode", gradient_mode == GradientMode::abs ? "abs" : "raw"},
          {"reduction", reduction == Reduction::average_then_transform ? "average_then_transform"
                                                                       : "transform_then_average"},
          {"fisher", fisher == FisherGranularity::per_batch ? "per_batch" : "per_sample"},
          {"hvp", hvp == HvpMethod::finite_difference ? "finite_difference" : "exact"},
          {"hvp_delta", hvp_delta},
          {"target_pattern", target_pattern}};
}

SalienceConfig SalienceConfig::from_json(const Json& j) {
  SalienceConfig c;
  c.metric = parse_metric(j.value("metric", std::string("gradient")));
  c.batches = j.value("batches", c.batches);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  const auto gm = j.value("gradient_mode", std::string("abs"));
  if (gm != "abs" && gm != "raw") throw ConfigError("gradient_mode must be abs or raw, got '" + gm + "'");
  c.gradient_mode = gm == "abs" ? GradientMode::abs : GradientMode::raw;
  const auto red = j.value("reduction", std::string("average_then_transform"));
  if (red != "average_then_transform" && red != "transform_then_average") {
    throw ConfigError("reduction must be average_then_transform or transform_then_average");
  }
  c.reduction = red == "average_then_transform" ? Reduction::average_then_transform : Reduction::transform_then_average;
  const auto fi = j.value("fisher", std::string("per_batch"));
  if (fi != "per_batch" && fi != "per_sample") throw ConfigError("fisher must be per_batch or per_sample");
  c.fisher = fi == "per_batch" ? FisherGranularity::per_batch : FisherGranularity::per_sample;
  const auto hv = j.value("hvp", std::string("finite_difference"));
  if (hv != "finite_difference" && hv != "exact") throw ConfigError("hvp must be finite_difference or exact");
  c.hvp = hv == "exact" ? HvpMethod::exact : HvpMethod::finite_difference;
  c.hvp_delta = j.value("hvp_delta", c.hvp_delta);
  c.target_pattern = j.value("target_pattern", std::string());
  if (c.batches < 1 && !is_data_free(c.metric)) throw ConfigError("salience: batches must be at least 1");
  if (c.batch_size < 1) throw ConfigError("salience: batch_size must be at least 1");
  return c;
}

Index SalienceScores::count() const {
  Index n = 0;
  for (const auto& s : scores) n += s.size();
  return n;
}

// ---------------------------------------------------------------------------

namespace scores {

Blocks magnitude(const Blocks& theta) {
  Blocks out;
  for (const auto& t : theta) out.push_back(t.cwiseAbs());
  return out;
}

Blocks gradient(const Blocks& gbar, GradientMode mode) {
  if (mode == GradientMode::raw) return gbar;
  return magnitude(gbar);
}

Blocks snip(const Blocks& theta, const Blocks& gbar) {
  blocks::check_conforming(theta, gbar, "snip");
  Blocks out;
  for (std::size_t i = 0; i < theta.size(); ++i) out.push_back(gbar[i].cwiseProduct(theta[i]).cwiseAbs());
  return out;
}

Blocks force(const Blocks& theta, const Blocks& gbar) {
  blocks::check_conforming(theta, gbar, "force");
  Blocks out;
  for (std::size_t i = 0; i < theta.size(); ++i) out.push_back(-gbar[i].cwiseProduct(theta[i]));
  return out;
}

Blocks taylor_fo(const Blocks& theta, const Blocks& gbar) {
  blocks::check_conforming(theta, gbar, "taylor_fo");
  Blocks out;
  for (std::size_t i = 0; i < theta.size(); ++i) out.push_back(gbar[i].cwiseProduct(theta[i]).array().square().matrix());
  return out;
}

Blocks grasp(const Blocks& theta, const Blocks& hg) {
  blocks::check_conforming(theta, hg, "grasp");
  Blocks out;
  for (std::size_t i = 0; i < theta.size(); ++i) out.push_back(-hg[i].cwiseProduct(theta[i]));
  return out;
}

Blocks fisher(const std::vector<Blocks>& batch_grads) {
  if (batch_grads.empty()) throw Error("fisher: no gradients");
  Blocks out = blocks::zeros_like(batch_grads.front());
  for (const auto& g : batch_grads) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += g[i].array().square().matrix();
  }
  for (auto& o : out) o /= static_cast<double>(batch_grads.size());
  return out;
}

}  // namespace scores

// ---------------------------------------------------------------------------

Blocks WeightObjective::batch_gradient(const Blocks& weights, const Batch& batch) const {
  return gradient([&](const auto& w) { return loss(w, batch); }, weights);
}

Blocks WeightObjective::mean_gradient(const Blocks& weights, const std::vector<Batch>& batches) const {
  if (batches.empty()) throw Error("mean_gradient: no batches");
  Blocks acc = blocks::zeros_like(weights);
  for (const auto& b : batches) {
    Blocks g = batch_gradient(weights, b);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
  }
  for (auto& a : acc) a /= static_cast<double>(batches.size());
  return acc;
}

namespace {

std::vector<Batch> draw_batches(BatchStream* stream, int count, Metric metric) {
  if (stream == nullptr) throw ConfigError("metric '" + to_string(metric) + "' requires data");
  std::vector<Batch> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    auto b = stream->next();
    if (!b) {
      throw Error("salience: data stream exhausted after " + std::to_string(i) + " of " + std::to_string(count) +
                  " batches");
    }
    if (b->empty()) throw Error("salience: empty batch in data stream");
    out.push_back(std::move(*b));
  }
  return out;
}

Blocks elementwise_mean(const std::vector<Blocks>& items) {
  Blocks acc = blocks::zeros_like(items.front());
  for (const auto& it : items) {
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += it[i];
  }
  for (auto& a : acc) a /= static_cast<double>(items.size());
  return acc;
}

Blocks first_order(Metric metric, const Blocks& theta, const Blocks& g, GradientMode mode) {
  switch (metric) {
    case Metric::gradient: return scores::gradient(g, mode);
    case Metric::snip: return scores::snip(theta, g);
    case Metric::force: return scores::force(theta, g);
    case Metric::taylor_fo: return scores::taylor_fo(theta, g);
    default: throw Error("first_order: not a first-order gradient metric");
  }
}

Blocks synflow_scores(const Model& model, const ParamSet& params, const std::vector<std::size_t>& targets) {
  ParamSet abs_params = params;
  for (std::size_t i = 0; i < abs_params.size(); ++i) abs_params[i].value = abs_params[i].value.cwiseAbs();
  const Blocks abs_w = abs_params.values(targets);
  Blocks g = gradient(
      [&](const auto& w) { return model.synflow_objective(substitute(abs_params, targets, w)); }, abs_w);
  // dR/dtheta * theta = (dR/d|theta| * sign(theta)) * theta = dR/d|theta| * |theta|.
  Blocks out;
  for (std::size_t i = 0; i < g.size(); ++i) out.push_back(g[i].cwiseProduct(abs_w[i]));
  return out;
}

}  // namespace

SalienceScores compute_salience(const Model& model, const ParamSet& params, BatchStream* stream,
                                const SalienceConfig& config) {
  SalienceScores out;
  out.metric = config.metric;
  out.seed = config.seed;
  out.reduction = config.reduction;
  out.gradient_mode = config.gradient_mode;
  out.param_indices = params.adaptable_indices(config.target_pattern);
  if (out.param_indices.empty()) throw ConfigError("salience: no adaptable weights match the target pattern");
  for (auto i : out.param_indices) out.names.push_back(params[i].name);

  WeightObjective objective(model, params, out.param_indices);
  const Blocks theta = objective.weights();

  switch (config.metric) {
    case Metric::magnitude:
      out.scores = scores::magnitude(theta);
      break;
    case Metric::synflow:
      out.scores = synflow_scores(model, params, out.param_indices);
      break;
    case Metric::random: {
      std::mt19937_64 rng(mix_seed(config.seed, 0xAA));
      std::uniform_real_distribution<double> u(0.0, 1.0);
      out.scores = blocks::zeros_like(theta);
      for (auto& s : out.scores) {
        for (Index k = 0; k < s.size(); ++k) s.data()[k] = u(rng);
      }
      break;
    }
    case Metric::gradient:
    case Metric::snip:
    case Metric::force:
    case Metric::taylor_fo: {
      if (config.batches < 1) throw ConfigError("salience: batches must be at least 1");
      auto batches = draw_batches(stream, config.batches, config.metric);
      std::vector<Blocks> grads;
      grads.reserve(batches.size());
      for (const auto& b : batches) grads.push_back(objective.batch_gradient(theta, b));
      if (config.reduction == Reduction::average_then_transform) {
        out.scores = first_order(config.metric, theta, elementwise_mean(grads), config.gradient_mode);
      } else {
        std::vector<Blocks> per;
        per.reserve(grads.size());
        for (const auto& g : grads) per.push_back(first_order(config.metric, theta, g, config.gradient_mode));
        out.scores = elementwise_mean(per);
      }
      out.batches_used = static_cast<int>(batches.size());
      out.batch_size = static_cast<int>(batches.front().size());
      break;
    }
    case Metric::fisher: {
      if (config.batches < 1) throw ConfigError("salience: batches must be at least 1");
      auto batches = draw_batches(stream, config.batches, config.metric);
      std::vector<Blocks> grads;
      for (const auto& b : batches) {
        if (config.fisher == FisherGranularity::per_batch) {
          grads.push_back(objective.batch_gradient(theta, b));
        } else {
          for (const auto* ex : b) grads.push_back(objective.batch_gradient(theta, Batch{ex}));
        }
      }
      out.scores = scores::fisher(grads);
      out.batches_used = static_cast<int>(batches.size());
      out.batch_size = static_cast<int>(batches.front().size());
      break;
    }
    case Metric::grasp: {
      if (config.batches < 1) throw ConfigError("salience: batches must be at least 1");
      auto batches = draw_batches(stream, config.batches, config.metric);
      const Blocks gbar = objective.mean_gradient(theta, batches);
      Blocks hg;
      if (config.hvp == HvpMethod::finite_difference) {
        hg = hvp_from_gradients([&](const Blocks& w) { return objective.mean_gradient(w, batches); }, theta, gbar,
                                {config.hvp_delta});
      } else {
        std::vector<Blocks> per;
        for (const auto& b : batches) {
          per.push_back(hessian_vector_product_exact([&](const auto& w) { return objective.loss(w, b); }, theta, gbar));
        }
        hg = elementwise_mean(per);
      }
      out.scores = scores::grasp(theta, hg);
      out.batches_used = static_cast<int>(batches.size());
      out.batch_size = static_cast<int>(batches.front().size());
      break;
    }
  }
  for (std::size_t i = 0; i < out.scores.size(); ++i) {
    if (!out.scores[i].allFinite()) throw NumericError("salience: non-finite scores for '" + out.names[i] + "'");
  }
  return out;
}

SalienceScores compute_salience(const Model& model, const ParamSet& params, const Dataset* data,
                                const SalienceConfig& config) {
  if (is_data_free(config.metric)) return compute_salience(model, params, static_cast<BatchStream*>(nullptr), config);
  if (data == nullptr || data->empty()) throw ConfigError("metric '" + to_string(config.metric) + "' requires data");
  SamplerStream stream(*data, BatchSampler(data->size(), config.seed), static_cast<std::size_t>(config.batch_size));
  return compute_salience(model, params, &stream, config);
}

// ---------------------------------------------------------------------------

Container scores_container(const SalienceScores& s, const ParamSet& params) {
  Container c;
  for (std::size_t i = 0; i < s.scores.size(); ++i) {
    c.blobs.push_back(matrix_blob(s.names[i], s.scores[i], params[s.param_indices[i]].shape));
  }
  c.meta = {{"kind", "scores"},
            {"metric", to_string(s.metric)},
            {"batches", s.batches_used},
            {"batch_size", s.batch_size},
            {"seed", s.seed},
            {"reduction", s.reduction == Reduction::average_then_transform ? "average_then_transform"
                                                                           : "transform_then_average"},
            {"gradient_mode", s.gradient_mode == GradientMode::abs ? "abs" : "raw"},
            {"param_indices", s.param_indices},
            {"base_fingerprint", fingerprint(params)}};
  return c;
}

SalienceScores scores_from_container(const Container& c) {
  if (c.meta.value("kind", std::string()) != "scores") throw IoError("container is not a scores file");
  SalienceScores s;
  try {
    s.metric = parse_metric(c.meta.at("metric").get<std::string>());
    s.batches_used = c.meta.at("batches").get<int>();
    s.batch_size = c.meta.value("batch_size", 0);
    s.seed = c.meta.at("seed").get<std::uint64_t>();
    s.reduction = c.meta.value("reduction", std::string()) == "transform_then_average" ? Reduction::transform_then_average
                                                                                      : Reduction::average_then_transform;
    s.gradient_mode = c.meta.value("gradient_mode", std::string("abs")) == "raw" ? GradientMode::raw : GradientMode::abs;
    s.param_indices = c.meta.at("param_indices").get<std::vector<std::size_t>>();
  } catch (const Json::exception& e) {
    throw IoError(std::string("malformed scores header: ") + e.what());
  }
  for (const auto& b : c.blobs) {
    s.names.push_back(b.name);
    s.scores.push_back(blob_matrix(b));
  }
  if (s.names.size() != s.param_indices.size()) throw IoError("scores file: layer count mismatch");
  return s;
}

void save_scores(const std::filesystem::path& path, const SalienceScores& s, const ParamSet& params) {
  save_container(path, scores_container(s, params));
}

SalienceScores load_scores(const std::filesystem::path& path) { return scores_from_container(load_container(path)); }

}  // namespace speft
