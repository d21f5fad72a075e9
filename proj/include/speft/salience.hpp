// Copyright 2026 The SPEFT Authors
// SPDX-License-Identifier: Apache-2.0

// Weight salience metrics. Data-aware metrics are estimated from a stream
// of mini-batches; scores are produced only for adaptable weight matrices.
//
//   magnitude  |theta|
//   gradient   |g|            (g = batch-averaged dl/dtheta; raw g optional)
//   snip       |g * theta|
//   force      -(g * theta)   (signed)
//   taylor_fo  (g * theta)^2
//   synflow    dR/dtheta * theta, R = 1^T (prod_l |theta_l|) 1
//   grasp      -(H g) * theta (signed)
//   fisher     mean over batches of g_b^2
//
// `random` is a control: uniform scores, used for random-mask baselines.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "speft/autodiff.hpp"
#include "speft/container.hpp"
#include "speft/data.hpp"
#include "speft/model.hpp"

namespace speft {

enum class Metric { magnitude, gradient, snip, force, taylor_fo, synflow, grasp, fisher, random };

std::string to_string(Metric m);
/// Throws ConfigError listing the valid names.
Metric parse_metric(const std::string& name);
const std::vector<Metric>& standard_metrics();
bool is_data_free(Metric m);
bool is_second_order(Metric m);
/// Signed metrics rank on signed values.
bool is_signed(Metric m);

enum class GradientMode { abs, raw };
/// For snip/force/taylor_fo/gradient: transform the averaged gradient, or
/// average the per-batch transforms.
enum class Reduction { average_then_transform, transform_then_average };
enum class FisherGranularity { per_batch, per_sample };
enum class HvpMethod { finite_difference, exact };

struct SalienceConfig {
  Metric metric = Metric::gradient;
  int batches = 64;
  int batch_size = 16;
  std::uint64_t seed = 0;
  GradientMode gradient_mode = GradientMode::abs;
  Reduction reduction = Reduction::average_then_transform;
  FisherGranularity fisher = FisherGranularity::per_batch;
  HvpMethod hvp = HvpMethod::finite_difference;
  double hvp_delta = 1e-4;
  /// Regex over parameter names restricting which weights get scores.
  std::string target_pattern;

  Json to_json() const;
  static SalienceConfig from_json(const Json& j);
};

struct SalienceScores {
  Metric metric = Metric::magnitude;
  std::vector<std::string> names;
  std::vector<std::size_t> param_indices;
  Blocks scores;
  int batches_used = 0;
  int batch_size = 0;
  std::uint64_t seed = 0;
  Reduction reduction = Reduction::average_then_transform;
  GradientMode gradient_mode = GradientMode::abs;

  Index count() const;
};

// Elementwise formulas on an averaged gradient, exposed for reuse and tests.
namespace scores {
Blocks magnitude(const Blocks& theta);
Blocks gradient(const Blocks& gbar, GradientMode mode = GradientMode::abs);
Blocks snip(const Blocks& theta, const Blocks& gbar);
Blocks force(const Blocks& theta, const Blocks& gbar);
Blocks taylor_fo(const Blocks& theta, const Blocks& gbar);
Blocks grasp(const Blocks& theta, const Blocks& hg);
/// Mean of squared per-batch gradients.
Blocks fisher(const std::vector<Blocks>& batch_grads);
}  // namespace scores

/// Loss over the adaptable weights of a model for a fixed parameter set.
class WeightObjective {
 public:
  WeightObjective(const Model& model, const ParamSet& params, std::vector<std::size_t> targets)
      : model_(&model), params_(&params), targets_(std::move(targets)) {}

  const std::vector<std::size_t>& targets() const { return targets_; }
  Blocks weights() const { return params_->values(targets_); }

  template <typename S>
  Tensor<S> loss(const std::vector<Tensor<S>>& weights, const Batch& batch) const {
    return model_->loss(substitute(*params_, targets_, weights), batch);
  }

  /// Mean gradient over the given batches at `weights`.
  Blocks mean_gradient(const Blocks& weights, const std::vector<Batch>& batches) const;
  Blocks batch_gradient(const Blocks& weights, const Batch& batch) const;

 private:
  const Model* model_;
  const ParamSet* params_;
  std::vector<std::size_t> targets_;
};

/// Computes the configured metric. Data-aware metrics draw exactly
/// `config.batches` batches from `stream`; data-free metrics ignore it.
/// Throws Error if the stream runs out early.
SalienceScores compute_salience(const Model& model, const ParamSet& params, BatchStream* stream,
                                const SalienceConfig& config);

/// Convenience: draws estimation batches from a sampler over `data`.
SalienceScores compute_salience(const Model& model, const ParamSet& params, const Dataset* data,
                                const SalienceConfig& config);

/// Number of gradient evaluations the estimator performs per batch, under
/// the accounting where second-order metrics cost twice a first-order one.
double gradient_evaluation_multiplier(Metric m);

Container scores_container(const SalienceScores& s, const ParamSet& params);
SalienceScores scores_from_container(const Container& c);
void save_scores(const std::filesystem::path& path, const SalienceScores& s, const ParamSet& params);
SalienceScores load_scores(const std::filesystem::path& path);

}  // namespace speft
