// Copyright 2026 The SPEFT Authors
// SPDX-License-Identifier: Apache-2.0

// Training loops. run_speft follows the sparse fine-tuning algorithm line
// by line:
//
//   W_sp <- 0
//   for t = 1..T:
//     if t == 1 or (I >= 1 and t mod I == 0):
//       (theta, W_sp) <- (theta + W_sp, 0)       merge
//       s <- salience(theta)                      forked sampler
//       tau <- top-rho(s)                         global or local
//       attach W_sp on tau; reinitialize optimizer
//     sample mini-batch (x, y)
//     l <- mean loss of f_{theta + W_sp}(x) against y
//     W_sp <- Opt(W_sp, tau * dl/dW_sp, alpha_t)
//   return theta + W_sp
//
// run_baseline runs the low-rank adapter or full fine-tuning with the same
// batch order, optimizer and learning-rate schedule.

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "speft/data.hpp"
#include "speft/mask.hpp"
#include "speft/model.hpp"
#include "speft/salience.hpp"
#include "speft/sparse_adapter.hpp"

namespace speft {

enum class Method { speft, low_rank, full_ft };
std::string to_string(Method m);
Method parse_method(const std::string& s);

enum class LrSchedule { linear, constant };
std::string to_string(LrSchedule s);
LrSchedule parse_lr_schedule(const std::string& s);

struct TrainConfig {
  Method method = Method::speft;
  Metric metric = Metric::gradient;
  MaskScope scope = MaskScope::global;
  /// Density rho; required (in (0, 1]) iff method == speft.
  std::optional<double> density;
  /// Mask update interval I; I <= 0 is a static mask.
  long interval = -1;
  long steps = 100;
  int batch_size = 16;
  double lr = 1e-3;
  LrSchedule lr_schedule = LrSchedule::linear;
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;
  /// Evaluate every this many steps (0: only at the end).
  long eval_every = 0;
  /// Salience estimation; its metric and seed are overridden per refresh.
  SalienceConfig salience;
  int lora_rank = 8;
  double lora_alpha = 8.0;
  /// Regex restricting which weight matrices are adapted.
  std::string target_pattern;
  /// Record the per-step control-flow trace.
  bool trace = false;
  /// Check merge transparency at every refresh on a fixed probe batch.
  bool check_invariants = false;

  void validate() const;
  Json to_json() const;
  static TrainConfig from_json(const Json& j);
};

struct EvalMetrics {
  double loss = 0.0;
  std::optional<double> accuracy;
  std::optional<double> perplexity;
  std::size_t examples = 0;

  Json to_json() const;
};

struct StepRecord {
  long step = 0;
  double loss = 0.0;
  double lr = 0.0;
};

struct EvalRecord {
  long step = 0;
  EvalMetrics metrics;
};

struct RefreshEvent {
  long step = 0;
  Index nnz = 0;
  /// |old & new| / |old|; absent for the first mask.
  std::optional<double> overlap;
  Index entering = 0;
  Index leaving = 0;
  Index merged_nonzeros = 0;
  int salience_batches = 0;
  /// Set when check_invariants is on: outputs on the probe batch were
  /// bit-identical before and after the merge.
  std::optional<bool> merge_transparent;
  /// Set when check_invariants is on: all moments zero and step 0 after
  /// the optimizer reset.
  std::optional<bool> optimizer_reset;
};

struct TraceEvent {
  long step = 0;
  std::string kind;  // init, merge, salience, mask, attach, reinit, sample, forward, update, return
};

struct Timings {
  double salience = 0.0;
  double train = 0.0;
  double eval = 0.0;
};

struct RunLog {
  Method method = Method::speft;
  Json config = Json::object();
  std::vector<StepRecord> steps;
  std::vector<EvalRecord> evals;
  std::vector<RefreshEvent> refreshes;
  std::vector<TraceEvent> trace;
  Timings timings;
  Index trainable = 0;
  Index total_params = 0;
  Index adaptable_params = 0;
  std::optional<EvalMetrics> initial_eval;
  std::optional<EvalMetrics> final_eval;

  std::vector<long> refresh_steps() const;
  /// One JSON record per step, eval and refresh event, then a summary.
  std::string to_jsonl() const;
  /// Final metrics document.
  Json summary() const;
};

struct TrainResult {
  RunLog log;
  /// theta0 + W_sp (or merged low-rank / fully fine-tuned weights).
  ParamSet final_params;
  /// SPEFT only: the working base at the last refresh, the last mask and
  /// the delta trained on it (final_params == merged(base, delta)).
  ParamSet base;
  SparsityMask mask;
  SparseDelta delta;
  /// SPEFT only: the optimizer state at the end of training.
  OptimizerState optimizer;
  /// Low-rank only.
  std::optional<LowRankAdapter> low_rank;
};

/// Optional observer called after every optimizer step with the step
/// number, the working base and the current delta (SPEFT only).
using StepObserver = std::function<void(long step, const ParamSet& base, const SparseDelta& delta,
                                        const SparsityMask& mask, const OptimizerState& state)>;

/// Learning rate at step t (1-based): constant, or linear decay
/// lr * (1 - (t - 1) / T).
double learning_rate(const TrainConfig& config, long t);

/// Runs the sparse fine-tuning algorithm. `theta0` is never modified.
TrainResult run_speft(const TrainConfig& config, const Model& model, const ParamSet& theta0, const DatasetSplits& data,
                      const StepObserver& observer = {});

/// Low-rank adapter or full fine-tuning with the same loop skeleton.
TrainResult run_baseline(const TrainConfig& config, const Model& model, const ParamSet& theta0,
                         const DatasetSplits& data);

/// Dispatches on config.method.
TrainResult run(const TrainConfig& config, const Model& model, const ParamSet& theta0, const DatasetSplits& data,
                const StepObserver& observer = {});

/// Mean loss over the whole set, plus accuracy for classifiers and
/// perplexity for language models. Pure.
EvalMetrics evaluate(const Model& model, const ParamSet& params, const Dataset& data, std::size_t chunk = 256);

/// The training batch sequence: a pure function of (dataset size, seed,
/// batch size), shared by every method.
BatchSampler training_sampler(std::size_t n, std::uint64_t seed);
/// Sampler for the salience estimate at refresh step t. Forked from the
/// training seed, so estimation never advances the training order.
BatchSampler salience_sampler(std::size_t n, std::uint64_t seed, long t);

// ---------------------------------------------------------------------------
// Budget parity and overhead accounting
// ---------------------------------------------------------------------------

struct ParityResult {
  double density = 0.0;
  Index sparse_count = 0;
  Index low_rank_count = 0;
  MaskScope scope = MaskScope::global;
  Index difference() const { return sparse_count - low_rank_count; }
};

/// Number of mask entries a top-rho mask would hold.
Index mask_budget(const ParamSet& base, double density, MaskScope scope, const std::string& pattern = "");

/// Density whose sparse trainable count matches a rank-r adapter on the
/// same layers. Global: rho = (L + 1/2) / N gives floor(rho N) = L exactly.
/// Local: bisection on the monotone per-layer sum; the closest count wins.
ParityResult parity_density(const ParamSet& base, int rank, MaskScope scope, const std::string& pattern = "");

struct OverheadReport {
  Metric metric = Metric::gradient;
  long steps = 0;
  long interval = -1;
  long refreshes = 0;
  int estimation_batches = 0;
  int batch_size = 0;
  long estimation_steps = 0;
  double gradient_evaluation_multiplier = 1.0;
  double estimation_gradient_evaluations = 0.0;
  double training_gradient_evaluations = 0.0;
  /// estimation / (estimation + training), in gradient evaluations.
  double estimation_fraction = 0.0;
  StorageReport storage;

  Json to_json() const;
};

/// Estimation cost against training cost, counted in gradient evaluations
/// (one per mini-batch step; second-order metrics count double), and the
/// adapter index storage against the dense model bytes.
OverheadReport overhead_report(const TrainConfig& config, const ParamSet& base, DType dtype = DType::f64);

}  // namespace speft
