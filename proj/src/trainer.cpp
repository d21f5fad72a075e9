// Copyright 2026 The SPEFT Authors
// SPDX-License-Identifier: Apache-2.0

#include "speft/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <sstream>

namespace speft {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

constexpr std::uint64_t kTrainSalt = 0x7472616eULL;
constexpr std::uint64_t kSalienceSalt = 0x73616c69ULL;
constexpr std::uint64_t kProbeSalt = 0x70726f62ULL;

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::speft: return "speft";
    case Method::low_rank: return "low_rank";
    case Method::full_ft: return "full_ft";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  if (s == "speft") return Method::speft;
  if (s == "low_rank" || s == "lora") return Method::low_rank;
  if (s == "full_ft") return Method::full_ft;
  throw ConfigError("unknown method '" + s + "' (expected speft, low_rank or full_ft)");
}

std::string to_string(LrSchedule s) { return s == LrSchedule::linear ? "linear" : "constant"; }

LrSchedule parse_lr_schedule(const std::string& s) {
  if (s == "linear") return LrSchedule::linear;
  if (s == "constant") return LrSchedule::constant;
  throw ConfigError("unknown lr schedule '" + s + "' (expected linear or constant)");
}

void TrainConfig::validate() const {
  if (steps < 1) throw ConfigError("steps must be >= 1, got " + std::to_string(steps));
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1, got " + std::to_string(batch_size));
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be positive");
  if (method == Method::speft) {
    if (!density) throw ConfigError("density is required for method speft");
    if (!(*density > 0.0 && *density <= 1.0)) throw ConfigError("density must be in (0, 1]");
  } else if (density) {
    throw ConfigError("density only applies to method speft");
  }
  if (method == Method::low_rank && lora_rank < 1) throw ConfigError("lora_rank must be >= 1");
  if (eval_every < 0) throw ConfigError("eval_every must be >= 0");
}

Json TrainConfig::to_json() const {
  Json j = {{"method", to_string(method)},
            {"metric", to_string(metric)},
            {"scope", to_string(scope)},
            {"interval", interval},
            {"steps", steps},
            {"batch_size", batch_size},
            {"lr", lr},
            {"lr_schedule", to_string(lr_schedule)},
            {"optimizer",
             {{"kind", to_string(optimizer.kind)},
              {"beta1", optimizer.beta1},
              {"beta2", optimizer.beta2},
              {"eps", optimizer.eps},
              {"weight_decay", optimizer.weight_decay}}},
            {"seed", seed},
            {"eval_every", eval_every},
            {"salience", salience.to_json()},
            {"lora_rank", lora_rank},
            {"lora_alpha", lora_alpha},
            {"target_pattern", target_pattern}};
  if (density) j["density"] = *density;
  return j;
}

TrainConfig TrainConfig::from_json(const Json& j) {
  static const std::set<std::string> known{
      "method",   "metric",     "scope",     "density",    "interval",       "steps",
      "batch_size", "lr",       "lr_schedule", "optimizer", "seed",          "eval_every",
      "salience", "lora_rank",  "lora_alpha", "target_pattern", "trace",     "check_invariants"};
  if (!j.is_object()) throw ConfigError("train config must be a table");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError("train config: unknown key '" + key + "'");
  }
  TrainConfig c;
  try {
    if (j.contains("method")) c.method = parse_method(j.at("method").get<std::string>());
    if (j.contains("metric")) c.metric = parse_metric(j.at("metric").get<std::string>());
    if (j.contains("scope")) c.scope = parse_scope(j.at("scope").get<std::string>());
    if (j.contains("density") && !j.at("density").is_null()) c.density = j.at("density").get<double>();
    c.interval = j.value("interval", c.interval);
    c.steps = j.value("steps", c.steps);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr = j.value("lr", c.lr);
    if (j.contains("lr_schedule")) c.lr_schedule = parse_lr_schedule(j.at("lr_schedule").get<std::string>());
    if (j.contains("optimizer")) {
      const auto& o = j.at("optimizer");
      if (o.is_string()) {
        c.optimizer.kind = parse_optimizer(o.get<std::string>());
      } else {
        if (o.contains("kind")) c.optimizer.kind = parse_optimizer(o.at("kind").get<std::string>());
        c.optimizer.beta1 = o.value("beta1", c.optimizer.beta1);
        c.optimizer.beta2 = o.value("beta2", c.optimizer.beta2);
        c.optimizer.eps = o.value("eps", c.optimizer.eps);
        c.optimizer.weight_decay = o.value("weight_decay", c.optimizer.weight_decay);
      }
    }
    c.seed = j.value("seed", c.seed);
    c.eval_every = j.value("eval_every", c.eval_every);
    if (j.contains("salience")) c.salience = SalienceConfig::from_json(j.at("salience"));
    c.lora_rank = j.value("lora_rank", c.lora_rank);
    c.lora_alpha = j.value("lora_alpha", c.lora_alpha);
    c.target_pattern = j.value("target_pattern", c.target_pattern);
    c.trace = j.value("trace", c.trace);
    c.check_invariants = j.value("check_invariants", c.check_invariants);
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  return c;
}

Json EvalMetrics::to_json() const {
  Json j = {{"loss", loss}, {"examples", examples}};
  if (accuracy) j["accuracy"] = *accuracy;
  if (perplexity) j["perplexity"] = *perplexity;
  return j;
}

std::vector<long> RunLog::refresh_steps() const {
  std::vector<long> out;
  for (const auto& r : refreshes) out.push_back(r.step);
  return out;
}

Json RunLog::summary() const {
  Json j = {{"type", "summary"},
            {"method", to_string(method)},
            {"config", config},
            {"trainable", trainable},
            {"total_params", total_params},
            {"adaptable_params", adaptable_params},
            {"refresh_steps", refresh_steps()},
            {"timings", {{"salience", timings.salience}, {"train", timings.train}, {"eval", timings.eval}}},
            {"steps", steps.size()}};
  if (!steps.empty()) j["final_train_loss"] = steps.back().loss;
  if (initial_eval) j["initial_eval"] = initial_eval->to_json();
  if (final_eval) j["final_eval"] = final_eval->to_json();
  return j;
}

std::string RunLog::to_jsonl() const {
  std::ostringstream out;
  for (const auto& r : refreshes) {
    Json j = {{"type", "refresh"},
              {"step", r.step},
              {"nnz", r.nnz},
              {"entering", r.entering},
              {"leaving", r.leaving},
              {"merged_nonzeros", r.merged_nonzeros},
              {"salience_batches", r.salience_batches}};
    j["overlap"] = r.overlap ? Json(*r.overlap) : Json(nullptr);
    if (r.merge_transparent) j["merge_transparent"] = *r.merge_transparent;
    if (r.optimizer_reset) j["optimizer_reset"] = *r.optimizer_reset;
    out << j.dump() << '\n';
  }
  for (const auto& s : steps) out << Json{{"type", "step"}, {"step", s.step}, {"loss", s.loss}, {"lr", s.lr}}.dump() << '\n';
  for (const auto& e : evals) {
    Json j = e.metrics.to_json();
    j["type"] = "eval";
    j["step"] = e.step;
    out << j.dump() << '\n';
  }
  for (const auto& t : trace) out << Json{{"type", "trace"}, {"step", t.step}, {"event", t.kind}}.dump() << '\n';
  out << summary().dump() << '\n';
  return out.str();
}

double learning_rate(const TrainConfig& config, long t) {
  if (config.lr_schedule == LrSchedule::constant) return config.lr;
  return config.lr * (1.0 - static_cast<double>(t - 1) / static_cast<double>(config.steps));
}

BatchSampler training_sampler(std::size_t n, std::uint64_t seed) { return BatchSampler(n, mix_seed(seed, kTrainSalt)); }

BatchSampler salience_sampler(std::size_t n, std::uint64_t seed, long t) {
  return training_sampler(n, seed).fork(mix_seed(kSalienceSalt, static_cast<std::uint64_t>(t)));
}

EvalMetrics evaluate(const Model& model, const ParamSet& params, const Dataset& data, std::size_t chunk) {
  if (data.empty()) throw ConfigError("evaluate: empty evaluation set");
  chunk = std::max<std::size_t>(chunk, 1);
  const auto tensors = constant_tensors<double>(params);
  const bool classify = model.is_classifier() || model.is_language_model();
  double loss_sum = 0.0;
  std::size_t rows = 0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    Batch batch;
    for (std::size_t i = start; i < std::min(data.size(), start + chunk); ++i) batch.push_back(&data.examples[i]);
    const Tensor<double> out = model.outputs(tensors, batch);
    const double l = model.loss(tensors, batch).item();
    const auto n = static_cast<std::size_t>(classify ? out.rows() : static_cast<Index>(batch.size()));
    loss_sum += l * static_cast<double>(n);
    rows += n;
    if (classify) {
      std::vector<int> targets;
      for (const auto* ex : batch) {
        if (model.is_language_model()) {
          targets.insert(targets.end(), ex->next_tokens.begin(), ex->next_tokens.end());
        } else {
          targets.push_back(ex->label);
        }
      }
      const Matrix& logits = out.value();
      for (Index r = 0; r < logits.rows(); ++r) {
        Index arg = 0;
        logits.row(r).maxCoeff(&arg);
        if (arg == targets[static_cast<std::size_t>(r)]) ++correct;
      }
    }
  }
  EvalMetrics m;
  m.examples = data.size();
  m.loss = loss_sum / static_cast<double>(rows);
  if (classify) m.accuracy = static_cast<double>(correct) / static_cast<double>(rows);
  if (model.is_language_model()) m.perplexity = std::exp(m.loss);
  return m;
}

namespace {

void check_loss(double loss, long t, const TrainConfig& config, double lr) {
  if (std::isfinite(loss)) return;
  std::ostringstream msg;
  msg << "training diverged at step " << t << " (" << to_string(config.method) << ", lr " << lr
      << "): loss is " << loss;
  throw DivergenceError(msg.str());
}

void check_data(const TrainConfig& config, const DatasetSplits& data) {
  if (data.train.size() < static_cast<std::size_t>(config.batch_size)) {
    throw ConfigError("training set has " + std::to_string(data.train.size()) + " examples, fewer than batch size " +
                      std::to_string(config.batch_size));
  }
}

bool should_eval(const TrainConfig& config, long t) { return config.eval_every > 0 && t % config.eval_every == 0; }

void record_eval(RunLog& log, long t, const Model& model, const ParamSet& params, const Dataset& eval) {
  if (eval.empty()) return;
  const auto start = Clock::now();
  log.evals.push_back({t, evaluate(model, params, eval)});
  log.timings.eval += seconds_since(start);
}

std::vector<std::span<double>> spans(Blocks& blocks) {
  std::vector<std::span<double>> out;
  for (auto& b : blocks) out.emplace_back(b.data(), static_cast<std::size_t>(b.size()));
  return out;
}

std::vector<std::span<const double>> const_spans(const Blocks& blocks) {
  std::vector<std::span<const double>> out;
  for (const auto& b : blocks) out.emplace_back(b.data(), static_cast<std::size_t>(b.size()));
  return out;
}

void check_gradients(const Blocks& grads, const std::vector<std::string>& names) {
  for (std::size_t i = 0; i < grads.size(); ++i) {
    for (Index k = 0; k < grads[i].size(); ++k) {
      if (!std::isfinite(grads[i].data()[k])) {
        throw NumericError("non-finite gradient in '" + names[i] + "' at coordinate " + std::to_string(k));
      }
    }
  }
}

RunLog start_log(const TrainConfig& config, const ParamSet& theta0) {
  RunLog log;
  log.method = config.method;
  log.config = config.to_json();
  log.total_params = theta0.total_count();
  log.adaptable_params = theta0.adaptable_count(config.target_pattern);
  return log;
}

}  // namespace

TrainResult run_speft(const TrainConfig& config, const Model& model, const ParamSet& theta0, const DatasetSplits& data,
                      const StepObserver& observer) {
  config.validate();
  if (config.method != Method::speft) throw ConfigError("run_speft: method must be speft");
  check_data(config, data);
  const Dataset& train = data.train;
  const MaskSchedule schedule{config.interval};

  TrainResult result;
  RunLog& log = result.log;
  log = start_log(config, theta0);
  auto trace = [&](long t, const char* kind) {
    if (config.trace) log.trace.push_back({t, kind});
  };

  // Line 1: working copy theta of theta0, W_sp = 0 on an empty support.
  ParamSet theta = theta0;
  SparsityMask mask;
  SparseDelta delta;
  OptimizerState state(config.optimizer);
  BatchSampler sampler = training_sampler(train.size(), config.seed);
  std::optional<Batch> probe;
  if (config.check_invariants) {
    BatchSampler p = training_sampler(train.size(), config.seed).fork(kProbeSalt);
    probe = train.batch(p.next_indices(static_cast<std::size_t>(config.batch_size)));
  }
  trace(0, "init");
  if (!data.eval.empty()) {
    const auto start = Clock::now();
    log.initial_eval = evaluate(model, theta0, data.eval);
    log.timings.eval += seconds_since(start);
  }

  for (long t = 1; t <= config.steps; ++t) {
    if (should_refresh(t, schedule)) {
      RefreshEvent ev;
      ev.step = t;
      // Line 4: merge the accumulated delta into theta.
      trace(t, "merge");
      std::optional<Matrix> before_out;
      if (probe) before_out = model.outputs(constant_tensors<double>(merged(theta, delta)), *probe).value();
      ev.merged_nonzeros = delta.nonzeros();
      merge_and_reset(delta, theta);

      // Line 5: salience on the merged weights from a forked sampler.
      trace(t, "salience");
      const auto sal_start = Clock::now();
      SalienceConfig sc = config.salience;
      sc.metric = config.metric;
      sc.seed = mix_seed(config.seed, static_cast<std::uint64_t>(t));
      sc.target_pattern = config.target_pattern;
      SalienceScores scores;
      if (is_data_free(sc.metric)) {
        scores = compute_salience(model, theta, static_cast<BatchStream*>(nullptr), sc);
      } else {
        SamplerStream stream(train, salience_sampler(train.size(), config.seed, t),
                             static_cast<std::size_t>(sc.batch_size));
        scores = compute_salience(model, theta, &stream, sc);
      }
      log.timings.salience += seconds_since(sal_start);
      ev.salience_batches = scores.batches_used;

      // Line 6: top-rho mask, then attach a zero delta on its support.
      trace(t, "mask");
      SparsityMask next = build_mask(scores, *config.density, config.scope);
      next.step = t;
      if (next.nnz() == 0) {
        throw ConfigError("budget rounds to zero: density " + std::to_string(*config.density) + " over " +
                          std::to_string(next.total()) + " adaptable parameters");
      }
      if (!mask.layers.empty()) {
        const MaskDiff d = mask_diff(mask, next);
        ev.overlap = d.overlap;
        ev.entering = d.entering();
        ev.leaving = d.leaving();
      }
      mask = std::move(next);
      ev.nnz = mask.nnz();
      trace(t, "attach");
      delta = attach(mask, theta);
      if (before_out) {
        const Matrix after_out = model.outputs(constant_tensors<double>(merged(theta, delta)), *probe).value();
        ev.merge_transparent = bit_identical(*before_out, after_out);
      }
      // Reinitialize memory-based optimizer state for the new support.
      trace(t, "reinit");
      reinitialize(state, delta);
      if (config.check_invariants) ev.optimizer_reset = state.is_reset();
      log.refreshes.push_back(ev);
    }

    const auto step_start = Clock::now();
    // Line 7: sample the mini-batch.
    trace(t, "sample");
    const Batch batch = train.batch(sampler.next_indices(static_cast<std::size_t>(config.batch_size)));

    // Line 8: forward pass on theta + W_sp with the mini-batch mean loss.
    trace(t, "forward");
    std::vector<std::size_t> idx;
    Blocks eff;
    for (const auto& l : delta.layers()) {
      idx.push_back(l.param_index);
      eff.push_back(effective_weight(theta[l.param_index].value, l));
    }
    auto [loss, dense] = value_and_gradient(
        [&](const std::vector<Tensor<double>>& w) { return model.loss(substitute(theta, idx, w), batch); }, eff);
    const double lr = learning_rate(config, t);
    check_loss(loss, t, config, lr);

    // Line 9: optimizer step on tau * dl/dW_sp.
    trace(t, "update");
    std::vector<Vector> sparse;
    sparse.reserve(delta.layers().size());
    for (std::size_t l = 0; l < delta.layers().size(); ++l) sparse.push_back(masked_gradient(dense[l], delta.layers()[l]));
    step(delta, sparse, state, lr);
    log.timings.train += seconds_since(step_start);
    log.steps.push_back({t, loss, lr});
    if (observer) observer(t, theta, delta, mask, state);
    if (should_eval(config, t) && t != config.steps) record_eval(log, t, model, merged(theta, delta), data.eval);
  }

  // Line 10: return theta + W_sp.
  trace(config.steps, "return");
  result.final_params = merged(theta, delta);
  log.trainable = delta.stored();
  record_eval(log, config.steps, model, result.final_params, data.eval);
  if (!log.evals.empty()) log.final_eval = log.evals.back().metrics;
  result.base = std::move(theta);
  result.mask = std::move(mask);
  result.delta = std::move(delta);
  result.optimizer = std::move(state);
  return result;
}

TrainResult run_baseline(const TrainConfig& config, const Model& model, const ParamSet& theta0,
                         const DatasetSplits& data) {
  config.validate();
  if (config.method == Method::speft) throw ConfigError("run_baseline: method must be low_rank or full_ft");
  check_data(config, data);
  const Dataset& train = data.train;

  TrainResult result;
  RunLog& log = result.log;
  log = start_log(config, theta0);
  auto trace = [&](long t, const char* kind) {
    if (config.trace) log.trace.push_back({t, kind});
  };

  const bool low_rank = config.method == Method::low_rank;
  const auto targets = theta0.adaptable_indices(config.target_pattern);
  if (targets.empty()) throw ConfigError("no adaptable weights match the target pattern");
  std::optional<LowRankAdapter> adapter;
  Blocks trainable;
  std::vector<std::string> names;
  if (low_rank) {
    adapter = apply_low_rank_adapter(theta0, config.lora_rank, config.lora_alpha, mix_seed(config.seed, 0x10ULL),
                                     config.target_pattern);
    trainable = adapter->trainable();
    for (const auto& l : adapter->layers()) {
      names.push_back(l.name + ".A");
      names.push_back(l.name + ".B");
    }
    log.trainable = adapter->trainable_count();
  } else {
    trainable = theta0.values(targets);
    for (auto i : targets) names.push_back(theta0[i].name);
    log.trainable = theta0.adaptable_count(config.target_pattern);
  }
  auto current = [&]() -> ParamSet {
    if (low_rank) {
      LowRankAdapter a = *adapter;
      a.set_trainable(trainable);
      return a.merged(theta0);
    }
    ParamSet p = theta0;
    for (std::size_t k = 0; k < targets.size(); ++k) p[targets[k]].value = trainable[k];
    return p;
  };

  OptimizerState state(config.optimizer);
  {
    std::vector<Index> sizes;
    for (const auto& b : trainable) sizes.push_back(b.size());
    state.reinitialize(sizes);
  }
  BatchSampler sampler = training_sampler(train.size(), config.seed);
  trace(0, "init");
  if (!data.eval.empty()) {
    const auto start = Clock::now();
    log.initial_eval = evaluate(model, theta0, data.eval);
    log.timings.eval += seconds_since(start);
  }

  for (long t = 1; t <= config.steps; ++t) {
    const auto step_start = Clock::now();
    trace(t, "sample");
    const Batch batch = train.batch(sampler.next_indices(static_cast<std::size_t>(config.batch_size)));
    trace(t, "forward");
    double loss = 0.0;
    Blocks grads;
    if (low_rank) {
      std::tie(loss, grads) = value_and_gradient(
          [&](const std::vector<Tensor<double>>& ab) { return model.loss(adapter->effective(theta0, ab), batch); },
          trainable);
    } else {
      std::tie(loss, grads) = value_and_gradient(
          [&](const std::vector<Tensor<double>>& w) { return model.loss(substitute(theta0, targets, w), batch); },
          trainable);
    }
    const double lr = learning_rate(config, t);
    check_loss(loss, t, config, lr);
    check_gradients(grads, names);
    trace(t, "update");
    state.apply(spans(trainable), const_spans(grads), lr);
    log.timings.train += seconds_since(step_start);
    log.steps.push_back({t, loss, lr});
    if (should_eval(config, t) && t != config.steps) record_eval(log, t, model, current(), data.eval);
  }
  trace(config.steps, "return");
  result.final_params = current();
  record_eval(log, config.steps, model, result.final_params, data.eval);
  if (!log.evals.empty()) log.final_eval = log.evals.back().metrics;
  if (low_rank) {
    adapter->set_trainable(trainable);
    result.low_rank = std::move(adapter);
  }
  result.optimizer = std::move(state);
  return result;
}

TrainResult run(const TrainConfig& config, const Model& model, const ParamSet& theta0, const DatasetSplits& data,
                const StepObserver& observer) {
  if (config.method == Method::speft) return run_speft(config, model, theta0, data, observer);
  return run_baseline(config, model, theta0, data);
}

// ---------------------------------------------------------------------------

Index mask_budget(const ParamSet& base, double density, MaskScope scope, const std::string& pattern) {
  const auto idx = base.adaptable_indices(pattern);
  if (scope == MaskScope::global) return budget(density, base.adaptable_count(pattern));
  Index n = 0;
  for (auto i : idx) n += budget(density, base[i].numel());
  return n;
}

ParityResult parity_density(const ParamSet& base, int rank, MaskScope scope, const std::string& pattern) {
  ParityResult r;
  r.scope = scope;
  r.low_rank_count = apply_low_rank_adapter(base, rank, 1.0, 0, pattern).trainable_count();
  const Index n = base.adaptable_count(pattern);
  if (r.low_rank_count > n) {
    throw ConfigError("rank " + std::to_string(rank) + " adapter trains " + std::to_string(r.low_rank_count) +
                      " parameters, more than the " + std::to_string(n) + " adaptable weights");
  }
  if (scope == MaskScope::global) {
    r.density = std::min(1.0, (static_cast<double>(r.low_rank_count) + 0.5) / static_cast<double>(n));
  } else {
    // Smallest rho whose per-layer total reaches the target, versus the
    // largest one below it.
    double lo = 0.0;
    double hi = 1.0;
    for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (mask_budget(base, mid, scope, pattern) >= r.low_rank_count) {
        hi = mid;
      } else {
        lo = mid;
      }
    }
    const Index above = mask_budget(base, hi, scope, pattern);
    const Index below = lo > 0.0 ? mask_budget(base, lo, scope, pattern) : 0;
    r.density = (above - r.low_rank_count <= r.low_rank_count - below || lo <= 0.0) ? hi : lo;
  }
  r.sparse_count = mask_budget(base, r.density, scope, pattern);
  return r;
}

Json OverheadReport::to_json() const {
  return {{"metric", to_string(metric)},
          {"steps", steps},
          {"interval", interval},
          {"refreshes", refreshes},
          {"estimation_batches", estimation_batches},
          {"batch_size", batch_size},
          {"estimation_steps", estimation_steps},
          {"gradient_evaluation_multiplier", gradient_evaluation_multiplier},
          {"estimation_gradient_evaluations", estimation_gradient_evaluations},
          {"training_gradient_evaluations", training_gradient_evaluations},
          {"estimation_fraction", estimation_fraction},
          {"estimation_percent", 100.0 * estimation_fraction},
          {"storage",
           {{"nnz", storage.nnz},
            {"model_params", storage.model_params},
            {"index_bytes", storage.index_bytes},
            {"value_bytes", storage.value_bytes},
            {"dense_model_bytes", storage.dense_model_bytes},
            {"index_fraction", storage.index_fraction},
            {"index_percent", 100.0 * storage.index_fraction}}}};
}

OverheadReport overhead_report(const TrainConfig& config, const ParamSet& base, DType dtype) {
  if (config.steps < 1) throw ConfigError("overhead: steps must be >= 1");
  OverheadReport r;
  r.metric = config.metric;
  r.steps = config.steps;
  r.interval = config.interval;
  const MaskSchedule schedule{config.interval};
  r.refreshes = static_cast<long>(refresh_steps(config.steps, schedule).size());
  const bool data_free = is_data_free(config.metric);
  r.estimation_batches = data_free ? 0 : config.salience.batches;
  r.batch_size = config.salience.batch_size;
  r.estimation_steps = r.refreshes * r.estimation_batches;
  r.gradient_evaluation_multiplier = gradient_evaluation_multiplier(config.metric);
  r.estimation_gradient_evaluations = static_cast<double>(r.estimation_steps) * r.gradient_evaluation_multiplier;
  r.training_gradient_evaluations = static_cast<double>(config.steps);
  r.estimation_fraction =
      r.estimation_gradient_evaluations / (r.estimation_gradient_evaluations + r.training_gradient_evaluations);
  if (config.density && base.size() > 0) {
    r.storage.nnz = mask_budget(base, *config.density, config.scope, config.target_pattern);
    r.storage.model_params = base.total_count();
    r.storage.index_bytes = static_cast<std::size_t>(r.storage.nnz) * sizeof(std::uint64_t);
    r.storage.value_bytes = static_cast<std::size_t>(r.storage.nnz) * dtype_size(dtype);
    r.storage.dense_model_bytes = static_cast<std::size_t>(r.storage.model_params) * dtype_size(dtype);
    r.storage.index_fraction =
        static_cast<double>(r.storage.index_bytes) / static_cast<double>(r.storage.dense_model_bytes);
  }
  return r;
}

}  // namespace speft
