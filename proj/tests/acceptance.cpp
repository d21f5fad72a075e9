// Copyright 2026 The SPEFT Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite: one PASS/FAIL line per criterion.
//
//   speft_acceptance [--only N[,N...]] [--allow-fail N[,N...]]
//
// Exit status is 0 iff every criterion passed, except those named by
// --allow-fail, which are still run and printed with their real verdict.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "speft/salience.hpp"
#include "speft/trainer.hpp"

namespace {

using namespace speft;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---------------------------------------------------------------------------
// 1. Mask cardinality against a full-sort oracle.
// ---------------------------------------------------------------------------
Verdict mask_cardinality() {
  const std::vector<double> densities{0.0018, 0.0024, 0.0027, 0.0035, 0.0053, 0.0097};
  std::vector<std::vector<std::pair<Index, Index>>> shape_sets;
  for (const auto& cfg : {fixtures::transformer(Architecture::transformer_lm, 64, 4, 256, 128, 16),
                          fixtures::transformer(Architecture::transformer_encoder, 32, 4, 64, 64, 8, 4, 2),
                          fixtures::mlp({64, 256, 256, 10})}) {
    auto [model, params] = build_model(cfg, 0);
    std::vector<std::pair<Index, Index>> shapes;
    for (auto i : params.adaptable_indices()) shapes.emplace_back(params[i].value.rows(), params[i].value.cols());
    shape_sets.push_back(shapes);
  }
  std::mt19937_64 rng(1234);
  int sets = 0;
  long checks = 0;
  for (int trial = 0; trial < 120; ++trial) {
    const auto& shapes = shape_sets[static_cast<std::size_t>(trial) % shape_sets.size()];
    SalienceScores s;
    s.scores = oracle::random_scores(shapes, rng, trial % 3 == 0 ? 7 : 1 << 20);
    for (std::size_t l = 0; l < shapes.size(); ++l) {
      s.names.push_back("w" + std::to_string(l));
      s.param_indices.push_back(l);
    }
    ++sets;
    const Index n_total = s.count();
    for (double rho : densities) {
      const SparsityMask g = build_global_mask(s, rho);
      const auto expect_g = oracle::global_mask_full_sort(s, rho);
      if (g.nnz() != static_cast<Index>(std::floor(rho * static_cast<double>(n_total) + 1e-9))) {
        return {false, "global count mismatch at rho " + std::to_string(rho)};
      }
      const SparsityMask l = build_local_mask(s, rho);
      const auto expect_l = oracle::local_mask_full_sort(s, rho);
      for (std::size_t k = 0; k < shapes.size(); ++k) {
        const Index n_layer = shapes[k].first * shapes[k].second;
        if (g.layers[k].indices != expect_g[k]) return {false, "global set differs from full sort"};
        if (l.layers[k].nnz() != static_cast<Index>(std::floor(rho * static_cast<double>(n_layer) + 1e-9))) {
          return {false, "local count mismatch"};
        }
        if (l.layers[k].indices != expect_l[k]) return {false, "local set differs from full sort"};
        ++checks;
      }
    }
  }
  return {true, std::to_string(sets) + " score sets x 6 densities, " + std::to_string(checks) + " layer checks"};
}

// ---------------------------------------------------------------------------
// 2. Gradients of every zoo model against central differences.
// ---------------------------------------------------------------------------
constexpr double kGradFloor = 1e-4;

Verdict autodiff_soundness() {
  double worst = 0.0;
  std::string worst_at;
  Index coords = 0;
  for (const auto& [name, cfg] : fixtures::small_zoo()) {
    auto [model, params] = build_model(cfg, 7);
    // Larger weights than the 0.02 init so every path carries signal.
    std::mt19937_64 rng(11);
    std::normal_distribution<double> g(0.0, 0.5);
    for (std::size_t i = 0; i < params.size(); ++i) {
      for (Index k = 0; k < params[i].value.size(); ++k) params[i].value.data()[k] += g(rng);
    }
    if (params.total_count() > 2000) return {false, name + " has more than 2000 parameters"};
    const Dataset data = fixtures::random_data(cfg, 4, 3);
    const Batch batch = data.all();
    std::vector<Tensor<double>> leaves;
    for (const auto& p : params) leaves.push_back(Tensor<double>::parameter(p.shape, p.value));
    model.loss(leaves, batch).backward();
    Blocks ad;
    for (const auto& t : leaves) ad.push_back(t.grad());
    ParamSet probe = params;
    const Blocks fd = oracle::fd_gradient(
        [&](const Blocks& t) {
          for (std::size_t i = 0; i < t.size(); ++i) probe[i].value = t[i];
          return model.loss(constant_tensors<double>(probe), batch).item();
        },
        params.values());
    for (std::size_t b = 0; b < ad.size(); ++b) {
      for (Index k = 0; k < ad[b].size(); ++k, ++coords) {
        const double e = oracle::rel_err(ad[b].data()[k], fd[b].data()[k], kGradFloor);
        if (e > worst) {
          worst = e;
          worst_at = name + ":" + params[b].name;
        }
      }
    }
  }
  return {worst <= 1e-6, std::to_string(coords) + " coordinates, 5 models, max rel err " + fmt("%.2e", worst) +
                             " (" + worst_at + ")"};
}

// ---------------------------------------------------------------------------
// 3. Hessian-vector products on random quadratics.
// ---------------------------------------------------------------------------
Verdict hvp_soundness() {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_int_distribution<int> dim(1, 32);
  double worst = 0.0, worst_exact = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = dim(rng);
    Matrix b(n, n);
    for (Index k = 0; k < b.size(); ++k) b.data()[k] = g(rng);
    const Matrix a = 0.5 * (b + b.transpose());
    Matrix theta(n, 1), v(n, 1);
    for (int i = 0; i < n; ++i) {
      theta(i, 0) = g(rng);
      v(i, 0) = g(rng);
    }
    auto loss = [&](const auto& w) {
      using S = typename std::decay_t<decltype(w)>::value_type::Mat::Scalar;
      Tensor<S> am(a.cast<S>().eval());
      return scale(sum(mul(w[0], matmul(am, w[0]))), S(0.5));
    };
    const Matrix exact = a * v;
    const double denom = std::max(exact.cwiseAbs().maxCoeff(), 1e-300);
    const Blocks fd = hessian_vector_product(loss, {theta}, {v});
    const Blocks fwd = hessian_vector_product_exact(loss, {theta}, {v});
    worst = std::max(worst, (fd[0] - exact).cwiseAbs().maxCoeff() / denom);
    worst_exact = std::max(worst_exact, (fwd[0] - exact).cwiseAbs().maxCoeff() / denom);
  }
  return {worst <= 1e-4 && worst_exact <= 1e-4, "50 quadratics, dim <= 32, max rel err (inf-norm) finite-difference " +
                                                    fmt("%.2e", worst) + ", forward-over-reverse " + fmt("%.2e", worst_exact)};
}

// ---------------------------------------------------------------------------
// 4. Metric identities.
// ---------------------------------------------------------------------------
std::vector<std::uint64_t> argsort(const Matrix& m) {
  std::vector<std::uint64_t> o(static_cast<std::size_t>(m.size()));
  std::iota(o.begin(), o.end(), std::uint64_t{0});
  std::stable_sort(o.begin(), o.end(), [&](auto x, auto y) { return m.data()[x] > m.data()[y]; });
  return o;
}

Verdict metric_identities() {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_int_distribution<int> coin(0, 9);
  for (int trial = 0; trial < 100; ++trial) {
    Matrix theta(6, 7), grad(6, 7);
    for (Index k = 0; k < theta.size(); ++k) {
      // Some exact zeros and repeated values to exercise tie-breaking.
      theta.data()[k] = coin(rng) == 0 ? 0.0 : (coin(rng) < 2 ? 0.5 : g(rng));
      grad.data()[k] = coin(rng) == 0 ? 0.0 : (coin(rng) < 2 ? -2.0 : g(rng));
    }
    const Matrix snip = scores::snip({theta}, {grad})[0];
    const Matrix tfo = scores::taylor_fo({theta}, {grad})[0];
    if (argsort(snip) != argsort(tfo)) return {false, "argsort(taylor_fo) != argsort(snip) in trial " + std::to_string(trial)};
  }
  // Single-batch estimation on a toy MLP.
  const ModelConfig cfg = fixtures::mlp({4, 8, 3});
  auto [model, params] = build_model(cfg, 3);
  const Dataset data = fixtures::random_data(cfg, 16, 4);
  auto one_batch = [&](Metric m) {
    FixedStream stream({data.all()});
    SalienceConfig sc;
    sc.metric = m;
    sc.batches = 1;
    return compute_salience(model, params, &stream, sc);
  };
  const auto grad_s = one_batch(Metric::gradient);
  const auto fisher_s = one_batch(Metric::fisher);
  const auto force_s = one_batch(Metric::force);
  WeightObjective obj(model, params, grad_s.param_indices);
  const Blocks gbar = obj.batch_gradient(obj.weights(), data.all());
  double fisher_err = 0.0;
  bool force_exact = true;
  for (std::size_t l = 0; l < grad_s.scores.size(); ++l) {
    fisher_err = std::max(fisher_err, (fisher_s.scores[l] - grad_s.scores[l].cwiseAbs2()).cwiseAbs().maxCoeff());
    const Matrix expect = -(gbar[l].cwiseProduct(obj.weights()[l]));
    force_exact = force_exact && bit_identical(expect, force_s.scores[l]);
  }
  const bool ok = fisher_err <= 1e-12 && force_exact;
  return {ok, "taylor_fo/snip argsort equal on 100 pairs; fisher - gradient^2 max " + fmt("%.1e", fisher_err) +
                  "; force exact: " + (force_exact ? "yes" : "no")};
}

// ---------------------------------------------------------------------------
// 5. SynFlow on 1x1 chains.
// ---------------------------------------------------------------------------
Verdict synflow_chain() {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.2, 2.0);
  std::uniform_int_distribution<int> sign(0, 1);
  double worst = 0.0;
  int chains = 0;
  for (int depth = 2; depth <= 5; ++depth) {
    for (int rep = 0; rep < 10; ++rep, ++chains) {
      const ModelConfig cfg = fixtures::mlp(std::vector<int>(static_cast<std::size_t>(depth) + 1, 1));
      auto [model, params] = build_model(cfg, 0);
      double prod = 1.0;
      for (auto i : params.adaptable_indices()) {
        const double w = (sign(rng) ? 1.0 : -1.0) * u(rng);
        params[i].value(0, 0) = w;
        prod *= w;
      }
      SalienceConfig sc;
      sc.metric = Metric::synflow;
      const auto s = compute_salience(model, params, static_cast<BatchStream*>(nullptr), sc);
      for (const auto& m : s.scores) worst = std::max(worst, oracle::rel_err(m(0, 0), std::abs(prod), 0.0));
    }
  }
  return {worst <= 1e-10, std::to_string(chains) + " chains of depth 2-5, max rel err " + fmt("%.1e", worst)};
}

// ---------------------------------------------------------------------------
// Shared toy task for the trainer criteria.
// ---------------------------------------------------------------------------
struct ToyTask {
  ModelConfig config;
  Model model;
  ParamSet theta0;
  DatasetSplits data;
};

ToyTask toy_task() {
  TeacherStudentConfig tc;
  tc.dims = {8, 32, 4};
  tc.n = 512;
  auto task = gen_teacher_student(tc);
  ModelConfig cfg = fixtures::mlp({8, 32, 4});
  auto [model, params] = build_model(cfg, 5);
  return {cfg, model, params, task.data};
}

TrainConfig toy_config(long steps, long interval) {
  TrainConfig c;
  c.method = Method::speft;
  c.metric = Metric::gradient;
  c.density = 0.1;
  c.steps = steps;
  c.interval = interval;
  c.batch_size = 16;
  c.lr = 1e-2;
  c.salience.batches = 8;
  c.seed = 21;
  return c;
}

bool trace_follows_algorithm(const RunLog& log, long steps, const MaskSchedule& schedule) {
  std::vector<std::pair<long, std::string>> expect{{0, "init"}};
  for (long t = 1; t <= steps; ++t) {
    if (should_refresh(t, schedule)) {
      for (const char* k : {"merge", "salience", "mask", "attach", "reinit"}) expect.emplace_back(t, k);
    }
    for (const char* k : {"sample", "forward", "update"}) expect.emplace_back(t, k);
  }
  expect.emplace_back(steps, "return");
  if (expect.size() != log.trace.size()) return false;
  for (std::size_t i = 0; i < expect.size(); ++i) {
    if (expect[i].first != log.trace[i].step || expect[i].second != log.trace[i].kind) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// 6. Refresh schedule and control flow.
// ---------------------------------------------------------------------------
Verdict control_flow() {
  ToyTask task = toy_task();
  std::string detail;
  bool ok = true;
  for (long interval : {1000L, -1L}) {
    TrainConfig c = toy_config(2500, interval);
    c.trace = true;
    const TrainResult r = run_speft(c, task.model, task.theta0, task.data);
    const auto steps = r.log.refresh_steps();
    const std::vector<long> expect = interval > 0 ? std::vector<long>{1, 1000, 2000} : std::vector<long>{1};
    const bool trace_ok = trace_follows_algorithm(r.log, c.steps, MaskSchedule{interval});
    ok = ok && steps == expect && trace_ok;
    std::string got;
    for (long s : steps) got += (got.empty() ? "" : ",") + std::to_string(s);
    detail += "I=" + std::to_string(interval) + " -> {" + got + "}" + (trace_ok ? " trace ok" : " trace MISMATCH") + "; ";
  }
  return {ok, detail};
}

// ---------------------------------------------------------------------------
// 7. Support, frozen base and merge transparency.
// ---------------------------------------------------------------------------
Verdict invariants() {
  ToyTask task = toy_task();
  const ParamSet snapshot = task.theta0;
  TrainConfig c = toy_config(2000, 500);
  c.check_invariants = true;
  bool support_ok = true;
  long checked = 0;
  auto observer = [&](long, const ParamSet& base, const SparseDelta& delta, const SparsityMask& mask,
                      const OptimizerState&) {
    ++checked;
    for (std::size_t l = 0; l < delta.layers().size(); ++l) {
      const auto& d = delta.layers()[l];
      if (d.indices != mask.layers[l].indices) support_ok = false;
      // The dense delta materialized for the forward pass must vanish
      // outside the mask.
      const Matrix dense = scatter(d.values, d.indices, d.rows, d.cols);
      Index nz = (dense.array() != 0.0).count();
      Index nz_on = 0;
      for (auto k : mask.layers[l].indices) nz_on += dense.data()[k] != 0.0;
      if (nz != nz_on) support_ok = false;
      (void)base;
    }
  };
  const TrainResult r = run_speft(c, task.model, task.theta0, task.data, observer);
  const bool frozen = bit_identical(task.theta0, snapshot);
  bool merge_ok = !r.log.refreshes.empty();
  for (const auto& e : r.log.refreshes) merge_ok = merge_ok && e.merge_transparent.value_or(false);
  return {frozen && support_ok && merge_ok,
          std::string("theta0 bit-identical: ") + (frozen ? "yes" : "no") + "; support held at " +
              std::to_string(checked) + " steps: " + (support_ok ? "yes" : "no") + "; merge transparent at " +
              std::to_string(r.log.refreshes.size()) + " refreshes: " + (merge_ok ? "yes" : "no")};
}

// ---------------------------------------------------------------------------
// 8. Dense-equivalence oracle.
// ---------------------------------------------------------------------------
Verdict dense_equivalence() {
  ToyTask task = toy_task();
  TrainConfig c = toy_config(500, -1);
  const TrainResult r = run_speft(c, task.model, task.theta0, task.data);
  const ParamSet dense = oracle::dense_masked_training(c, task.model, task.theta0, task.data.train, r.mask);
  double worst = 0.0;
  for (std::size_t i = 0; i < dense.size(); ++i) {
    worst = std::max(worst, (dense[i].value - r.final_params[i].value).cwiseAbs().maxCoeff());
  }
  return {worst <= 1e-12, "500 AdamW steps, max |dense - (theta0 + W_sp)| = " + fmt("%.2e", worst)};
}

// ---------------------------------------------------------------------------
// 9. Optimizer reset at dynamic refreshes.
// ---------------------------------------------------------------------------
Verdict optimizer_reset() {
  ToyTask task = toy_task();
  TrainConfig c = toy_config(600, 100);
  c.check_invariants = true;
  // After the first step on a fresh support the counter must read 1.
  bool fresh_ok = true;
  const MaskSchedule schedule{c.interval};
  auto observer = [&](long t, const ParamSet&, const SparseDelta&, const SparsityMask&, const OptimizerState& s) {
    if (should_refresh(t, schedule) && s.step_count() != 1) fresh_ok = false;
  };
  const TrainResult r = run_speft(c, task.model, task.theta0, task.data, observer);
  bool ok = fresh_ok && r.log.refreshes.size() == 7;
  for (const auto& e : r.log.refreshes) ok = ok && e.optimizer_reset.value_or(false);
  return {ok, std::to_string(r.log.refreshes.size()) + " refreshes; moments zero and step 0 after each: " +
                  (ok ? "yes" : "no")};
}

// ---------------------------------------------------------------------------
// 10. Overhead arithmetic.
// ---------------------------------------------------------------------------
Verdict overhead_arithmetic() {
  TrainConfig c;
  c.steps = 24576;
  c.interval = -1;
  c.salience.batches = 64;
  c.salience.batch_size = 16;
  c.metric = Metric::gradient;
  const OverheadReport first = overhead_report(c, ParamSet{});
  const double pct = 100.0 * first.estimation_fraction;
  c.metric = Metric::grasp;
  const OverheadReport grasp = overhead_report(c, ParamSet{});
  c.metric = Metric::fisher;
  const OverheadReport fisher = overhead_report(c, ParamSet{});
  const bool ok = std::abs(pct - 0.26) <= 0.01 && first.estimation_steps == 64 &&
                  grasp.gradient_evaluation_multiplier == 2.0 && fisher.gradient_evaluation_multiplier == 2.0 &&
                  grasp.estimation_gradient_evaluations == 2.0 * first.estimation_gradient_evaluations;
  return {ok, "64 / (64 + 24576) = " + fmt("%.4f", pct) + "%; grasp and fisher evaluations x" +
                  fmt("%.0f", grasp.gradient_evaluation_multiplier)};
}

// ---------------------------------------------------------------------------
// 11. Budget parity and index overhead.
// ---------------------------------------------------------------------------
Verdict budget_parity() {
  const ModelConfig cfg = fixtures::transformer(Architecture::transformer_lm, 32, 4, 64, 64, 16);
  auto [model, params] = build_model(cfg, 0);
  const ParityResult p = parity_density(params, 8, MaskScope::global);
  const Index lora = apply_low_rank_adapter(params, 8, 8.0, 0).trainable_count();
  SalienceConfig sc;
  sc.metric = Metric::magnitude;
  const SparsityMask mask =
      build_global_mask(compute_salience(model, params, static_cast<BatchStream*>(nullptr), sc), p.density);
  const StorageReport st = storage_report(mask, params);
  const bool parity_ok = std::abs(mask.nnz() - lora) <= 1 && std::abs(p.difference()) <= 1;
  const bool overhead_ok = st.index_fraction < 0.01;
  return {parity_ok && overhead_ok,
          "parity: rho " + fmt("%.5f", p.density) + ", sparse " + std::to_string(mask.nnz()) + " vs low-rank " +
              std::to_string(lora) + (parity_ok ? " (ok)" : " (MISMATCH)") + "; index bytes " +
              std::to_string(st.index_bytes) + " / dense " + std::to_string(st.dense_model_bytes) + " = " +
              fmt("%.2f", 100.0 * st.index_fraction) + "% (bound 1%)"};
}

// ---------------------------------------------------------------------------
// 12. Directional desk-scale comparison.
// ---------------------------------------------------------------------------
Verdict directional() {
  TeacherStudentConfig tc;
  tc.dims = {16, 64, 64, 8};
  tc.n = 2048;
  tc.noise = 0.0;
  auto upstream = gen_teacher_student(tc);
  const ParamSet downstream_teacher = shift_teacher(upstream.teacher, 0.02, 3.0, 41);
  const DatasetSplits data = label_with_teacher(upstream.teacher_config, downstream_teacher, tc);
  const Model model(upstream.teacher_config);
  const ParamSet& theta0 = upstream.teacher;
  const ParityResult parity = parity_density(theta0, 8, MaskScope::global);

  auto final_loss = [&](Metric m, std::uint64_t seed) {
    TrainConfig c;
    c.method = Method::speft;
    c.metric = m;
    c.scope = MaskScope::global;
    c.density = parity.density;
    c.interval = -1;
    c.steps = 2000;
    c.batch_size = 16;
    c.lr = 3e-3;
    c.seed = seed;
    return run_speft(c, model, theta0, data).log.final_eval->loss;
  };
  double mean_g = 0.0, mean_r = 0.0, mean_m = 0.0;
  int wins_random = 0;
  std::ostringstream per;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const double g = final_loss(Metric::gradient, seed);
    const double r = final_loss(Metric::random, seed);
    const double m = final_loss(Metric::magnitude, seed);
    mean_g += g / 5;
    mean_r += r / 5;
    mean_m += m / 5;
    wins_random += g < r;
    per << (seed ? " " : "") << fmt("%.4g", g) << "/" << fmt("%.4g", r) << "/" << fmt("%.4g", m);
  }
  const bool ok = mean_g < mean_r && mean_g < mean_m && wins_random == 5;
  return {ok, "rho " + fmt("%.4f", parity.density) + ", mean eval loss gradient " + fmt("%.4g", mean_g) + " vs random " +
                  fmt("%.4g", mean_r) + " vs magnitude " + fmt("%.4g", mean_m) + ", wins vs random " +
                  std::to_string(wins_random) + "/5 (per seed g/r/m: " + per.str() + ")"};
}

std::set<int> parse_list(const std::string& s) {
  std::set<int> out;
  std::stringstream in(s);
  std::string tok;
  while (std::getline(in, tok, ',')) out.insert(std::stoi(tok));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only, allow_fail;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      only = parse_list(argv[++i]);
    } else if (a == "--allow-fail" && i + 1 < argc) {
      allow_fail = parse_list(argv[++i]);
    } else {
      std::cerr << "usage: speft_acceptance [--only N,...] [--allow-fail N,...]\n";
      return 2;
    }
  }
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"mask cardinality", mask_cardinality},
      {"autodiff soundness", autodiff_soundness},
      {"hvp soundness", hvp_soundness},
      {"metric identities", metric_identities},
      {"synflow chain oracle", synflow_chain},
      {"algorithm control flow", control_flow},
      {"support and frozen-base invariants", invariants},
      {"dense-equivalence oracle", dense_equivalence},
      {"optimizer reset", optimizer_reset},
      {"overhead arithmetic", overhead_arithmetic},
      {"budget parity and index overhead", budget_parity},
      {"directional desk-scale result", directional},
  };
  set_warning_sink([](const std::string&) {});
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << "criterion " << (id < 10 ? " " : "") << id << ": " << (v.pass ? "PASS" : "FAIL") << "  "
              << criteria[i].first << " [" << fmt("%.2f", secs) << " s] " << v.detail;
    if (!v.pass && allow_fail.count(id)) std::cout << " (known, see notes)";
    std::cout << std::endl;
    if (!v.pass && !allow_fail.count(id)) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
