// Copyright 2026 The SPEFT Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "fixtures.hpp"
#include "speft/salience.hpp"
#include "speft/sparse_adapter.hpp"
#include "speft/trainer.hpp"

using namespace speft;

namespace {

// A single 1 x n weight with the given mask indices.
std::pair<ParamSet, SparsityMask> single_layer(Index n, std::vector<std::uint64_t> idx) {
  ParamSet ps;
  ps.add({"w", {1, n}, Matrix::Zero(1, n), ParamRole::weight});
  SparsityMask m;
  m.layers.push_back({"w", 0, 1, n, std::move(idx)});
  return {ps, m};
}

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Index>(xs.size()));
  Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

SparsityMask magnitude_mask(const Model& model, const ParamSet& params, double rho) {
  SalienceConfig c;
  c.metric = Metric::magnitude;
  return build_global_mask(compute_salience(model, params, static_cast<BatchStream*>(nullptr), c), rho);
}

}  // namespace

TEST_CASE("gather and scatter") {
  Matrix g(2, 2);
  g << 1, 2, 3, 4;
  const Vector v = gather(g, {1, 2});
  CHECK(v(0) == 2.0);
  CHECK(v(1) == 3.0);
  CHECK(gather(g, {}).size() == 0);
  const Matrix back = scatter(v, {1, 2}, 2, 2);
  CHECK(back(0, 1) == 2.0);
  CHECK(back(1, 0) == 3.0);
  CHECK(back(0, 0) == 0.0);
  CHECK(back(1, 1) == 0.0);
}

TEST_CASE("attach") {
  ParamSet ps;
  ps.add({"w", {100, 100}, Matrix::Random(100, 100), ParamRole::weight});
  ps.add({"b", {100}, Matrix::Zero(1, 100), ParamRole::bias});
  SalienceScores s;
  s.scores = {ps[0].value.cwiseAbs()};
  s.names = {"w"};
  s.param_indices = {0};
  const auto mask = build_global_mask(s, 0.01);
  const SparseDelta d = attach(mask, ps);
  CHECK(d.stored() == 100);
  CHECK(d.is_zero());

  SparsityMask bad = mask;
  bad.layers[0].name = "b";
  bad.layers[0].param_index = 1;
  CHECK_THROWS_AS(attach(bad, ps), ConfigError);
  ps[0].frozen = true;
  CHECK_THROWS_AS(attach(mask, ps), ConfigError);
}

TEST_CASE("a zero delta leaves the loss unchanged") {
  const ModelConfig cfg = fixtures::transformer(Architecture::transformer_lm);
  auto [model, params] = build_model(cfg, 3);
  const SparseDelta d = attach(magnitude_mask(model, params, 0.2), params);
  const Dataset data = fixtures::random_data(cfg, 4, 2);
  const auto before = model.loss(constant_tensors<double>(params), data.all()).item();
  CHECK(model.loss(constant_tensors<double>(merged(params, d)), data.all()).item() == before);
}

TEST_CASE("optimizer steps") {
  SUBCASE("sgd") {
    auto [ps, m] = single_layer(2, {0, 1});
    SparseDelta d = attach(m, ps);
    OptimizerState st(OptimizerConfig{OptimizerKind::sgd});
    reinitialize(st, d);
    step(d, {vec({0.2, 0.5})}, st, 0.1);
    CHECK(d.layers()[0].values(0) == doctest::Approx(-0.02).epsilon(1e-15));
    CHECK(d.layers()[0].values(1) == doctest::Approx(-0.05).epsilon(1e-15));
  }
  SUBCASE("adamw first step") {
    auto [ps, m] = single_layer(1, {0});
    SparseDelta d = attach(m, ps);
    OptimizerState st;
    reinitialize(st, d);
    CHECK(st.is_reset());
    step(d, {vec({1.0})}, st, 0.1);
    CHECK(d.layers()[0].values(0) == doctest::Approx(-0.1).epsilon(1e-7));
    CHECK(st.step_count() == 1);
    CHECK_FALSE(st.is_reset());
    reinitialize(st, d);
    CHECK(st.is_reset());
  }
  SUBCASE("decoupled weight decay shrinks the value") {
    auto [ps, m] = single_layer(1, {0});
    SparseDelta d = attach(m, ps);
    d.layers()[0].values(0) = 1.0;
    OptimizerConfig oc;
    oc.weight_decay = 0.5;
    OptimizerState st(oc);
    reinitialize(st, d);
    step(d, {vec({0.0})}, st, 0.1);
    CHECK(d.layers()[0].values(0) == doctest::Approx(0.95).epsilon(1e-12));
  }
  SUBCASE("non-finite gradients name the coordinate") {
    auto [ps, m] = single_layer(3, {0, 2});
    SparseDelta d = attach(m, ps);
    OptimizerState st;
    reinitialize(st, d);
    CHECK_THROWS_WITH_AS(step(d, {vec({0.0, std::nan("")})}, st, 0.1), doctest::Contains("w"), NumericError);
  }
  CHECK(parse_optimizer("sgd") == OptimizerKind::sgd);
  CHECK_THROWS_AS(parse_optimizer("lion"), ConfigError);
}

TEST_CASE("merging is transparent and resets the delta") {
  const ModelConfig cfg = fixtures::mlp({5, 12, 3}, MlpTask::classification);
  auto [model, params] = build_model(cfg, 1);
  const SparsityMask mask = magnitude_mask(model, params, 0.3);
  SparseDelta d = attach(mask, params);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0.0, 0.1);
  for (auto& l : d.layers()) {
    for (Index k = 0; k < l.values.size(); ++k) l.values(k) = g(rng);
  }
  const Dataset data = fixtures::random_data(cfg, 8, 3);
  // Forward on the effective weights, as the trainer does.
  std::vector<std::size_t> idx;
  std::vector<Tensor<double>> eff;
  for (const auto& l : d.layers()) {
    idx.push_back(l.param_index);
    eff.emplace_back(params[l.param_index].shape, effective_weight(params[l.param_index].value, l));
  }
  const Matrix before = model.outputs(substitute(params, idx, eff), data.all()).value();

  ParamSet base = params;
  merge_and_reset(d, base);
  CHECK(d.is_zero());
  const Matrix after = model.outputs(constant_tensors<double>(base), data.all()).value();
  CHECK(bit_identical(before, after));

  // Merging a zero delta changes nothing.
  ParamSet again = base;
  merge_and_reset(d, again);
  CHECK(bit_identical(again, base));

  // A new mask starts from zero on its own support.
  const SparseDelta fresh = attach(magnitude_mask(model, base, 0.1), base);
  CHECK(fresh.is_zero());
  CHECK(fresh.stored() < mask.nnz());
}

TEST_CASE("adapter export and reload") {
  const ModelConfig cfg = fixtures::mlp({4, 8, 3});
  auto [model, params] = build_model(cfg, 2);
  const SparsityMask mask = magnitude_mask(model, params, 0.25);
  SparseDelta d = attach(mask, params);
  for (auto& l : d.layers()) l.values.setConstant(0.125);
  const auto dir = std::filesystem::temp_directory_path();
  const auto ckpt = dir / "speft_test_merged.ckpt";
  const auto adapter = dir / "speft_test.adapter";
  export_merged(ckpt, cfg, params, d);
  export_adapter(adapter, mask, d, params);

  const Dataset data = fixtures::random_data(cfg, 10, 1);
  const ParamSet reloaded = load_checkpoint(ckpt).second;
  const ParamSet applied = apply_adapter(params, load_adapter(adapter));
  CHECK(bit_identical(reloaded, merged(params, d)));
  CHECK(bit_identical(applied, merged(params, d)));
  CHECK(evaluate(model, reloaded, data).loss == evaluate(model, merged(params, d), data).loss);

  // Adapter size: 8 index bytes plus 8 value bytes per entry, plus headers.
  const auto bytes = std::filesystem::file_size(adapter);
  CHECK(bytes >= static_cast<std::uintmax_t>(16 * mask.nnz()));
  CHECK(bytes < static_cast<std::uintmax_t>(16 * mask.nnz() + 4096));

  // A zero delta exports the base weights.
  d.zero();
  export_merged(ckpt, cfg, params, d);
  CHECK(bit_identical(load_checkpoint(ckpt).second, params));

  ParamSet other = params;
  other[0].value(0, 0) += 1.0;
  CHECK_THROWS_WITH_AS(apply_adapter(other, load_adapter(adapter)), doctest::Contains("trained on base"), ConfigError);
  std::filesystem::remove(ckpt);
  std::filesystem::remove(adapter);
}

TEST_CASE("storage accounting") {
  ParamSet ps;
  ps.add({"w", {1000, 1000}, Matrix::Zero(1000, 1000), ParamRole::weight});
  SparsityMask m;
  std::vector<std::uint64_t> idx(3500);
  std::iota(idx.begin(), idx.end(), std::uint64_t{0});
  m.layers.push_back({"w", 0, 1000, 1000, idx});
  CHECK(storage_report(m, ps, DType::f32).index_fraction == doctest::Approx(0.007));
  CHECK(storage_report(m, ps, DType::f64).index_fraction == doctest::Approx(0.0035));
}
