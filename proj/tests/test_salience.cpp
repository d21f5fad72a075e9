// Copyright 2026 The SPEFT Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "fixtures.hpp"
#include "speft/salience.hpp"

using namespace speft;

namespace {

Blocks one(double x) { return {Matrix::Constant(1, 1, x)}; }
Blocks row(std::initializer_list<double> xs) {
  Matrix m(1, static_cast<Index>(xs.size()));
  Index i = 0;
  for (double x : xs) m(0, i++) = x;
  return {m};
}

SalienceScores run(const Model& model, const ParamSet& params, const std::vector<Batch>& batches, Metric metric,
                   HvpMethod hvp = HvpMethod::finite_difference) {
  FixedStream stream(batches);
  SalienceConfig c;
  c.metric = metric;
  c.batches = static_cast<int>(batches.size());
  c.hvp = hvp;
  return compute_salience(model, params, &stream, c);
}

}  // namespace

TEST_CASE("elementwise formulas") {
  CHECK(scores::magnitude(row({-2, 0.5}))[0] == row({2, 0.5})[0]);
  CHECK(scores::magnitude(one(0))[0](0, 0) == 0.0);
  CHECK(scores::gradient(one(-6))[0](0, 0) == 6.0);
  CHECK(scores::gradient(one(-6), GradientMode::raw)[0](0, 0) == -6.0);
  CHECK(scores::snip(one(2), one(-3))[0](0, 0) == 6.0);
  CHECK(scores::snip(one(0), one(-3))[0](0, 0) == 0.0);
  CHECK(scores::force(one(2), one(-3))[0](0, 0) == 6.0);
  CHECK(scores::force(one(2), one(3))[0](0, 0) == -6.0);
  CHECK(scores::taylor_fo(one(2), one(-3))[0](0, 0) == 36.0);
  CHECK(scores::taylor_fo(row({1, -4}), row({0, 0}))[0].cwiseAbs().maxCoeff() == 0.0);
  CHECK(scores::grasp(one(2), one(0))[0](0, 0) == 0.0);
  CHECK(scores::fisher({row({0.5, -2})})[0] == row({0.25, 4})[0]);
  CHECK(scores::fisher({row({0.5, -2}), row({-0.5, 2})})[0] == row({0.25, 4})[0]);
}

TEST_CASE("metric names") {
  for (Metric m : standard_metrics()) CHECK(parse_metric(to_string(m)) == m);
  CHECK(standard_metrics().size() == 8);
  CHECK_THROWS_WITH_AS(parse_metric("obd"), doctest::Contains("valid metrics"), ConfigError);
  CHECK(is_data_free(Metric::magnitude));
  CHECK(is_data_free(Metric::synflow));
  CHECK_FALSE(is_data_free(Metric::grasp));
  CHECK(gradient_evaluation_multiplier(Metric::grasp) == 2.0);
  CHECK(gradient_evaluation_multiplier(Metric::snip) == 1.0);
}

TEST_CASE("synflow on scalar chains") {
  auto [model, params] = build_model(fixtures::mlp({1, 1, 1}), 0);
  params[0].value(0, 0) = 2.0;
  params[2].value(0, 0) = -3.0;
  SalienceConfig c;
  c.metric = Metric::synflow;
  auto s = compute_salience(model, params, static_cast<BatchStream*>(nullptr), c);
  CHECK(s.scores[0](0, 0) == doctest::Approx(6.0));
  CHECK(s.scores[1](0, 0) == doctest::Approx(6.0));
  params[2].value(0, 0) = 0.0;
  s = compute_salience(model, params, static_cast<BatchStream*>(nullptr), c);
  CHECK(s.scores[0](0, 0) == 0.0);
  CHECK(s.scores[1](0, 0) == 0.0);
}

TEST_CASE("data-aware metrics on a toy model") {
  const ModelConfig cfg = fixtures::mlp({4, 6, 2});
  auto [model, params] = build_model(cfg, 3);
  const Dataset data = fixtures::random_data(cfg, 24, 5);
  std::vector<Batch> batches;
  for (std::size_t b = 0; b < 3; ++b) {
    batches.push_back(data.batch({8 * b, 8 * b + 1, 8 * b + 2, 8 * b + 3, 8 * b + 4, 8 * b + 5, 8 * b + 6, 8 * b + 7}));
  }

  SUBCASE("fisher dominates the squared mean gradient") {
    const auto g = run(model, params, batches, Metric::gradient);
    const auto f = run(model, params, batches, Metric::fisher);
    CHECK(f.batches_used == 3);
    for (std::size_t l = 0; l < g.scores.size(); ++l) {
      CHECK(((f.scores[l] - g.scores[l].cwiseAbs2()).array() >= -1e-15).all());
    }
  }
  SUBCASE("opposite batches cancel in the mean gradient") {
    // With a zero output layer the prediction is 0, so negating the targets
    // negates the output weights' gradient.
    ParamSet zeroed = params;
    for (std::size_t i = 0; i < zeroed.size(); ++i) zeroed[i].value.setZero();
    zeroed[1].value.setConstant(0.5);
    Dataset pair;
    pair.examples = {data.examples[0], data.examples[0]};
    for (auto& t : pair.examples[1].targets) t = -t;
    const auto s = run(model, zeroed, {pair.batch({0}), pair.batch({1})}, Metric::gradient);
    CHECK(run(model, zeroed, {pair.batch({0})}, Metric::gradient).scores.back().cwiseAbs().maxCoeff() > 1e-3);
    CHECK(s.scores.back().cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("grasp with exact and finite-difference products agree") {
    const auto fd = run(model, params, batches, Metric::grasp);
    const auto ex = run(model, params, batches, Metric::grasp, HvpMethod::exact);
    for (std::size_t l = 0; l < fd.scores.size(); ++l) {
      CHECK((fd.scores[l] - ex.scores[l]).cwiseAbs().maxCoeff() <= 1e-6 * (1.0 + ex.scores[l].cwiseAbs().maxCoeff()));
    }
  }
  SUBCASE("estimation is deterministic") {
    for (Metric m : standard_metrics()) {
      const auto a = m == Metric::magnitude || m == Metric::synflow ? run(model, params, {}, m)
                                                                     : run(model, params, batches, m);
      const auto b = m == Metric::magnitude || m == Metric::synflow ? run(model, params, {}, m)
                                                                     : run(model, params, batches, m);
      for (std::size_t l = 0; l < a.scores.size(); ++l) CHECK(bit_identical(a.scores[l], b.scores[l]));
    }
  }
  SUBCASE("a short stream is an error") {
    FixedStream stream({batches[0]});
    SalienceConfig c;
    c.metric = Metric::snip;
    c.batches = 2;
    CHECK_THROWS_AS(compute_salience(model, params, &stream, c), Error);
  }
  SUBCASE("data-aware metric without data") {
    SalienceConfig c;
    c.metric = Metric::taylor_fo;
    CHECK_THROWS_AS(compute_salience(model, params, static_cast<BatchStream*>(nullptr), c), ConfigError);
  }
}

TEST_CASE("scores cover only the matching weights") {
  const ModelConfig cfg = fixtures::transformer(Architecture::transformer_encoder);
  auto [model, params] = build_model(cfg, 1);
  SalienceConfig c;
  c.metric = Metric::magnitude;
  c.target_pattern = "attn";
  const auto s = compute_salience(model, params, static_cast<BatchStream*>(nullptr), c);
  CHECK(s.scores.size() == 4);
  for (const auto& n : s.names) CHECK(n.find("attn") != std::string::npos);
}

TEST_CASE("scores files round-trip") {
  auto [model, params] = build_model(fixtures::mlp({3, 4, 2}), 2);
  SalienceConfig c;
  c.metric = Metric::magnitude;
  const auto s = compute_salience(model, params, static_cast<BatchStream*>(nullptr), c);
  const auto path = std::filesystem::temp_directory_path() / "speft_test_scores.bin";
  save_scores(path, s, params);
  const auto back = load_scores(path);
  CHECK(back.names == s.names);
  for (std::size_t l = 0; l < s.scores.size(); ++l) CHECK(bit_identical(back.scores[l], s.scores[l]));
  std::filesystem::remove(path);
}
