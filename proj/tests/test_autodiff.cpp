// Copyright 2026 The SPEFT Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "speft/autodiff.hpp"

using namespace speft;

namespace {

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.begin()->size()));
  Index i = 0;
  for (const auto& r : rows) {
    Index j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

}  // namespace

TEST_CASE("forward ops on small inputs") {
  Tensor<double> a(mat({{1, 2}}));
  Tensor<double> b(mat({{3}, {4}}));
  CHECK(matmul(a, b).item() == 11.0);

  const Matrix r = relu(Tensor<double>(mat({{-1, 0, 2}}))).value();
  CHECK(r(0, 0) == 0.0);
  CHECK(r(0, 1) == 0.0);
  CHECK(r(0, 2) == 2.0);

  Tensor<double> logits(mat({{0, 0}}));
  CHECK(cross_entropy(logits, std::vector<int>{0}).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("gradients of closed forms") {
  SUBCASE("square") {
    auto g = gradient([](const auto& w) { return sum(mul(w[0], w[0])); }, Blocks{mat({{3}})});
    CHECK(g[0](0, 0) == 6.0);
  }
  SUBCASE("linear form") {
    const Matrix c = mat({{2, 5}});
    auto g = gradient([&](const auto& w) { return sum(mul(w[0], Tensor<double>(c))); }, Blocks{mat({{0.3, -1}})});
    CHECK(g[0](0, 0) == 2.0);
    CHECK(g[0](0, 1) == 5.0);
  }
}

TEST_CASE("two-layer MLP gradient agrees with finite differences") {
  // widths [2, 3, 2]: 2*3 + 3 + 3*2 + 2 = 17 parameters.
  const ModelConfig cfg = fixtures::mlp({2, 3, 2});
  auto [model, params] = build_model(cfg, 4);
  REQUIRE(params.total_count() == 17);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0.0, 0.7);
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (Index k = 0; k < params[i].value.size(); ++k) params[i].value.data()[k] = g(rng);
  }
  const Dataset data = fixtures::random_data(cfg, 5, 1);
  const Batch batch = data.all();

  std::vector<Tensor<double>> leaves;
  for (const auto& p : params) leaves.push_back(Tensor<double>::parameter(p.shape, p.value));
  model.loss(leaves, batch).backward();

  ParamSet probe = params;
  const Blocks fd = oracle::fd_gradient(
      [&](const Blocks& t) {
        for (std::size_t i = 0; i < t.size(); ++i) probe[i].value = t[i];
        return model.loss(constant_tensors<double>(probe), batch).item();
      },
      params.values());
  for (std::size_t b = 0; b < fd.size(); ++b) {
    for (Index k = 0; k < fd[b].size(); ++k) {
      CHECK(oracle::rel_err(leaves[b].grad().data()[k], fd[b].data()[k], 1e-4) <= 1e-6);
    }
  }
}

TEST_CASE("gradients accumulate across backward calls with retained graph") {
  Tensor<double> w = Tensor<double>::parameter(mat({{1.5, -2}}));
  Tensor<double> loss = sum(mul(w, w));
  loss.backward(true);
  const Matrix first = w.grad();
  loss.backward();
  CHECK((w.grad() - 2.0 * first).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("a released graph cannot be replayed") {
  Tensor<double> w = Tensor<double>::parameter(mat({{1.0}}));
  Tensor<double> loss = sum(mul(w, w));
  loss.backward();
  CHECK_THROWS_AS(loss.backward(), Error);
}

TEST_CASE("shape mismatches are reported") {
  Tensor<double> a(mat({{1, 2, 3}}));
  Tensor<double> b(mat({{1, 2}}));
  CHECK_THROWS_AS(matmul(a, b), ShapeError);
  CHECK_THROWS_AS(add(a, b), ShapeError);
}

TEST_CASE("hessian-vector products") {
  auto quadratic = [](const Matrix& a) {
    return [a](const auto& w) {
      using S = typename std::decay_t<decltype(w)>::value_type::Mat::Scalar;
      Tensor<S> am(a.cast<S>().eval());
      return scale(sum(mul(w[0], matmul(am, w[0]))), S(0.5));
    };
  };
  const Matrix a = mat({{2, 0}, {0, 1}});
  const Blocks theta{mat({{1}, {1}})};

  SUBCASE("diagonal quadratic") {
    for (const Blocks& hv : {hessian_vector_product(quadratic(a), theta, {mat({{1}, {0}})}),
                             hessian_vector_product_exact(quadratic(a), theta, {mat({{1}, {0}})})}) {
      CHECK(hv[0](0, 0) == doctest::Approx(2.0).epsilon(1e-9));
      CHECK(std::abs(hv[0](1, 0)) < 1e-9);
    }
  }
  SUBCASE("zero direction") {
    const Blocks hv = hessian_vector_product(quadratic(a), theta, {Matrix::Zero(2, 1)});
    CHECK(hv[0].cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("cubic term") {
    // l = t1^2 t2, H = [[2 t2, 2 t1], [2 t1, 0]]; at (1, 2) with v = (1, 1): (6, 2).
    auto cubic = [](const auto& w) {
      using S = typename std::decay_t<decltype(w)>::value_type::Mat::Scalar;
      MatrixX<S> e1(1, 2), e2(2, 1);
      e1 << S(1), S(0);
      e2 << S(0), S(1);
      Tensor<S> t1 = matmul(Tensor<S>(e1), w[0]);
      Tensor<S> t2 = matmul(Tensor<S>(MatrixX<S>(e2.transpose())), w[0]);
      return sum(mul(mul(t1, t1), t2));
    };
    const Blocks at{mat({{1}, {2}})};
    const Blocks v{mat({{1}, {1}})};
    const Blocks exact = hessian_vector_product_exact(cubic, at, v);
    const Blocks fd = hessian_vector_product(cubic, at, v);
    CHECK(exact[0](0, 0) == doctest::Approx(6.0).epsilon(1e-12));
    CHECK(exact[0](1, 0) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(fd[0](0, 0) == doctest::Approx(6.0).epsilon(1e-6));
    CHECK(fd[0](1, 0) == doctest::Approx(2.0).epsilon(1e-6));
  }
}

TEST_CASE("finite-difference step scales with the parameters") {
  const Blocks theta{mat({{3.0, -1.0}})};
  const Blocks v{mat({{0.5, 0.25}})};
  CHECK(hvp_step(theta, v, 1e-4) == doctest::Approx(1e-4 * 4.0 / 0.5));
}

TEST_CASE("forward passes agree across scalar types") {
  const ModelConfig cfg = fixtures::transformer(Architecture::transformer_encoder);
  auto [model, params] = build_model(cfg, 2);
  const Dataset data = fixtures::random_data(cfg, 3, 9);
  const double d = model.loss(constant_tensors<double>(params), data.all()).item();
  const float f = model.loss(constant_tensors<float>(params), data.all()).item();
  CHECK(static_cast<double>(f) == doctest::Approx(d).epsilon(1e-5));
  const Dual<double> dual = model.loss(constant_tensors<Dual<double>>(params), data.all()).item();
  CHECK(dual.v == doctest::Approx(d).epsilon(1e-14));
  CHECK(dual.d == 0.0);
}
