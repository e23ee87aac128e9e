// Copyright 2026 The MultiVul Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "doctest.h"

#include <cmath>
#include <random>

#include "../support.hpp"
#include "multivul/diff.hpp"
#include "multivul/errors.hpp"

using namespace multivul;
using namespace multivul::diff;

namespace {

std::vector<double> grad_of(Parameter& p, const std::function<Var(Tape&)>& f) {
  p.zero_grad();
  Tape tape;
  Var loss = f(tape);
  tape.backward(loss.id());
  return {p.grad.values().begin(), p.grad.values().end()};
}

}  // namespace

TEST_CASE("forward values of simple primitives") {
  Tape t;
  auto v = row_l2_normalize(constant(t, Tensor::matrix(1, 2, {3, 4}))).value();
  CHECK(v(0, 0) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(v(0, 1) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(sigmoid(constant(t, Tensor::matrix(1, 1, {0.0}))).value().item() == 0.5);
  auto s = row_softmax(constant(t, Tensor::matrix(1, 3, {1, 1, 1}))).value();
  for (double x : s.values()) CHECK(x == doctest::Approx(1.0 / 3.0));
  CHECK(gelu(constant(t, Tensor::scalar(0.0))).value().item() == 0.0);
  // gelu(1) = Phi(1) = 0.8413447460685429
  CHECK(gelu(constant(t, Tensor::scalar(1.0))).value().item() ==
        doctest::Approx(0.8413447460685429).epsilon(1e-14));
}

TEST_CASE("row log-sum-exp is stable at large magnitudes") {
  Tape t;
  auto v = row_log_sum_exp(constant(t, Tensor::matrix(1, 2, {1000, 1000}))).value();
  CHECK(v.item() == doctest::Approx(1000 + std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("backward: textbook gradients") {
  Parameter x("x", Tensor::matrix(1, 3, {1, 2, 3}));
  auto g = grad_of(x, [&](Tape& t) {
    Var v = bind(t, x);
    return sum_all(hadamard(v, v));
  });
  CHECK(g == std::vector<double>{2, 4, 6});

  Parameter y("y", Tensor::matrix(1, 4, {5, -1, 2, 7}));
  g = grad_of(y, [&](Tape& t) { return mean_all(bind(t, y)); });
  CHECK(g == std::vector<double>{0.25, 0.25, 0.25, 0.25});

  Parameter z("z", Tensor::matrix(1, 2, {0, 0}));
  g = grad_of(z, [&](Tape& t) { return row_log_sum_exp(bind(t, z)); });
  CHECK(g == std::vector<double>{0.5, 0.5});
}

TEST_CASE("backward accumulates and is linear in independent terms") {
  std::mt19937_64 rng(3);
  Parameter a("a", testing::random_matrix(2, 3, rng));
  auto term1 = [&](Tape& t) { return sum_all(exp(bind(t, a))); };
  auto term2 = [&](Tape& t) { return mean_all(sigmoid(bind(t, a))); };
  auto g1 = grad_of(a, term1);
  auto g2 = grad_of(a, term2);
  auto both = grad_of(a, [&](Tape& t) { return term1(t) + term2(t); });
  for (std::size_t i = 0; i < both.size(); ++i) {
    CHECK(both[i] == doctest::Approx(g1[i] + g2[i]).epsilon(1e-14));
  }
  // Two backward passes without zeroing add up.
  a.zero_grad();
  for (int k = 0; k < 2; ++k) {
    Tape t;
    Var l = term1(t);
    t.backward(l.id());
  }
  for (std::size_t i = 0; i < g1.size(); ++i) {
    CHECK(a.grad.values()[i] == doctest::Approx(2 * g1[i]).epsilon(1e-14));
  }
}

TEST_CASE("grad_check passes for every primitive") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    for (auto& c : testing::primitive_cases(seed)) {
      CAPTURE(c.name);
      CHECK(testing::check(c) < 1e-4);
    }
  }
}

TEST_CASE("grad_check of a constant function is zero") {
  Parameter a("a", Tensor::matrix(1, 2, {1, 2}));
  Parameter* ps[] = {&a};
  CHECK(grad_check([](Tape& t) { return constant(t, Tensor::scalar(3.0)); },
                   ps, 1e-4) == 0.0);
}

TEST_CASE("grad_check rejects non-finite values and bad steps") {
  Parameter a("a", Tensor::matrix(1, 1, {-1.0}));
  Parameter* ps[] = {&a};
  CHECK_THROWS_AS(grad_check([&](Tape& t) { return log(bind(t, a)); }, ps, 1e-4),
                  ContractError);
  CHECK_THROWS_AS(grad_check([&](Tape& t) { return sum_all(bind(t, a)); }, ps, 0.0),
                  ContractError);
}

TEST_CASE("shape errors name the primitive and both shapes") {
  Tape t;
  Var a = constant(t, Tensor::zeros({2, 3}));
  Var b = constant(t, Tensor::zeros({2, 3}));
  try {
    (void)matmul(a, b);
    FAIL("expected a shape error");
  } catch (const ContractError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find(a.value().shape_string()) != std::string::npos);
  }
  CHECK_THROWS_AS((void)(a + constant(t, Tensor::zeros({3, 2}))), ContractError);
  CHECK_THROWS_AS(
      (void)row_squared_distance(a, constant(t, Tensor::zeros({1, 3}))),
      ContractError);
  CHECK_THROWS_AS((void)embedding_lookup(a, {2}), ContractError);
}

TEST_CASE("non-finite values and non-scalar losses are rejected") {
  Tape t;
  CHECK_THROWS_AS((void)log(constant(t, Tensor::matrix(1, 1, {-1.0}))),
                  ContractError);
  CHECK_THROWS_AS((void)exp(constant(t, Tensor::matrix(1, 1, {1e6}))),
                  ContractError);
  CHECK_THROWS_AS(
      t.constant(Tensor::matrix(1, 1, {std::numeric_limits<double>::quiet_NaN()})),
      ContractError);
  Var m = constant(t, Tensor::zeros({2, 2}));
  CHECK_THROWS_AS(t.backward(m.id()), ContractError);
  CHECK_THROWS_WITH_AS((void)row_l2_normalize(m), doctest::Contains("degenerate embedding"),
                       ContractError);
}

TEST_CASE("forward evaluation is deterministic") {
  std::mt19937_64 r1(9), r2(9);
  auto run = [](std::mt19937_64& rng) {
    Tape t;
    Var a = constant(t, testing::random_matrix(4, 6, rng));
    Var b = constant(t, testing::random_matrix(6, 3, rng));
    return row_softmax(gelu(matmul(a, b))).value();
  };
  CHECK(run(r1) == run(r2));
}

TEST_CASE("tensor construction validates shapes") {
  CHECK_THROWS_AS(Tensor({2, 2}, {1, 2, 3}), ContractError);
  CHECK_THROWS_AS(Tensor({0, 2}, {}), ContractError);
  CHECK(Tensor::scalar(2.5).item() == 2.5);
  CHECK_THROWS_AS((void)Tensor::zeros({2, 1}).item(), ContractError);
}
