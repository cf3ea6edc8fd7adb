/* Copyright 2026 The AtlasFuse Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include <doctest.h>

#include <functional>

#include "atlasfuse/autograd.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace atlasfuse;
using ad::Var;
using testutil::error_of;

namespace {

using Fn = std::function<Var(const std::vector<Var>&)>;

// Compares reverse-mode gradients of sum(f(inputs) .* R) to central differences.
double max_grad_error(const Fn& f, std::vector<Matrix> inputs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Var> vars;
  for (const auto& m : inputs) vars.push_back(Var::parameter(m));
  const Var out = f(vars);
  const Matrix weights = oracle::random_matrix(rng, static_cast<int>(out.rows()),
                                               static_cast<int>(out.cols()));
  Var loss = ad::sum(ad::mul(out, Var::constant(weights)));
  loss.backward();

  auto eval = [&](const std::vector<Matrix>& xs) {
    std::vector<Var> cs;
    for (const auto& m : xs) cs.push_back(Var::constant(m));
    return f(cs).value().cwiseProduct(weights).sum();
  };
  double worst = 0.0;
  const double h = 1e-6;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Matrix g = vars[k].grad();
    for (Index i = 0; i < inputs[k].size(); ++i) {
      std::vector<Matrix> plus = inputs, minus = inputs;
      plus[k].data()[i] += h;
      minus[k].data()[i] -= h;
      const double num = (eval(plus) - eval(minus)) / (2 * h);
      const double err = std::abs(num - g.data()[i]) / std::max({std::abs(num), std::abs(g.data()[i]), 1e-3});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

Matrix rnd(std::mt19937_64& rng, int r, int c) { return oracle::random_matrix(rng, r, c); }

}  // namespace

TEST_CASE("autograd: elementwise and linear ops") {
  std::mt19937_64 rng(1);
  const Matrix a = rnd(rng, 3, 4), b = rnd(rng, 3, 4), c = rnd(rng, 4, 2);
  const Matrix row = rnd(rng, 1, 4);
  CHECK(max_grad_error([](auto& v) { return ad::matmul(v[0], v[1]); }, {a, c}, 1) < 1e-6);
  CHECK(max_grad_error([](auto& v) { return ad::add(v[0], v[1]); }, {a, b}, 2) < 1e-6);
  CHECK(max_grad_error([](auto& v) { return ad::sub(v[0], v[1]); }, {a, b}, 3) < 1e-6);
  CHECK(max_grad_error([](auto& v) { return ad::mul(v[0], v[1]); }, {a, b}, 4) < 1e-6);
  CHECK(max_grad_error([](auto& v) { return ad::scale(v[0], -2.5); }, {a}, 5) < 1e-6);
  CHECK(max_grad_error([](auto& v) { return ad::add_row(v[0], v[1]); }, {a, row}, 6) < 1e-6);
  CHECK(max_grad_error([](auto& v) { return ad::relu(v[0]); }, {a}, 7) < 1e-6);
  CHECK(max_grad_error([](auto& v) { return ad::abs(v[0]); }, {a}, 8) < 1e-6);
  CHECK(max_grad_error([](auto& v) { return ad::exp(v[0]); }, {a}, 9) < 1e-6);
  const Matrix pos = a.cwiseAbs().array() + 0.1;
  CHECK(max_grad_error([](auto& v) { return ad::log(v[0]); }, {pos}, 10) < 1e-6);
  CHECK(max_grad_error([](auto& v) { return ad::xlogx(v[0]); }, {pos}, 11) < 1e-6);
  const Matrix mask = (b.array() > 0).cast<double>();
  CHECK(max_grad_error([&](auto& v) { return ad::mask_mul(v[0], mask); }, {a}, 12) < 1e-6);
}

TEST_CASE("autograd: row-wise and structural ops") {
  std::mt19937_64 rng(2);
  const Matrix a = rnd(rng, 3, 5), b = rnd(rng, 2, 5), g = rnd(rng, 1, 5), be = rnd(rng, 1, 5);
  CHECK(max_grad_error([](auto& v) { return ad::row_softmax(v[0]); }, {a}, 1) < 1e-6);
  CHECK(max_grad_error([](auto& v) { return ad::log_row_softmax(v[0]); }, {a}, 2) < 1e-6);
  CHECK(max_grad_error([](auto& v) { return ad::layer_norm(v[0], v[1], v[2]); }, {a, g, be}, 3) <
        1e-5);
  CHECK(max_grad_error([](auto& v) { return ad::row_normalize(v[0]); }, {a}, 4) < 1e-6);
  CHECK(max_grad_error([](auto& v) { return ad::row_normalize(v[0], 1e-3); }, {a}, 4) < 1e-6);
  CHECK(max_grad_error([](auto& v) { return ad::transpose(v[0]); }, {a}, 5) < 1e-6);
  CHECK(max_grad_error([](auto& v) { return ad::vstack({v[0], v[1]}); }, {a, b}, 6) < 1e-6);
  CHECK(max_grad_error([](auto& v) { return ad::hstack({v[0], ad::transpose(v[1])}); },
                       {rnd(rng, 5, 2), rnd(rng, 3, 5)}, 7) < 1e-6);
  CHECK(max_grad_error([](auto& v) { return ad::slice_rows(v[0], 1, 2); }, {a}, 8) < 1e-6);
  CHECK(max_grad_error([](auto& v) { return ad::flatten_row(v[0]); }, {a}, 9) < 1e-6);
  CHECK(max_grad_error([](auto& v) { return ad::col_mean(v[0]); }, {a}, 10) < 1e-6);
  CHECK(max_grad_error([](auto& v) { return ad::sum(v[0]); }, {a}, 11) < 1e-6);
}

TEST_CASE("autograd: shared subexpressions accumulate") {
  const Var x = Var::parameter(Matrix::Constant(1, 1, 3.0));
  const Var y = ad::mul(x, x);
  const Var z = ad::add(y, ad::scale(y, 2.0));
  z.backward();
  CHECK(x.grad()(0, 0) == doctest::Approx(18.0));
}

TEST_CASE("autograd: values and errors") {
  Matrix flat = Matrix::Zero(2, 3);
  flat(0, 0) = 3;
  flat(0, 2) = 4;
  const Var n = ad::row_normalize(Var::constant(flat), 1e-8);
  CHECK(n.value()(0, 2) == doctest::Approx(0.8));
  CHECK(n.value().row(1).isZero());
  CHECK(error_of([&] { ad::row_normalize(Var::constant(flat)); }) == ErrorCode::kZeroNormRow);

  Matrix huge(1, 3);
  huge << 1e308, -1e308, 0;
  const Var s = ad::row_softmax(Var::constant(huge));
  CHECK(s.value()(0, 0) == doctest::Approx(1.0));
  huge(0, 1) = std::numeric_limits<double>::infinity();
  CHECK(error_of([&] { ad::row_softmax(Var::constant(huge)); }) ==
        ErrorCode::kNonFiniteActivation);

  Matrix m(2, 2);
  m << 1, 2, 3, 4;
  const Var f = ad::flatten_row(Var::constant(m));
  CHECK(f.value()(0, 1) == 2.0);
  CHECK(f.value()(0, 2) == 3.0);
  CHECK(ad::xlogx(Var::constant(Matrix::Zero(1, 1))).scalar() == 0.0);
  CHECK(error_of([&] { ad::matmul(Var::constant(m), Var::constant(Matrix::Zero(3, 1))); }) ==
        ErrorCode::kShapeMismatch);
}
