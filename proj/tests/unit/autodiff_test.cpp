// Copyright 2026 The Panoptic4D Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "p4d/autodiff.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "p4d/rng.hpp"
#include "support/primitive_cases.hpp"

namespace p4d::ad {
namespace {

Matrix Random(Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

// Reduces any output to a scalar through fixed random weights so every
// output entry contributes a distinct gradient.
Var Reduce(Tape& t, Var y, std::uint64_t seed) {
  Rng rng(seed + 1000);
  return sum(mul(y, t.constant(Random(rng, y.rows(), y.cols()))));
}

class PrimitiveGradientTest : public ::testing::TestWithParam<testing::PrimitiveCase> {};

TEST_P(PrimitiveGradientTest, MatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    EXPECT_LT(testing::PrimitiveCaseError(GetParam(), seed), 1e-6)
        << GetParam().name << " seed " << seed;
  }
}

INSTANTIATE_TEST_SUITE_P(
    Primitives, PrimitiveGradientTest, ::testing::ValuesIn(testing::PrimitiveCases()),
    [](const ::testing::TestParamInfo<testing::PrimitiveCase>& info) {
      return info.param.name;
    });

Mask SomeMask(Eigen::Index r, Eigen::Index c) { return testing::PatternMask(r, c); }

TEST(AutodiffTest, SigmoidAtZero) {
  Tape t;
  const Var x = t.leaf(Matrix::Zero(1, 1));
  const Var y = sigmoid(x);
  EXPECT_EQ(y.value()(0, 0), 0.5);
  t.backward(y);
  EXPECT_EQ(t.grad(x)(0, 0), 0.25);
}

TEST(AutodiffTest, SquareGradient) {
  Tape t;
  const Var x = t.leaf(Matrix::Constant(1, 1, 3.0));
  t.backward(mul(x, x));
  EXPECT_EQ(t.grad(x)(0, 0), 6.0);
}

TEST(AutodiffTest, SoftmaxUniformAndMasked) {
  Tape t;
  const Var x = t.leaf(Matrix::Zero(1, 3));
  const Matrix s = softmax_rows(x).value();
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(s(0, j), 1.0 / 3.0, 1e-15);

  Mask m(1, 3);
  m << false, true, false;
  Rng rng(1);
  const Var z = t.leaf(Random(rng, 1, 3));
  const Var p = softmax_rows(z, &m);
  EXPECT_EQ(p.value()(0, 0), 0.0);
  EXPECT_EQ(p.value()(0, 1), 1.0);
  EXPECT_EQ(p.value()(0, 2), 0.0);
  t.backward(Reduce(t, p, 3));
  EXPECT_EQ(t.grad(z)(0, 0), 0.0);
  EXPECT_EQ(t.grad(z)(0, 2), 0.0);
}

TEST(AutodiffTest, MaskedSoftmaxRowsAreDistributions) {
  Rng rng(2);
  Tape t;
  const Mask m = SomeMask(6, 7);
  const Matrix p = softmax_rows(t.leaf(Random(rng, 6, 7, 4.0)), &m).value();
  for (int i = 0; i < 6; ++i) {
    EXPECT_NEAR(p.row(i).sum(), 1.0, 1e-14);
    for (int j = 0; j < 7; ++j) {
      EXPECT_GE(p(i, j), 0.0);
      if (!m(i, j)) EXPECT_EQ(p(i, j), 0.0);
    }
  }
}

TEST(AutodiffTest, NonScalarLossRejected) {
  Tape t;
  const Var x = t.leaf(Matrix::Ones(2, 2));
  EXPECT_THROW(t.backward(x), ContractError);
}

TEST(AutodiffTest, DetachedTensorHasZeroGrad) {
  Tape t;
  const Var x = t.leaf(Matrix::Ones(2, 2));
  const Var unused = t.leaf(Matrix::Ones(3, 1));
  t.backward(sum(x));
  EXPECT_EQ(t.grad(unused), Matrix::Zero(3, 1));
}

TEST(AutodiffTest, ShapeErrorsNameTheOp) {
  Tape t;
  const Var a = t.leaf(Matrix::Ones(2, 3));
  const Var b = t.leaf(Matrix::Ones(2, 3));
  try {
    matmul(a, b);
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("matmul"), std::string::npos);
  }
  EXPECT_THROW(mul(a, t.leaf(Matrix::Ones(3, 2))), ShapeError);
}

TEST(AutodiffTest, IndependentSubgraphsConcatenate) {
  Rng rng(4);
  const Matrix xa = Random(rng, 2, 3), xb = Random(rng, 3, 2);
  Tape joint;
  const Var a = joint.leaf(xa), b = joint.leaf(xb);
  joint.backward(add(sum(exp(a)), sum(mul(b, b))));
  Tape ta;
  const Var a2 = ta.leaf(xa);
  ta.backward(sum(exp(a2)));
  Tape tb;
  const Var b2 = tb.leaf(xb);
  tb.backward(sum(mul(b2, b2)));
  EXPECT_EQ(joint.grad(a), ta.grad(a2));
  EXPECT_EQ(joint.grad(b), tb.grad(b2));
}

TEST(AutodiffTest, ParameterGradientsFlush) {
  ParameterStore store;
  Parameter& p = store.add("w", Matrix::Constant(1, 2, 2.0));
  p.zero_grad();
  Tape t;
  t.backward(sum(mul(t.parameter(p), t.parameter(p))));
  EXPECT_EQ(p.grad, Matrix::Constant(1, 2, 4.0));
}

TEST(FiniteDifferenceTest, Quadratic) {
  const double err = finite_difference_check([](Tape&, Var x) { return mul(x, x); },
                                             Matrix::Constant(1, 1, 3.0), 1e-4);
  EXPECT_LT(err, 1e-6);
}

TEST(FiniteDifferenceTest, ConstantFunction) {
  const double err = finite_difference_check(
      [](Tape& t, Var) { return t.constant(Matrix::Constant(1, 1, 5.0)); },
      Matrix::Ones(2, 2), 1e-4);
  EXPECT_LT(err, 1e-12);
}

TEST(FiniteDifferenceTest, RejectsNonPositiveStep) {
  const auto f = [](Tape&, Var x) { return sum(x); };
  EXPECT_THROW(finite_difference_check(f, Matrix::Ones(1, 1), 0.0), ParameterError);
  EXPECT_THROW(finite_difference_check(f, Matrix::Ones(1, 1), -1.0), ParameterError);
}

}  // namespace
}  // namespace p4d::ad
