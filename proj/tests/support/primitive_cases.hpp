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

// Differentiable test functions, one per autodiff primitive. Shared by the
// unit tests and the acceptance binary so both cover the same list.

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "p4d/autodiff.hpp"
#include "p4d/rng.hpp"

namespace p4d::testing {

inline ad::Matrix RandomMatrix(Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  ad::Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

inline ad::Matrix Random(Rng& rng, Eigen::Index r, Eigen::Index c) {
  return RandomMatrix(rng, r, c);
}

// Reduces any output to a scalar through fixed random weights so every
// output entry contributes a distinct gradient.
inline ad::Var ReduceWeighted(ad::Tape& t, ad::Var y, std::uint64_t seed) {
  Rng rng(seed + 1000);
  return ad::sum(ad::mul(y, t.constant(RandomMatrix(rng, y.rows(), y.cols()))));
}

struct PrimitiveCase {
  std::string name;
  Eigen::Index rows, cols;
  std::function<ad::Var(ad::Tape&, ad::Var)> op;
};

inline ad::Mask PatternMask(Eigen::Index r, Eigen::Index c) {
  ad::Mask m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = (i + 2 * j) % 3 != 0;
  }
  m.row(r - 1).setConstant(false);
  m(r - 1, 0) = true;
  return m;
}

inline std::vector<PrimitiveCase> PrimitiveCases() {
  using namespace ad;
  static const Mask kMask = PatternMask(3, 4);
  return {

        PrimitiveCase{"matmul_left", 3, 4,
                  [](Tape& t, Var x) {
                    Rng r(7);
                    return matmul(x, t.constant(Random(r, 4, 2)));
                  }},
        PrimitiveCase{"matmul_right", 4, 2,
                  [](Tape& t, Var x) {
                    Rng r(8);
                    return matmul(t.constant(Random(r, 3, 4)), x);
                  }},
        PrimitiveCase{"matmul_self", 3, 3, [](Tape&, Var x) { return matmul(x, x); }},
        PrimitiveCase{"transpose", 2, 5, [](Tape&, Var x) { return transpose(x); }},
        PrimitiveCase{"add_broadcast", 3, 4,
                  [](Tape&, Var x) { return add(x, slice_rows(x, 1, 1)); }},
        PrimitiveCase{"sub", 3, 4, [](Tape&, Var x) { return sub(x, mul(x, x)); }},
        PrimitiveCase{"mul", 3, 4, [](Tape&, Var x) { return mul(x, transpose(transpose(x))); }},
        PrimitiveCase{"div", 3, 4,
                  [](Tape&, Var x) { return div(x, add_scalar(mul(x, x), 1.0)); }},
        PrimitiveCase{"scale_neg", 2, 3, [](Tape&, Var x) { return neg(scale(x, 2.5)); }},
        PrimitiveCase{"relu", 4, 4, [](Tape&, Var x) { return relu(x); }},
        PrimitiveCase{"sigmoid", 4, 4, [](Tape&, Var x) { return sigmoid(x); }},
        PrimitiveCase{"softplus", 4, 4, [](Tape&, Var x) { return softplus(scale(x, 5.0)); }},
        PrimitiveCase{"log", 3, 3, [](Tape&, Var x) { return log(add_scalar(mul(x, x), 0.5)); }},
        PrimitiveCase{"exp", 3, 3, [](Tape&, Var x) { return exp(x); }},
        PrimitiveCase{"abs", 3, 3, [](Tape&, Var x) { return abs(x); }},
        PrimitiveCase{"clamp", 4, 4, [](Tape&, Var x) { return clamp(x, -0.5, 0.5); }},
        PrimitiveCase{"sum", 3, 2, [](Tape&, Var x) { return sum(x); }},
        PrimitiveCase{"mean", 3, 2, [](Tape&, Var x) { return mean(x); }},
        PrimitiveCase{"row_sum", 3, 5, [](Tape&, Var x) { return row_sum(x); }},
        PrimitiveCase{"softmax", 3, 4, [](Tape&, Var x) { return softmax_rows(x); }},
        PrimitiveCase{"softmax_masked", 3, 4,
                  [](Tape&, Var x) { return softmax_rows(x, &kMask); }},
        PrimitiveCase{"log_softmax", 3, 4, [](Tape&, Var x) { return log_softmax_rows(x); }},
        PrimitiveCase{"layer_norm", 3, 5,
                  [](Tape& t, Var x) {
                    Rng r(9);
                    return layer_norm_rows(x, t.constant(Random(r, 1, 5)),
                                           t.constant(Random(r, 1, 5)));
                  }},
        PrimitiveCase{"layer_norm_affine", 1, 5,
                  [](Tape& t, Var g) {
                    Rng r(10);
                    return layer_norm_rows(t.constant(Random(r, 4, 5)), g, g);
                  }},
        PrimitiveCase{"concat_cols", 3, 2,
                  [](Tape&, Var x) {
                    const Var parts[] = {x, mul(x, x), x};
                    return concat_cols(parts);
                  }},
        PrimitiveCase{"concat_rows", 2, 3,
                  [](Tape&, Var x) {
                    const Var parts[] = {x, exp(x)};
                    return concat_rows(parts);
                  }},
        PrimitiveCase{"slice_cols", 3, 5, [](Tape&, Var x) { return slice_cols(x, 1, 3); }},
        PrimitiveCase{"gather_rows", 4, 3,
                  [](Tape&, Var x) {
                    const std::vector<int> idx = {3, 0, 3, 1};
                    return gather_rows(x, idx);
                  }},
        PrimitiveCase{"segment_mean", 5, 3,
                  [](Tape&, Var x) {
                    const std::vector<int> seg = {0, 2, 0, 2, 1};
                    return segment_mean(x, seg, 4);
                  }}};
}

// Worst finite-difference error of one case over `seeds` random inputs.
inline double PrimitiveCaseError(const PrimitiveCase& c, std::uint64_t seed) {
  Rng rng(seed);
  const ad::Matrix x = RandomMatrix(rng, c.rows, c.cols);
  return ad::finite_difference_check(
      [&](ad::Tape& t, ad::Var v) { return ReduceWeighted(t, c.op(t, v), seed); }, x, 1e-5);
}

}  // namespace p4d::testing
