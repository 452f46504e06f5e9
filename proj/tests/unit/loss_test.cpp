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

#include "p4d/loss.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "p4d/rng.hpp"

namespace p4d {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

VectorXd Vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Eigen::Index>(v.size()));
  std::copy(v.begin(), v.end(), out.data());
  return out;
}

MatrixXd Random(Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = scale * rng.normal();
  return m;
}

// Random targets: T segments over K0 voxels, every voxel in exactly one.
Targets RandomTargets(Rng& rng, int t, int k0, int num_classes) {
  Targets tg;
  tg.masks.setZero(t, k0);
  for (int v = 0; v < k0; ++v) tg.masks(v < t ? v : rng.index(t), v) = 1.0;
  tg.boxes.setZero(t, 6);
  for (int s = 0; s < t; ++s) {
    tg.classes.push_back(static_cast<int>(rng.index(num_classes)));
    const bool thing = s % 2 == 1;
    tg.is_thing.push_back(thing);
    tg.instance_ids.push_back(thing ? s : 0);
    if (thing) {
      for (int j = 0; j < 6; ++j) tg.boxes(s, j) = rng.uniform();
    }
  }
  return tg;
}

struct Outputs {
  ad::Tape tape;
  MaskModuleOutput out;
  Outputs(const MatrixXd& h, const MatrixXd& c, const MatrixXd& b) {
    out.heatmap_logits = tape.leaf(h);
    out.class_logits = tape.leaf(c);
    out.boxes = tape.leaf(b);
  }
};

TEST(MaskModuleTest, ZeroNetwork) {
  ad::ParameterStore store;
  Rng rng(0);
  MaskModule mm(store, 8, 12, 3, rng);
  mm.set_zero();
  ad::Tape t;
  const ad::Var f0 = t.constant(Random(rng, 50, 12));
  const ad::Var feats = mm.mask_features(t, f0);
  const MaskModuleOutput out = mm(t, t.constant(MatrixXd::Zero(10, 8)), feats);
  EXPECT_EQ(out.heatmap_logits.rows(), 10);
  EXPECT_EQ(out.heatmap_logits.cols(), 50);
  EXPECT_EQ(out.heatmap_logits.value(), MatrixXd::Zero(10, 50));
  EXPECT_EQ(out.boxes.value(), MatrixXd::Constant(10, 6, 0.5));
  const ad::Var probs = ad::softmax_rows(out.class_logits);
  for (Eigen::Index i = 0; i < probs.value().size(); ++i) {
    EXPECT_NEAR(probs.value()(i), 0.25, 1e-15);
  }
  EXPECT_THROW(mm.mask_features(t, t.constant(MatrixXd::Zero(50, 11))), ShapeError);
  EXPECT_THROW(mm(t, t.constant(MatrixXd::Zero(10, 7)), feats), ShapeError);
}

TEST(ScalarLossTest, Dice) {
  EXPECT_NEAR(dice_loss(Vec({1, 0, 1}), Vec({1, 0, 1})), 0.0, 1e-6);
  EXPECT_NEAR(dice_loss(Vec({1, 0}), Vec({0, 1})), 1.0, 1e-12);
  EXPECT_NEAR(dice_loss(Vec({0.5, 0.5}), Vec({1, 0})), 0.5, 1e-6);
  EXPECT_THROW(dice_loss(Vec({1}), Vec({1, 0})), ShapeError);
}

TEST(ScalarLossTest, BinaryCrossEntropy) {
  EXPECT_NEAR(bce_loss(VectorXd::Constant(5, 0.5), Vec({1, 0, 1, 1, 0})), std::log(2.0),
              1e-12);
  const double extreme = bce_loss(Vec({0.0, 1.0}), Vec({1, 0}));
  EXPECT_TRUE(std::isfinite(extreme));
  EXPECT_NEAR(extreme, -std::log(kProbabilityClamp), 1e-6);
  Rng rng(1);
  const VectorXd logits = Random(rng, 20, 1, 3.0);
  VectorXd target(20);
  for (int i = 0; i < 20; ++i) target(i) = rng.bernoulli(0.5) ? 1.0 : 0.0;
  const VectorXd probs = (1.0 / (1.0 + (-logits.array()).exp())).matrix();
  EXPECT_NEAR(bce_with_logits(logits, target), bce_loss(probs, target), 1e-9);
}

TEST(ScalarLossTest, CrossEntropyAndBox) {
  EXPECT_NEAR(ce_loss(VectorXd::Zero(3), 1), std::log(3.0), 1e-12);
  EXPECT_THROW(ce_loss(VectorXd::Zero(3), 3), ShapeError);
  const VectorXd b = Vec({0.1, 0.2, 0.3, 0.2, 0.4, 0.6});
  EXPECT_EQ(box_l1_loss(b, b), 0.0);
  EXPECT_NEAR(box_l1_loss(VectorXd::Constant(6, 0.5), b), 1.4 / 6.0, 1e-12);
}

TEST(MatchTest, SpecCostExamples) {
  MatrixXd c(2, 2);
  c << 1, 2, 2, 1;
  MatchResult m = match_costs(c);
  EXPECT_EQ(m.pairs, (std::vector<std::pair<int, int>>{{0, 0}, {1, 1}}));
  EXPECT_EQ(m.total_cost, 2.0);
  c << 4, 1, 2, 3;
  m = match_costs(c);
  EXPECT_EQ(m.pairs, (std::vector<std::pair<int, int>>{{0, 1}, {1, 0}}));
  EXPECT_EQ(m.total_cost, 3.0);
}

TEST(MatchTest, MoreTargetsThanQueries) {
  EXPECT_THROW(match_costs(MatrixXd::Zero(2, 3)), CapacityError);
}

TEST(MatchTest, SixBySixAgainstPermutations) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    MatrixXd c(6, 6);
    for (Eigen::Index i = 0; i < c.size(); ++i) c(i) = static_cast<double>(rng.index(100));
    std::vector<int> perm(6);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
      double s = 0.0;
      for (int q = 0; q < 6; ++q) s += c(q, perm[q]);
      best = std::min(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    EXPECT_EQ(match_costs(c).total_cost, best) << "seed " << seed;
  }
}

TEST(MatchTest, UnmatchedQueriesAreMinusOne) {
  MatrixXd c(4, 2);
  c << 5, 5, 0, 9, 9, 0, 5, 5;
  const MatchResult m = match_costs(c);
  EXPECT_EQ(m.query_to_target, (std::vector<int>{-1, 0, 1, -1}));
}

TEST(MatchTest, CostMatrixMatchesScalarLosses) {
  Rng rng(3);
  const int nq = 4, k0 = 15, c = 3;
  const Targets tg = RandomTargets(rng, 3, k0, c);
  Outputs o(Random(rng, nq, k0, 2.0), Random(rng, nq, c + 1), MatrixXd::Zero(nq, 6));
  const LossWeights w;
  const MatrixXd cost = match_cost_matrix(o.out, tg, w);
  for (int q = 0; q < nq; ++q) {
    const VectorXd h = o.out.heatmap_logits.value().row(q).transpose();
    const VectorXd p = (1.0 / (1.0 + (-h.array()).exp())).matrix();
    for (int t = 0; t < tg.size(); ++t) {
      const VectorXd g = tg.masks.row(t).transpose();
      const double expected =
          w.dice * dice_loss(p, g) + w.bce * bce_with_logits(h, g) +
          w.ce * ce_loss(o.out.class_logits.value().row(q).transpose(), tg.classes[t]);
      EXPECT_NEAR(cost(q, t), expected, 1e-10);
    }
  }
}

TEST(TotalLossTest, PerfectPredictionIsNearZero) {
  Rng rng(4);
  const int k0 = 12, c = 3, nq = 5;
  const Targets tg = RandomTargets(rng, 3, k0, c);
  MatrixXd h = MatrixXd::Constant(nq, k0, -40.0);
  MatrixXd cls = MatrixXd::Zero(nq, c + 1);
  MatrixXd boxes = MatrixXd::Constant(nq, 6, 0.5);
  for (int t = 0; t < 3; ++t) {
    for (int v = 0; v < k0; ++v) {
      if (tg.masks(t, v) > 0) h(t, v) = 40.0;
    }
    cls(t, tg.classes[t]) = 40.0;
    boxes.row(t) = tg.boxes.row(t);
  }
  for (int q = 3; q < nq; ++q) cls(q, c) = 40.0;
  Outputs o(h, cls, boxes);
  const MaskModuleOutput outs[] = {o.out};
  const LossResult r = total_loss(outs, tg, LossWeights{});
  EXPECT_LT(r.breakdown.total, 1e-5);
  EXPECT_GE(r.breakdown.total, 0.0);
  EXPECT_EQ(r.breakdown.box, 0.0);
}

TEST(TotalLossTest, InvariantUnderQueryPermutation) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const int nq = 6, k0 = 20, c = 3;
    const Targets tg = RandomTargets(rng, 4, k0, c);
    const MatrixXd h = Random(rng, nq, k0, 2.0), cls = Random(rng, nq, c + 1);
    MatrixXd boxes(nq, 6);
    for (Eigen::Index i = 0; i < boxes.size(); ++i) boxes(i) = rng.uniform();
    std::vector<int> perm(nq);
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = nq - 1; i > 0; --i) std::swap(perm[i], perm[rng.index(i + 1)]);
    MatrixXd hp(nq, k0), cp(nq, c + 1), bp(nq, 6);
    for (int i = 0; i < nq; ++i) {
      hp.row(i) = h.row(perm[i]);
      cp.row(i) = cls.row(perm[i]);
      bp.row(i) = boxes.row(perm[i]);
    }
    Outputs a(h, cls, boxes), b(hp, cp, bp);
    const MaskModuleOutput oa[] = {a.out}, ob[] = {b.out};
    EXPECT_NEAR(total_loss(oa, tg, LossWeights{}).breakdown.total,
                total_loss(ob, tg, LossWeights{}).breakdown.total, 1e-10)
        << "seed " << seed;
  }
}

TEST(TotalLossTest, InvariantUnderTargetReordering) {
  Rng rng(21);
  const int nq = 5, k0 = 16, c = 2;
  const Targets tg = RandomTargets(rng, 4, k0, c);
  Targets rev;
  rev.masks = tg.masks(Eigen::seq(3, 0, -1), Eigen::all);
  rev.boxes = tg.boxes(Eigen::seq(3, 0, -1), Eigen::all);
  for (int t = 3; t >= 0; --t) {
    rev.classes.push_back(tg.classes[t]);
    rev.is_thing.push_back(tg.is_thing[t]);
    rev.instance_ids.push_back(tg.instance_ids[t]);
  }
  Outputs o(Random(rng, nq, k0, 2.0), Random(rng, nq, c + 1), MatrixXd::Constant(nq, 6, 0.3));
  const MaskModuleOutput outs[] = {o.out};
  EXPECT_NEAR(total_loss(outs, tg, LossWeights{}).breakdown.total,
              total_loss(outs, rev, LossWeights{}).breakdown.total, 1e-10);
}

TEST(TotalLossTest, TermsAreNonNegativeAndSum) {
  Rng rng(5);
  const Targets tg = RandomTargets(rng, 3, 10, 2);
  Outputs o(Random(rng, 4, 10), Random(rng, 4, 3), MatrixXd::Constant(4, 6, 0.2));
  const MaskModuleOutput outs[] = {o.out, o.out};
  const LossResult r = total_loss(outs, tg, LossWeights{});
  EXPECT_EQ(r.matches.size(), 2u);
  EXPECT_GT(r.breakdown.dice, 0.0);
  EXPECT_GT(r.breakdown.bce, 0.0);
  EXPECT_GT(r.breakdown.ce, 0.0);
  EXPECT_GT(r.breakdown.box, 0.0);
  EXPECT_NEAR(r.breakdown.total,
              r.breakdown.dice + r.breakdown.bce + r.breakdown.ce + r.breakdown.box, 1e-12);
  // Deep supervision: two identical outputs double the single-output loss.
  const MaskModuleOutput one[] = {o.out};
  EXPECT_NEAR(r.breakdown.total, 2.0 * total_loss(one, tg, LossWeights{}).breakdown.total,
              1e-12);
}

TEST(TotalLossTest, ZeroBoxWeightDropsOnlyTheBoxTerm) {
  Rng rng(6);
  const Targets tg = RandomTargets(rng, 4, 12, 3);
  Outputs o(Random(rng, 5, 12), Random(rng, 5, 4), MatrixXd::Constant(5, 6, 0.7));
  const MaskModuleOutput outs[] = {o.out};
  LossWeights w;
  const LossResult with_box = total_loss(outs, tg, w);
  w.box = 0.0;
  const LossResult without = total_loss(outs, tg, w);
  EXPECT_EQ(without.breakdown.box, 0.0);
  EXPECT_NEAR(without.breakdown.total, with_box.breakdown.total - with_box.breakdown.box,
              1e-12);
  EXPECT_EQ(without.matches[0].pairs, with_box.matches[0].pairs);
}

TEST(TotalLossTest, BoxGradientNonZeroWhenBoxIsWrong) {
  Rng rng(7);
  const Targets tg = RandomTargets(rng, 2, 8, 2);
  ASSERT_EQ(tg.num_things(), 1);
  Outputs o(Random(rng, 3, 8), Random(rng, 3, 3), MatrixXd::Constant(3, 6, 0.5));
  const MaskModuleOutput outs[] = {o.out};
  const LossResult r = total_loss(outs, tg, LossWeights{});
  o.tape.backward(r.loss);
  const MatrixXd g = o.tape.grad(o.out.boxes);
  int thing_query = -1;
  for (const auto& [q, t] : r.matches[0].pairs) {
    if (tg.is_thing[t]) thing_query = q;
  }
  ASSERT_GE(thing_query, 0);
  EXPECT_GT(g.row(thing_query).cwiseAbs().sum(), 0.0);
  for (int q = 0; q < 3; ++q) {
    if (q != thing_query) EXPECT_EQ(g.row(q).cwiseAbs().sum(), 0.0);
  }
}

TEST(TotalLossTest, GradientMatchesFiniteDifferences) {
  // 20 voxels, 3 queries, 2 targets; the match is held fixed.
  Rng rng(8);
  const Targets tg = RandomTargets(rng, 2, 20, 2);
  ad::ParameterStore store;
  ad::Parameter& h = store.add("h", Random(rng, 3, 20));
  ad::Parameter& c = store.add("c", Random(rng, 3, 3));
  ad::Parameter& b = store.add("b", Random(rng, 3, 6));
  std::vector<MatchResult> matches;
  {
    ad::Tape t;
    MaskModuleOutput out{t.parameter(h), t.parameter(c), t.parameter(b)};
    matches.push_back(hungarian_match(out, tg, LossWeights{}));
  }
  auto params = store.all();
  for (const bool sum_reduced : {false, true}) {
    LossWeights w;
    w.sum_reduced = sum_reduced;
    const double err = ad::finite_difference_check(
        [&](ad::Tape& t) {
          const MaskModuleOutput outs[] = {{t.parameter(h), t.parameter(c), t.parameter(b)}};
          return total_loss(outs, tg, matches, w).loss;
        },
        params, 1e-6);
    EXPECT_LT(err, 1e-6);
  }
}

TEST(TotalLossTest, NoTargetsLeavesOnlyNoObjectTerm) {
  Rng rng(9);
  Targets empty;
  empty.masks.resize(0, 10);
  empty.boxes.resize(0, 6);
  Outputs o(Random(rng, 3, 10), Random(rng, 3, 3), MatrixXd::Constant(3, 6, 0.5));
  const MaskModuleOutput outs[] = {o.out};
  const LossResult r = total_loss(outs, empty, LossWeights{});
  EXPECT_EQ(r.breakdown.dice, 0.0);
  EXPECT_EQ(r.breakdown.box, 0.0);
  double expected = 0.0;
  for (int q = 0; q < 3; ++q) expected += ce_loss(o.out.class_logits.value().row(q).transpose(), 2);
  EXPECT_NEAR(r.breakdown.ce, 2.0 * expected / 3.0, 1e-12);
}

TEST(BuildTargetsTest, MajorityVoteAndOrdering) {
  const ClassTable classes = ClassTable::Default();  // 0,1 stuff; 2,3 things
  Points pts(7, 3);
  pts << 0.1, 0.1, 0.1,  //
      0.2, 0.2, 0.2,     //
      0.3, 0.3, 0.3,     //
      1.5, 0.1, 0.1,     //
      1.6, 0.1, 0.1,     //
      2.5, 0.1, 0.1,     //
      3.5, 0.1, 0.1;
  const std::vector<int> frames(7, 0);
  const VoxelGrid grid = voxelize(pts, frames, 1.0);
  ASSERT_EQ(grid.num_voxels(), 4);
  const std::vector<PointLabel> labels = {
      {2, 5}, {2, 5}, {0, 0},          // voxel 0: car 5 wins 2-1
      {3, 1}, {kIgnoreLabel, 0},       // voxel 1: person 1, ignore does not vote
      {1, 9},                          // voxel 2: building, stuff instance dropped
      {kIgnoreLabel, 0}};              // voxel 3: unlabeled
  const Targets t = build_targets(grid, pts, labels, classes, compute_extent(pts));
  ASSERT_EQ(t.size(), 3);
  EXPECT_EQ(t.classes, (std::vector<int>{1, 3, 2}));
  EXPECT_EQ(t.instance_ids, (std::vector<int>{0, 1, 5}));
  EXPECT_EQ(t.is_thing, (std::vector<bool>{false, true, true}));
  EXPECT_EQ(t.num_things(), 2);
  EXPECT_EQ(t.masks.rowwise().sum(), Eigen::Vector3d(1, 1, 1));
  EXPECT_EQ(t.masks.col(3).sum(), 0.0);
  EXPECT_EQ(t.boxes.row(0).cwiseAbs().sum(), 0.0);
  EXPECT_GT(t.boxes.row(2).cwiseAbs().sum(), 0.0);
  // Every labeled voxel is covered by exactly one segment.
  for (int v = 0; v < 3; ++v) EXPECT_EQ(t.masks.col(v).sum(), 1.0);
}

TEST(BuildTargetsTest, UnknownClassRejected) {
  Points pts(1, 3);
  pts << 0, 0, 0;
  const std::vector<int> frames = {0};
  const VoxelGrid grid = voxelize(pts, frames, 1.0);
  const std::vector<PointLabel> labels = {{7, 0}};
  EXPECT_THROW(build_targets(grid, pts, labels, ClassTable::Default(), compute_extent(pts)),
               ParameterError);
}

}  // namespace
}  // namespace p4d
