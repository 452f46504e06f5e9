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

#include "p4d/metrics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include "p4d/rng.hpp"
#include "support/metric_oracles.hpp"

namespace p4d {
namespace {

const ClassTable kClasses = ClassTable::Default();  // 0,1 stuff; 2,3 things

std::vector<PointLabel> Repeat(PointLabel l, int n) { return std::vector<PointLabel>(n, l); }

std::vector<PointLabel> Concat(std::initializer_list<std::vector<PointLabel>> parts) {
  std::vector<PointLabel> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

using testing::OraclePqScan;
using testing::OracleSAssoc;
using testing::OracleSCls;
using testing::PqTriple;

std::vector<PointLabel> RandomLabels(Rng& rng, int n) {
  std::vector<PointLabel> out(n);
  for (auto& l : out) {
    l.semantic = static_cast<int>(rng.index(4));
    l.instance = kClasses.thing(l.semantic) ? 1 + static_cast<int>(rng.index(3)) : 0;
    if (rng.bernoulli(0.1)) l = {kIgnoreLabel, 0};
  }
  return out;
}

// Noisy copies so scores land away from 0 and 1.
std::vector<PointLabel> Perturb(Rng& rng, const std::vector<PointLabel>& gt) {
  std::vector<PointLabel> out = gt;
  for (auto& l : out) {
    if (l.semantic == kIgnoreLabel) l = {0, 0};
    if (rng.bernoulli(0.3)) l.semantic = static_cast<int>(rng.index(4));
    if (rng.bernoulli(0.3)) l.instance = static_cast<int>(rng.index(5));
  }
  return out;
}

// ---- S_cls -------------------------------------------------------------------

TEST(SClsTest, PerfectAndInstanceAgnostic) {
  const auto gt = Concat({Repeat({0, 0}, 4), Repeat({2, 1}, 3), Repeat({2, 2}, 3)});
  EXPECT_EQ(s_cls(gt, gt, kClasses).mean_iou, 1.0);
  auto pred = gt;
  for (auto& l : pred) l.instance = 9;
  EXPECT_EQ(s_cls(pred, gt, kClasses).mean_iou, 1.0);
}

TEST(SClsTest, HalfRightOneSpuriousClass) {
  const auto gt = Repeat({0, 0}, 10);
  const auto pred = Concat({Repeat({0, 0}, 5), Repeat({1, 0}, 5)});
  const ClassScores s = s_cls(pred, gt, kClasses);
  EXPECT_DOUBLE_EQ(s.iou[0], 0.5);
  EXPECT_DOUBLE_EQ(s.iou[1], 0.0);
  EXPECT_TRUE(std::isnan(s.iou[2]));
  EXPECT_DOUBLE_EQ(s.mean_iou, 0.25);
  EXPECT_DOUBLE_EQ(s.iou_stuff, 0.25);
  EXPECT_DOUBLE_EQ(s.iou_things, 1.0);  // no thing class present
}

TEST(SClsTest, IgnoredPointsDropped) {
  const auto gt = Concat({Repeat({0, 0}, 3), Repeat({kIgnoreLabel, 0}, 3)});
  const auto pred = Concat({Repeat({0, 0}, 3), Repeat({1, 0}, 3)});
  EXPECT_EQ(s_cls(pred, gt, kClasses).mean_iou, 1.0);
  const ConfusionMatrix cm = ConfusionMatrix::from(pred, gt, 4);
  EXPECT_EQ(cm.counts.sum(), 3.0);
}

TEST(SClsTest, OutOfRangePredictionIsFalseNegative) {
  const auto gt = Repeat({0, 0}, 4);
  const auto pred = Concat({Repeat({0, 0}, 3), Repeat({17, 0}, 1)});
  EXPECT_DOUBLE_EQ(s_cls(pred, gt, kClasses).iou[0], 0.75);
  EXPECT_THROW(s_cls(pred, Repeat({0, 0}, 3), kClasses), ContractError);
}

// ---- S_assoc -----------------------------------------------------------------

TEST(SAssocTest, PerfectTracking) {
  const auto gt = Concat({Repeat({2, 1}, 5), Repeat({3, 2}, 5), Repeat({0, 0}, 5)});
  EXPECT_EQ(s_assoc(gt, gt, kClasses), 1.0);
}

TEST(SAssocTest, SplitTubeScoresHalf) {
  const auto gt = Repeat({2, 1}, 10);
  const auto pred = Concat({Repeat({2, 1}, 5), Repeat({2, 2}, 5)});
  EXPECT_DOUBLE_EQ(s_assoc(pred, gt, kClasses), 0.5);
}

TEST(SAssocTest, NoOverlapIsZeroAndNoTubesIsOne) {
  const auto gt = Concat({Repeat({2, 1}, 4), Repeat({0, 0}, 4)});
  const auto pred = Concat({Repeat({2, 0}, 4), Repeat({0, 3}, 4)});
  EXPECT_EQ(s_assoc(pred, gt, kClasses), 0.0);
  const auto stuff = Repeat({0, 0}, 4);
  EXPECT_EQ(s_assoc(stuff, stuff, kClasses), 1.0);
}

TEST(SAssocTest, InvariantToSemanticRelabeling) {
  Rng rng(2);
  const auto gt = RandomLabels(rng, 40);
  const auto pred = Perturb(rng, gt);
  auto relabeled = pred;
  for (auto& l : relabeled) l.semantic = (l.semantic + 1) % 4;
  EXPECT_EQ(s_assoc(pred, gt, kClasses), s_assoc(relabeled, gt, kClasses));
}

TEST(SAssocTest, OneOnlyForExactPartition) {
  const auto gt = Concat({Repeat({2, 1}, 3), Repeat({2, 2}, 3)});
  const auto renamed = Concat({Repeat({2, 8}, 3), Repeat({2, 5}, 3)});
  EXPECT_EQ(s_assoc(renamed, gt, kClasses), 1.0);
  const auto merged = Repeat({2, 1}, 6);
  EXPECT_LT(s_assoc(merged, gt, kClasses), 1.0);
  EXPECT_DOUBLE_EQ(s_assoc(merged, gt, kClasses), 0.5);
}

TEST(SAssocTest, OverlapsBoundedBySizes) {
  Rng rng(3);
  const auto gt = RandomLabels(rng, 60);
  const auto pred = Perturb(rng, gt);
  const AssociationTable t = AssociationTable::from(pred, gt, kClasses);
  double overlap = 0, ps = 0, gs = 0;
  for (const auto& [k, v] : t.overlap) overlap += v;
  for (const auto& [k, v] : t.pred_size) ps += v;
  for (const auto& [k, v] : t.gt_size) gs += v;
  EXPECT_LE(overlap, std::min(ps, gs));
}

// ---- LSTQ --------------------------------------------------------------------

TEST(LstqTest, Arithmetic) {
  EXPECT_NEAR(lstq(0.64, 0.81), 0.72, 1e-15);
  EXPECT_EQ(lstq(0.3, 0.0), 0.0);
  EXPECT_EQ(lstq(1.0, 1.0), 1.0);
  EXPECT_THROW(lstq(1.1, 0.5), ContractError);
  EXPECT_THROW(lstq(0.5, -0.1), ContractError);
}

// ---- PQ ----------------------------------------------------------------------

TEST(PqTest, OneMatchPlusFalsePositive) {
  // gt car 1 on five points; pred car 7 on three of them (IoU 0.6) and car 8
  // on the other two (IoU 0.4, a false positive).
  const auto gt = Repeat({2, 1}, 5);
  const auto pred = Concat({Repeat({2, 7}, 3), Repeat({2, 8}, 2)});
  const PqResult r = pq_scan(pred, gt, kClasses);
  EXPECT_DOUBLE_EQ(r.per_class[2].sq(), 0.6);
  EXPECT_DOUBLE_EQ(r.per_class[2].rq(), 2.0 / 3.0);
  EXPECT_NEAR(r.pq, 0.4, 1e-15);
}

TEST(PqTest, PerfectSegmentation) {
  const auto gt = Concat({Repeat({0, 0}, 4), Repeat({2, 1}, 3), Repeat({3, 2}, 3)});
  const PqResult r = pq_scan(gt, gt, kClasses);
  EXPECT_EQ(r.pq, 1.0);
  EXPECT_EQ(r.sq, 1.0);
  EXPECT_EQ(r.rq, 1.0);
}

TEST(PqTest, AtMostOneMatchPerSegment) {
  // Adversarial: one gt segment exactly split in half; neither half exceeds 0.5.
  const auto gt = Repeat({2, 1}, 8);
  const auto pred = Concat({Repeat({2, 1}, 4), Repeat({2, 2}, 4)});
  const PqResult r = pq_scan(pred, gt, kClasses);
  EXPECT_EQ(r.per_class[2].tp, 0.0);
  EXPECT_EQ(r.per_class[2].fp, 2.0);
  EXPECT_EQ(r.per_class[2].fn, 1.0);
}

// ---- brute-force agreement on random scenes ---------------------------------

TEST(OracleTest, RandomScenesAgree) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const auto gt = RandomLabels(rng, 30);
    const auto pred = Perturb(rng, gt);
    EXPECT_NEAR(s_cls(pred, gt, kClasses).mean_iou, OracleSCls(pred, gt), 1e-12) << seed;
    EXPECT_NEAR(s_assoc(pred, gt, kClasses), OracleSAssoc(pred, gt), 1e-12) << seed;
    const PqResult q = pq_scan(pred, gt, kClasses);
    const PqTriple o = OraclePqScan(pred, gt);
    EXPECT_NEAR(q.pq, o.pq, 1e-12) << seed;
    EXPECT_NEAR(q.sq, o.sq, 1e-12) << seed;
    EXPECT_NEAR(q.rq, o.rq, 1e-12) << seed;
  }
}

TEST(EvaluateTest, ReportInvariants) {
  Rng rng(7);
  LabelSequence gt, pred;
  for (int s = 0; s < 3; ++s) {
    gt.push_back(RandomLabels(rng, 25));
    pred.push_back(Perturb(rng, gt.back()));
  }
  const MetricReport r = evaluate(pred, gt, kClasses);
  EXPECT_NEAR(r.lstq * r.lstq, r.s_cls * r.s_assoc, 1e-12);
  for (double v : {r.lstq, r.s_assoc, r.s_cls, r.iou_stuff, r.iou_things, r.pq, r.sq, r.rq}) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  double pq = 0;
  for (int s = 0; s < 3; ++s) pq += OraclePqScan(pred[s], gt[s]).pq;
  EXPECT_NEAR(r.pq, pq / 3.0, 1e-12);
  EXPECT_NEAR(r.s_cls, OracleSCls(flatten(pred), flatten(gt)), 1e-12);

  pred[1].pop_back();
  EXPECT_THROW(evaluate(pred, gt, kClasses), ContractError);
  pred.pop_back();
  EXPECT_THROW(evaluate(pred, gt, kClasses), ContractError);
}

TEST(EvaluateTest, CsvColumns) {
  const LabelSequence gt = {Repeat({0, 0}, 3)};
  std::ostringstream os;
  write_report_csv(os, evaluate(gt, gt, kClasses), kClasses);
  const std::string header = os.str().substr(0, os.str().find('\n'));
  EXPECT_EQ(header,
            "LSTQ,S_assoc,S_cls,IoU_St,IoU_Th,PQ,SQ,RQ,IoU_road,IoU_building,IoU_car,"
            "IoU_person");
  EXPECT_NE(format_report_table(evaluate(gt, gt, kClasses), kClasses).find("LSTQ"),
            std::string::npos);
}

}  // namespace
}  // namespace p4d
