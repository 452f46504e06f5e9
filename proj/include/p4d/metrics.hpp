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

// 4D panoptic evaluation: LSTQ = sqrt(S_cls * S_assoc), and PQ = SQ * RQ.
//
// Points with ground-truth semantic kIgnoreLabel are dropped everywhere.
// Tubes are instance point sets over the whole sequence:
//   ground truth: points of thing classes with instance > 0, keyed by instance;
//   prediction:   points with instance > 0, keyed by instance (class-agnostic).
//   S_assoc = 1/|T| sum_t 1/|t| sum_{p : |p n t| > 0} |p n t| IoU(p, t)

#pragma once

#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "p4d/geometry.hpp"
#include "p4d/synth.hpp"

namespace p4d {

// Flattened per-point labels of one sequence.
using LabelSequence = std::vector<std::vector<PointLabel>>;

struct ConfusionMatrix {
  Eigen::MatrixXd counts;  // C x C, (gt, pred); predictions outside [0, C) dropped
  double unmatched_predictions = 0;  // gt labeled, pred outside [0, C)

  static ConfusionMatrix from(std::span<const PointLabel> pred,
                              std::span<const PointLabel> gt, int num_classes);
};

struct ClassScores {
  std::vector<double> iou;     // C, NaN for classes absent from gt and pred
  double mean_iou = 0.0;       // S_cls
  double iou_stuff = 0.0;
  double iou_things = 0.0;
};

ClassScores s_cls(std::span<const PointLabel> pred, std::span<const PointLabel> gt,
                  const ClassTable& classes);

// Overlaps between predicted and ground-truth tubes.
struct AssociationTable {
  std::map<std::pair<int, int>, double> overlap;  // (pred id, gt id) -> count
  std::map<int, double> pred_size;
  std::map<int, double> gt_size;

  static AssociationTable from(std::span<const PointLabel> pred,
                               std::span<const PointLabel> gt, const ClassTable& classes);
};

// 1.0 with a warning when there are no ground-truth thing points.
double s_assoc(std::span<const PointLabel> pred, std::span<const PointLabel> gt,
               const ClassTable& classes);
double s_assoc(const AssociationTable& table);

double lstq(double s_cls, double s_assoc);

struct PqClass {
  double tp = 0, fp = 0, fn = 0;
  double iou_sum = 0;
  double sq() const { return tp > 0 ? iou_sum / tp : 0.0; }
  double rq() const { return tp + fp + fn > 0 ? tp / (tp + 0.5 * fp + 0.5 * fn) : 0.0; }
  double pq() const { return sq() * rq(); }
  bool present() const { return tp + fp + fn > 0; }
};

struct PqResult {
  std::vector<PqClass> per_class;  // C
  double pq = 0, sq = 0, rq = 0;   // means over present classes
};

// One scan. Stuff classes form one segment each; things one per instance.
PqResult pq_scan(std::span<const PointLabel> pred, std::span<const PointLabel> gt,
                 const ClassTable& classes);

struct MetricReport {
  double lstq = 0, s_assoc = 0, s_cls = 0;
  double iou_stuff = 0, iou_things = 0;
  double pq = 0, sq = 0, rq = 0;  // per-scan values averaged over scans
  std::vector<double> class_iou;
};

// Throws ContractError when the per-scan point counts differ.
MetricReport evaluate(const LabelSequence& pred, const LabelSequence& gt,
                      const ClassTable& classes);

std::vector<PointLabel> flatten(const LabelSequence& seq);

// Columns: LSTQ,S_assoc,S_cls,IoU_St,IoU_Th,PQ,SQ,RQ then IoU_<class>.
void write_report_csv(std::ostream& os, const MetricReport& report,
                      const ClassTable& classes);
std::string format_report_table(const MetricReport& report, const ClassTable& classes);

}  // namespace p4d
