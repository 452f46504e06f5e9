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

#include <glog/logging.h>

#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

namespace p4d {
namespace {

void check_coverage(std::span<const PointLabel> pred, std::span<const PointLabel> gt) {
  if (pred.size() != gt.size()) {
    throw ContractError("metrics: " + std::to_string(pred.size()) + " predicted and " +
                        std::to_string(gt.size()) + " ground-truth points");
  }
}

bool in_range(int c, int num_classes) { return c >= 0 && c < num_classes; }

// Mean over present entries; 1.0 when none is present.
double mean_present(const std::vector<double>& v, const std::vector<bool>& use) {
  double sum = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (use[i] && !std::isnan(v[i])) {
      sum += v[i];
      ++n;
    }
  }
  return n > 0 ? sum / n : 1.0;
}

}  // namespace

ConfusionMatrix ConfusionMatrix::from(std::span<const PointLabel> pred,
                                      std::span<const PointLabel> gt, int num_classes) {
  check_coverage(pred, gt);
  ConfusionMatrix cm;
  cm.counts.setZero(num_classes, num_classes);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i].semantic == kIgnoreLabel) continue;
    if (!in_range(gt[i].semantic, num_classes)) {
      throw ParameterError("metrics: unknown ground-truth class " +
                           std::to_string(gt[i].semantic));
    }
    if (in_range(pred[i].semantic, num_classes)) {
      cm.counts(gt[i].semantic, pred[i].semantic) += 1.0;
    } else {
      cm.unmatched_predictions += 1.0;
    }
  }
  return cm;
}

ClassScores s_cls(std::span<const PointLabel> pred, std::span<const PointLabel> gt,
                  const ClassTable& classes) {
  const int c = classes.size();
  const ConfusionMatrix cm = ConfusionMatrix::from(pred, gt, c);
  // Points whose prediction is out of range are false negatives of their class.
  Eigen::VectorXd extra_fn = Eigen::VectorXd::Zero(c);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i].semantic != kIgnoreLabel && !in_range(pred[i].semantic, c)) {
      extra_fn(gt[i].semantic) += 1.0;
    }
  }
  ClassScores s;
  s.iou.assign(c, std::numeric_limits<double>::quiet_NaN());
  for (int k = 0; k < c; ++k) {
    const double tp = cm.counts(k, k);
    const double fn = cm.counts.row(k).sum() - tp + extra_fn(k);
    const double fp = cm.counts.col(k).sum() - tp;
    if (tp + fp + fn > 0) s.iou[k] = tp / (tp + fp + fn);
  }
  std::vector<bool> all(c, true), stuff(c), things(c);
  for (int k = 0; k < c; ++k) {
    things[k] = classes.thing(k);
    stuff[k] = !things[k];
  }
  s.mean_iou = mean_present(s.iou, all);
  s.iou_stuff = mean_present(s.iou, stuff);
  s.iou_things = mean_present(s.iou, things);
  return s;
}

AssociationTable AssociationTable::from(std::span<const PointLabel> pred,
                                        std::span<const PointLabel> gt,
                                        const ClassTable& classes) {
  check_coverage(pred, gt);
  AssociationTable t;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i].semantic == kIgnoreLabel) continue;
    const bool gt_tube = classes.thing(gt[i].semantic) && gt[i].instance > 0;
    const bool pred_tube = pred[i].instance > 0;
    if (gt_tube) t.gt_size[gt[i].instance] += 1.0;
    if (pred_tube) t.pred_size[pred[i].instance] += 1.0;
    if (gt_tube && pred_tube) t.overlap[{pred[i].instance, gt[i].instance}] += 1.0;
  }
  return t;
}

double s_assoc(const AssociationTable& table) {
  if (table.gt_size.empty()) {
    LOG(WARNING) << "s_assoc: no ground-truth thing points; defined as 1";
    return 1.0;
  }
  std::map<int, double> per_gt;
  for (const auto& [key, inter] : table.overlap) {
    const auto [p, g] = key;
    const double uni = table.pred_size.at(p) + table.gt_size.at(g) - inter;
    per_gt[g] += inter * (inter / uni);
  }
  double total = 0.0;
  for (const auto& [g, size] : table.gt_size) {
    const auto it = per_gt.find(g);
    if (it != per_gt.end()) total += it->second / size;
  }
  return total / static_cast<double>(table.gt_size.size());
}

double s_assoc(std::span<const PointLabel> pred, std::span<const PointLabel> gt,
               const ClassTable& classes) {
  return s_assoc(AssociationTable::from(pred, gt, classes));
}

double lstq(double s_cls, double s_assoc) {
  if (!(s_cls >= 0.0 && s_cls <= 1.0 && s_assoc >= 0.0 && s_assoc <= 1.0)) {
    throw ContractError("lstq: scores must lie in [0, 1]");
  }
  return std::sqrt(s_cls * s_assoc);
}

PqResult pq_scan(std::span<const PointLabel> pred, std::span<const PointLabel> gt,
                 const ClassTable& classes) {
  check_coverage(pred, gt);
  const int c = classes.size();
  using Key = std::pair<int, int>;  // (class, instance); instance 0 for stuff
  auto key_of = [&](const PointLabel& l) {
    return Key{l.semantic, classes.thing(l.semantic) ? l.instance : 0};
  };
  std::map<Key, double> gt_size, pred_size;
  std::map<std::pair<Key, Key>, double> inter;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i].semantic == kIgnoreLabel) continue;
    const Key g = key_of(gt[i]);
    gt_size[g] += 1.0;
    if (!in_range(pred[i].semantic, c)) continue;
    const Key p = key_of(pred[i]);
    pred_size[p] += 1.0;
    if (p.first == g.first) inter[{p, g}] += 1.0;
  }
  PqResult r;
  r.per_class.assign(c, PqClass{});
  std::map<Key, bool> gt_matched, pred_matched;
  for (const auto& [pg, n] : inter) {
    const double iou = n / (pred_size[pg.first] + gt_size[pg.second] - n);
    if (iou > 0.5) {
      PqClass& pc = r.per_class[pg.second.first];
      pc.tp += 1.0;
      pc.iou_sum += iou;
      gt_matched[pg.second] = true;
      pred_matched[pg.first] = true;
    }
  }
  for (const auto& [g, n] : gt_size) {
    if (!gt_matched.count(g)) r.per_class[g.first].fn += 1.0;
  }
  for (const auto& [p, n] : pred_size) {
    if (!pred_matched.count(p)) r.per_class[p.first].fp += 1.0;
  }
  double pq = 0, sq = 0, rq = 0;
  int present = 0;
  for (const PqClass& pc : r.per_class) {
    if (!pc.present()) continue;
    pq += pc.pq();
    sq += pc.sq();
    rq += pc.rq();
    ++present;
  }
  if (present == 0) {
    r.pq = r.sq = r.rq = 1.0;
  } else {
    r.pq = pq / present;
    r.sq = sq / present;
    r.rq = rq / present;
  }
  return r;
}

std::vector<PointLabel> flatten(const LabelSequence& seq) {
  std::vector<PointLabel> out;
  for (const auto& scan : seq) out.insert(out.end(), scan.begin(), scan.end());
  return out;
}

MetricReport evaluate(const LabelSequence& pred, const LabelSequence& gt,
                      const ClassTable& classes) {
  if (pred.size() != gt.size()) {
    throw ContractError("evaluate: " + std::to_string(pred.size()) + " predicted and " +
                        std::to_string(gt.size()) + " ground-truth scans");
  }
  for (std::size_t s = 0; s < gt.size(); ++s) {
    if (pred[s].size() != gt[s].size()) {
      throw ContractError("evaluate: scan " + std::to_string(s) + " has " +
                          std::to_string(pred[s].size()) + " predicted and " +
                          std::to_string(gt[s].size()) + " ground-truth points");
    }
  }
  const std::vector<PointLabel> p = flatten(pred), g = flatten(gt);
  MetricReport r;
  const ClassScores cls = s_cls(p, g, classes);
  r.s_cls = cls.mean_iou;
  r.iou_stuff = cls.iou_stuff;
  r.iou_things = cls.iou_things;
  r.class_iou = cls.iou;
  r.s_assoc = s_assoc(p, g, classes);
  r.lstq = lstq(r.s_cls, r.s_assoc);
  for (std::size_t s = 0; s < gt.size(); ++s) {
    const PqResult q = pq_scan(pred[s], gt[s], classes);
    r.pq += q.pq;
    r.sq += q.sq;
    r.rq += q.rq;
  }
  if (!gt.empty()) {
    r.pq /= static_cast<double>(gt.size());
    r.sq /= static_cast<double>(gt.size());
    r.rq /= static_cast<double>(gt.size());
  }
  return r;
}

void write_report_csv(std::ostream& os, const MetricReport& r, const ClassTable& classes) {
  os << "LSTQ,S_assoc,S_cls,IoU_St,IoU_Th,PQ,SQ,RQ";
  for (const std::string& name : classes.names) os << ",IoU_" << name;
  os << '\n' << std::setprecision(17);
  os << r.lstq << ',' << r.s_assoc << ',' << r.s_cls << ',' << r.iou_stuff << ','
     << r.iou_things << ',' << r.pq << ',' << r.sq << ',' << r.rq;
  for (double v : r.class_iou) os << ',' << v;
  os << '\n';
}

std::string format_report_table(const MetricReport& r, const ClassTable& classes) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1);
  os << "  LSTQ  S_assoc  S_cls  IoU_St  IoU_Th    PQ    SQ    RQ\n";
  os << std::setw(6) << 100 * r.lstq << std::setw(9) << 100 * r.s_assoc << std::setw(7)
     << 100 * r.s_cls << std::setw(8) << 100 * r.iou_stuff << std::setw(8)
     << 100 * r.iou_things << std::setw(6) << 100 * r.pq << std::setw(6) << 100 * r.sq
     << std::setw(6) << 100 * r.rq << '\n';
  for (int k = 0; k < classes.size() && k < static_cast<int>(r.class_iou.size()); ++k) {
    os << "  IoU " << classes.names[k] << ": ";
    if (std::isnan(r.class_iou[k])) {
      os << "n/a\n";
    } else {
      os << 100 * r.class_iou[k] << '\n';
    }
  }
  return os.str();
}

}  // namespace p4d
