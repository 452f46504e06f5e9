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

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <tuple>

#include "p4d/assignment.hpp"

namespace p4d {
namespace {

void check_same_length(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                       const char* what) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(what) + ": lengths " + std::to_string(a.size()) +
                     " and " + std::to_string(b.size()));
  }
}

Eigen::ArrayXXd softplus(const Eigen::ArrayXXd& x) {
  return x.max(0.0) + (-x.abs()).exp().log1p();
}

Eigen::MatrixXd log_softmax(const Eigen::MatrixXd& logits) {
  const Eigen::VectorXd m = logits.rowwise().maxCoeff();
  Eigen::MatrixXd shifted = logits.colwise() - m;
  const Eigen::VectorXd lse = shifted.array().exp().rowwise().sum().log().matrix();
  return shifted.colwise() - lse;
}

void check_output(const MaskModuleOutput& out, const Targets& targets) {
  if (targets.size() > 0 && out.heatmap_logits.cols() != targets.masks.cols()) {
    throw ShapeError("loss: heatmap has " + std::to_string(out.heatmap_logits.cols()) +
                     " voxels, targets have " + std::to_string(targets.masks.cols()));
  }
  for (int c : targets.classes) {
    if (c < 0 || c >= out.num_classes()) {
      throw ShapeError("loss: target class " + std::to_string(c) +
                       " outside the " + std::to_string(out.num_classes()) +
                       " predicted classes");
    }
  }
}

}  // namespace

int Targets::num_things() const {
  return static_cast<int>(std::count(is_thing.begin(), is_thing.end(), true));
}

Targets build_targets(const VoxelGrid& grid, const Points& points,
                      std::span<const PointLabel> labels, const ClassTable& classes,
                      const Extent& extent) {
  if (static_cast<Eigen::Index>(labels.size()) != points.rows() ||
      labels.size() != grid.point_to_voxel.size()) {
    throw ShapeError("build_targets: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(points.rows()) + " points");
  }
  for (const PointLabel& l : labels) {
    if (l.semantic != kIgnoreLabel && (l.semantic < 0 || l.semantic >= classes.size())) {
      throw ParameterError("build_targets: unknown class " + std::to_string(l.semantic));
    }
  }
  using Key = std::pair<int, int>;  // (semantic, instance); instance 0 for stuff
  auto key_of = [&](const PointLabel& l) {
    return Key{l.semantic, classes.thing(l.semantic) ? l.instance : 0};
  };

  const Eigen::Index k0 = grid.num_voxels();
  std::vector<Key> voxel_key(k0, Key{-1, -1});
  for (Eigen::Index v = 0; v < k0; ++v) {
    std::map<Key, int> votes;
    for (int p : grid.voxel_to_points[v]) {
      if (labels[p].semantic == kIgnoreLabel) continue;
      ++votes[key_of(labels[p])];
    }
    int best = 0;
    for (const auto& [key, n] : votes) {
      if (n > best) {  // ties keep the smallest key
        best = n;
        voxel_key[v] = key;
      }
    }
  }

  // Stuff keys sort before thing keys; each group ascending.
  std::vector<Key> segments;
  for (const Key& k : voxel_key) {
    if (k.first >= 0) segments.push_back(k);
  }
  std::sort(segments.begin(), segments.end(), [&](const Key& a, const Key& b) {
    const bool ta = classes.thing(a.first), tb = classes.thing(b.first);
    if (ta != tb) return !ta;
    if (ta) return std::tie(a.second, a.first) < std::tie(b.second, b.first);
    return a.first < b.first;
  });
  segments.erase(std::unique(segments.begin(), segments.end()), segments.end());

  Targets t;
  const auto n = static_cast<Eigen::Index>(segments.size());
  t.masks.setZero(n, k0);
  t.boxes.setZero(n, 6);
  std::map<Key, int> row_of;
  for (Eigen::Index s = 0; s < n; ++s) {
    row_of[segments[s]] = static_cast<int>(s);
    t.classes.push_back(segments[s].first);
    t.instance_ids.push_back(segments[s].second);
    t.is_thing.push_back(classes.thing(segments[s].first));
  }
  for (Eigen::Index v = 0; v < k0; ++v) {
    if (voxel_key[v].first >= 0) t.masks(row_of[voxel_key[v]], v) = 1.0;
  }
  for (Eigen::Index s = 0; s < n; ++s) {
    if (!t.is_thing[s]) continue;
    std::vector<int> members;
    for (std::size_t p = 0; p < labels.size(); ++p) {
      if (labels[p].semantic != kIgnoreLabel && key_of(labels[p]) == segments[s]) {
        members.push_back(static_cast<int>(p));
      }
    }
    Points inst(static_cast<Eigen::Index>(members.size()), 3);
    for (std::size_t i = 0; i < members.size(); ++i) {
      inst.row(static_cast<Eigen::Index>(i)) = points.row(members[i]);
    }
    t.boxes.row(s) = trajectory_box(inst, extent).as_vector().transpose();
  }
  return t;
}

void LossWeights::validate() const {
  if (!(dice >= 0 && bce >= 0 && ce >= 0 && box >= 0 && no_object >= 0)) {
    throw ParameterError("loss weights must be nonnegative");
  }
}

double dice_loss(const Eigen::VectorXd& probs, const Eigen::VectorXd& target) {
  check_same_length(probs, target, "dice_loss");
  return 1.0 - 2.0 * probs.dot(target) / (probs.sum() + target.sum() + kDiceEpsilon);
}

double bce_loss(const Eigen::VectorXd& probs, const Eigen::VectorXd& target) {
  check_same_length(probs, target, "bce_loss");
  if (probs.size() == 0) return 0.0;
  const Eigen::ArrayXd p =
      probs.array().max(kProbabilityClamp).min(1.0 - kProbabilityClamp);
  const Eigen::ArrayXd g = target.array();
  return -(g * p.log() + (1.0 - g) * (1.0 - p).log()).mean();
}

double bce_with_logits(const Eigen::VectorXd& logits, const Eigen::VectorXd& target) {
  check_same_length(logits, target, "bce_with_logits");
  if (logits.size() == 0) return 0.0;
  const Eigen::ArrayXXd x = logits.array();
  return (softplus(x) - x * target.array()).mean();
}

double ce_loss(const Eigen::VectorXd& logits, int target_class) {
  if (target_class < 0 || target_class >= logits.size()) {
    throw ShapeError("ce_loss: class " + std::to_string(target_class) + " of " +
                     std::to_string(logits.size()));
  }
  return -log_softmax(logits.transpose())(0, target_class);
}

double box_l1_loss(const Eigen::VectorXd& pred, const Eigen::VectorXd& target) {
  check_same_length(pred, target, "box_l1_loss");
  if (pred.size() == 0) return 0.0;
  return (pred - target).cwiseAbs().mean();
}

Eigen::MatrixXd match_cost_matrix(const MaskModuleOutput& output,
                                  const Targets& targets, const LossWeights& weights) {
  check_output(output, targets);
  const Eigen::MatrixXd& h = output.heatmap_logits.value();
  const Eigen::MatrixXd& g = targets.masks;
  const auto nq = h.rows();
  const auto nt = static_cast<Eigen::Index>(targets.size());
  const double k0 = static_cast<double>(h.cols());
  if (nt == 0) return Eigen::MatrixXd(nq, 0);

  const Eigen::MatrixXd p = (1.0 / (1.0 + (-h.array()).exp())).matrix();
  const Eigen::MatrixXd pg = p * g.transpose();
  const Eigen::VectorXd p_sum = p.rowwise().sum();
  const Eigen::VectorXd g_sum = g.rowwise().sum();
  const Eigen::MatrixXd hg = h * g.transpose();
  const Eigen::VectorXd sp_sum = softplus(h.array()).rowwise().sum().matrix();
  const double bce_scale = weights.sum_reduced ? 1.0 : 1.0 / k0;
  const Eigen::MatrixXd logp = log_softmax(output.class_logits.value());

  Eigen::MatrixXd cost(nq, nt);
  for (Eigen::Index q = 0; q < nq; ++q) {
    for (Eigen::Index t = 0; t < nt; ++t) {
      const double dice = 1.0 - 2.0 * pg(q, t) / (p_sum(q) + g_sum(t) + kDiceEpsilon);
      const double bce = (sp_sum(q) - hg(q, t)) * bce_scale;
      cost(q, t) = weights.dice * dice + weights.bce * bce -
                   weights.ce * logp(q, targets.classes[t]);
    }
  }
  if (!cost.allFinite()) {
    throw NonFiniteLossError("matching: non-finite cost; network outputs contain NaN or inf");
  }
  return cost;
}

MatchResult match_costs(const Eigen::MatrixXd& cost) {
  if (cost.cols() > cost.rows()) {
    throw CapacityError("matching: " + std::to_string(cost.cols()) + " targets but only " +
                        std::to_string(cost.rows()) + " queries");
  }
  MatchResult m;
  m.query_to_target.assign(cost.rows(), -1);
  if (cost.cols() == 0) return m;
  const std::vector<int> target_to_query = linear_assignment(cost.transpose());
  for (Eigen::Index t = 0; t < cost.cols(); ++t) {
    m.query_to_target[target_to_query[t]] = static_cast<int>(t);
  }
  for (Eigen::Index q = 0; q < cost.rows(); ++q) {
    const int t = m.query_to_target[q];
    if (t < 0) continue;
    m.pairs.emplace_back(static_cast<int>(q), t);
    m.total_cost += cost(q, t);
  }
  return m;
}

MatchResult hungarian_match(const MaskModuleOutput& output, const Targets& targets,
                            const LossWeights& weights) {
  return match_costs(match_cost_matrix(output, targets, weights));
}

LossResult total_loss(std::span<const MaskModuleOutput> outputs,
                      const Targets& targets, std::span<const MatchResult> matches,
                      const LossWeights& weights) {
  weights.validate();
  if (outputs.empty()) throw ParameterError("total_loss: no outputs");
  if (matches.size() != outputs.size()) {
    throw ShapeError("total_loss: " + std::to_string(matches.size()) + " matches for " +
                     std::to_string(outputs.size()) + " outputs");
  }
  ad::Tape& tape = *outputs[0].heatmap_logits.tape();
  const int nt = targets.size();
  const int n_things = targets.num_things();
  const double k0 = static_cast<double>(outputs[0].heatmap_logits.cols());
  LossResult result;
  result.matches.assign(matches.begin(), matches.end());
  std::vector<ad::Var> terms;

  for (std::size_t o = 0; o < outputs.size(); ++o) {
    const MaskModuleOutput& out = outputs[o];
    const MatchResult& match = matches[o];
    check_output(out, targets);
    const auto nq = out.num_queries();
    if (static_cast<Eigen::Index>(match.query_to_target.size()) != nq) {
      throw ShapeError("total_loss: match covers " +
                       std::to_string(match.query_to_target.size()) + " queries, output has " +
                       std::to_string(nq));
    }
    std::vector<int> mq, mt, bq, bt;
    for (const auto& [q, t] : match.pairs) {
      mq.push_back(q);
      mt.push_back(t);
      if (targets.is_thing[t]) {
        bq.push_back(q);
        bt.push_back(t);
      }
    }

    if (!mq.empty()) {
      const auto m = static_cast<Eigen::Index>(mq.size());
      Eigen::MatrixXd g(m, targets.masks.cols());
      for (Eigen::Index i = 0; i < m; ++i) g.row(i) = targets.masks.row(mt[i]);
      const ad::Var h = ad::gather_rows(out.heatmap_logits, mq);
      const ad::Var gv = tape.constant(g);
      const ad::Var p = ad::sigmoid(h);
      const ad::Var inter = ad::row_sum(ad::mul(p, gv));
      const ad::Var denom = ad::add_scalar(
          ad::add(ad::row_sum(p), tape.constant(g.rowwise().sum())), kDiceEpsilon);
      const ad::Var dice = ad::add_scalar(ad::scale(ad::sum(ad::div(inter, denom)), -2.0),
                                          static_cast<double>(m));
      const double bce_scale = weights.sum_reduced ? 1.0 : 1.0 / k0;
      const ad::Var bce =
          ad::scale(ad::sum(ad::sub(ad::softplus(h), ad::mul(h, gv))), bce_scale);
      const ad::Var dice_term = ad::scale(dice, weights.dice / nt);
      const ad::Var bce_term = ad::scale(bce, weights.bce / nt);
      result.breakdown.dice += dice_term.value()(0, 0);
      result.breakdown.bce += bce_term.value()(0, 0);
      terms.push_back(dice_term);
      terms.push_back(bce_term);
    }

    {
      const int no_object = out.num_classes();
      Eigen::MatrixXd w = Eigen::MatrixXd::Zero(nq, no_object + 1);
      for (Eigen::Index q = 0; q < nq; ++q) {
        const int t = match.query_to_target[q];
        if (t >= 0) {
          w(q, targets.classes[t]) = 1.0;
        } else {
          w(q, no_object) = weights.no_object;
        }
      }
      const double w_sum = w.sum();
      if (w_sum > 0.0) {
        const ad::Var logp = ad::log_softmax_rows(out.class_logits);
        const ad::Var ce_term =
            ad::scale(ad::sum(ad::mul(logp, tape.constant(w))), -weights.ce / w_sum);
        result.breakdown.ce += ce_term.value()(0, 0);
        terms.push_back(ce_term);
      }
    }

    if (!bq.empty() && weights.box > 0.0) {
      const auto m = static_cast<Eigen::Index>(bq.size());
      Eigen::MatrixXd target_boxes(m, 6);
      for (Eigen::Index i = 0; i < m; ++i) target_boxes.row(i) = targets.boxes.row(bt[i]);
      const ad::Var diff =
          ad::sub(ad::gather_rows(out.boxes, bq), tape.constant(target_boxes));
      const ad::Var box_term =
          ad::scale(ad::sum(ad::abs(diff)), weights.box / (6.0 * n_things));
      result.breakdown.box += box_term.value()(0, 0);
      terms.push_back(box_term);
    }
  }

  if (terms.empty()) terms.push_back(tape.constant(ad::Matrix::Zero(1, 1)));
  ad::Var loss = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) loss = ad::add(loss, terms[i]);
  result.loss = loss;
  result.breakdown.total = loss.value()(0, 0);
  return result;
}

LossResult total_loss(std::span<const MaskModuleOutput> outputs,
                      const Targets& targets, const LossWeights& weights) {
  std::vector<MatchResult> matches;
  matches.reserve(outputs.size());
  for (const MaskModuleOutput& out : outputs) {
    matches.push_back(hungarian_match(out, targets, weights));
  }
  return total_loss(outputs, targets, matches, weights);
}

}  // namespace p4d
