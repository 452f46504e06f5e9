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

// Segment targets, bipartite matching and the training objective.
//
// For every mask-module output the queries are matched one-to-one to the
// target segments with cost
//   lambda_dice * dice + lambda_bce * bce + lambda_ce * (-log p(class)).
// Matched queries then pay mask, class and (thing targets only) box terms;
// unmatched queries pay class cross-entropy toward no-object with a reduced
// weight. The objective sums over all outputs.

#pragma once

#include <span>
#include <utility>
#include <vector>

#include "p4d/geometry.hpp"
#include "p4d/heads.hpp"
#include "p4d/synth.hpp"

namespace p4d {

// One row per ground-truth segment: stuff regions (one per present stuff
// class, ascending) first, then thing instances (ascending instance id).
struct Targets {
  Eigen::MatrixXd masks;           // T x K0, entries 0 or 1
  std::vector<int> classes;        // T
  std::vector<int> instance_ids;   // T, 0 for stuff
  std::vector<bool> is_thing;      // T
  Eigen::MatrixXd boxes;           // T x 6, zero rows for stuff

  int size() const { return static_cast<int>(classes.size()); }
  int num_things() const;
};

// Each voxel takes the most frequent (semantic, instance) label among its
// points; ignore-labeled points do not vote, and all-ignore voxels belong to
// no segment. Thing boxes come from the instance's points against `extent`.
// Labels outside the class table (other than the ignore label) throw.
Targets build_targets(const VoxelGrid& grid, const Points& points,
                      std::span<const PointLabel> labels, const ClassTable& classes,
                      const Extent& extent);

struct LossWeights {
  double dice = 2.0;
  double bce = 5.0;
  double ce = 2.0;
  double box = 1.0;
  double no_object = 0.1;
  // Sum BCE over voxels instead of averaging.
  bool sum_reduced = false;

  void validate() const;
};

// ---- value-level terms ----------------------------------------------------

inline constexpr double kDiceEpsilon = 1e-6;
inline constexpr double kProbabilityClamp = 1e-7;

// 1 - 2 sum(p g) / (sum p + sum g + eps)
double dice_loss(const Eigen::VectorXd& probs, const Eigen::VectorXd& target);
// Mean binary cross-entropy with p clamped to [clamp, 1 - clamp].
double bce_loss(const Eigen::VectorXd& probs, const Eigen::VectorXd& target);
// Same quantity from logits, exact for any magnitude.
double bce_with_logits(const Eigen::VectorXd& logits, const Eigen::VectorXd& target);
double ce_loss(const Eigen::VectorXd& logits, int target_class);
double box_l1_loss(const Eigen::VectorXd& pred, const Eigen::VectorXd& target);

// ---- matching -------------------------------------------------------------

struct MatchResult {
  std::vector<std::pair<int, int>> pairs;  // (query, target), ascending query
  std::vector<int> query_to_target;        // -1 when unmatched
  double total_cost = 0.0;
};

// N_q x T matching cost from output values.
Eigen::MatrixXd match_cost_matrix(const MaskModuleOutput& output,
                                  const Targets& targets, const LossWeights& weights);

MatchResult hungarian_match(const MaskModuleOutput& output, const Targets& targets,
                            const LossWeights& weights);

// Minimum-cost assignment of rows (queries) to columns (targets) of an
// explicit cost matrix. Throws CapacityError when cols > rows.
MatchResult match_costs(const Eigen::MatrixXd& cost);

// ---- objective ------------------------------------------------------------

// Weighted contributions, each summed over outputs; total is their sum.
struct LossBreakdown {
  double total = 0.0;
  double dice = 0.0;
  double bce = 0.0;
  double ce = 0.0;
  double box = 0.0;
};

struct LossResult {
  ad::Var loss;  // 1x1
  LossBreakdown breakdown;
  std::vector<MatchResult> matches;  // one per output
};

LossResult total_loss(std::span<const MaskModuleOutput> outputs,
                      const Targets& targets, std::span<const MatchResult> matches,
                      const LossWeights& weights);

// Matches every output with hungarian_match, then total_loss.
LossResult total_loss(std::span<const MaskModuleOutput> outputs,
                      const Targets& targets, const LossWeights& weights);

}  // namespace p4d
