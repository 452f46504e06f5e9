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

// From mask-module outputs to a sequence-level panoptic labeling.
//
// Within a window every voxel goes to the query with the highest
// (class confidence x heatmap probability). Thing masks may then be split into
// spatially compact pieces. Consecutive windows share frames; their instances
// are linked by a maximum-overlap one-to-one matching on the shared points.

#pragma once

#include <functional>
#include <map>
#include <span>
#include <vector>

#include "p4d/heads.hpp"
#include "p4d/model.hpp"
#include "p4d/synth.hpp"

namespace p4d {

// Labels of one window. Points are indexed like WindowInput::cloud.
struct WindowPrediction {
  std::vector<int> voxel_query;          // K0, assigned query
  std::vector<int> query_class;          // N_q, argmax real class
  std::vector<double> query_confidence;  // N_q, max real-class probability
  std::vector<bool> query_included;      // N_q, argmax is not no-object
  std::vector<int> point_semantic;       // M
  std::vector<int> point_instance;       // M, 0 for stuff, local ids > 0

  std::size_t num_points() const { return point_semantic.size(); }
};

// Thing queries q get local instance id q + 1. When every query prefers
// no-object all queries are included and a warning is logged.
WindowPrediction extract_panoptic(const MaskModuleOutput& output, const VoxelGrid& grid,
                                  const ClassTable& classes);
// Same from plain matrices (heatmap logits N_q x K0, class logits N_q x C+1).
WindowPrediction extract_panoptic(const Eigen::MatrixXd& heatmap_logits,
                                  const Eigen::MatrixXd& class_logits,
                                  const VoxelGrid& grid, const ClassTable& classes);

inline constexpr int kNoise = -1;

// Clusters are numbered 0.. in discovery order (point order); noise is kNoise.
// Neighborhoods include the point itself. `group`, when given, forbids
// neighbors from different groups.
std::vector<int> dbscan(const Points& points, double eps, int min_pts,
                        std::span<const int> group = {});

struct SplitConfig {
  double eps = 1.0;
  int min_pts = 1;
  // Cluster each scan's points separately instead of the superimposed cloud.
  bool per_frame = false;
};

// Splits each thing instance into DBSCAN clusters over `cloud`. The cluster
// holding the instance's first point keeps the id; others get fresh ids above
// the current maximum. Noise joins the nearest cluster centroid; an all-noise
// instance stays whole. Semantics are never changed.
WindowPrediction split_non_compact(const WindowPrediction& pred,
                                   const SuperimposedCloud& cloud,
                                   const SplitConfig& config);

// Maps next-window instance ids to global ids. prev_shared and next_shared
// label the same shared-frame points (0 = no instance). Pairs from a
// maximum-overlap matching with overlap >= 1 inherit the previous id; every
// other id in next_ids gets first_free_id, first_free_id + 1, ... in
// ascending order.
std::map<int, int> stitch(std::span<const int> prev_shared,
                          std::span<const int> next_shared,
                          std::span<const int> next_ids, int first_free_id);

using WindowPredictor = std::function<WindowPrediction(const WindowInput&)>;

struct SequenceOptions {
  int window = 2;
  int stride = 1;
  double voxel_size = 0.05;
  int depth = 4;
  bool split = true;
  SplitConfig split_config;
};

// Window start frames: 0, stride, ... plus a final window ending at the last
// frame. A sequence no longer than the window is one window.
std::vector<int> window_starts(int num_frames, int window, int stride);

// Per-scan labels with sequence-consistent instance ids. Each window is
// predicted, split when options.split is set, then stitched to the previous
// one; shared frames take the later window's labels.
std::vector<std::vector<PointLabel>> run_sequence(const WindowPredictor& predictor,
                                                  std::span<const LidarScan> scans,
                                                  std::span<const Posed> poses,
                                                  const SequenceOptions& options);

// Forward pass and extraction with a trained model; `model` must outlive the
// predictor.
WindowPredictor model_predictor(const Model& model, const ClassTable& classes);

}  // namespace p4d
