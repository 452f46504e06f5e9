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

#include "p4d/inference.hpp"

#include <glog/logging.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <limits>
#include <set>
#include <string>
#include <unordered_map>

#include "p4d/assignment.hpp"

namespace p4d {
namespace {

struct CellHash {
  std::size_t operator()(const std::array<std::int64_t, 3>& c) const {
    std::size_t h = 1469598103934665603ull;
    for (std::int64_t v : c) h = (h ^ static_cast<std::size_t>(v)) * 1099511628211ull;
    return h;
  }
};

}  // namespace

WindowPrediction extract_panoptic(const Eigen::MatrixXd& heatmap_logits,
                                  const Eigen::MatrixXd& class_logits,
                                  const VoxelGrid& grid, const ClassTable& classes) {
  const auto nq = heatmap_logits.rows();
  const auto k0 = heatmap_logits.cols();
  if (k0 != grid.num_voxels() || class_logits.rows() != nq ||
      class_logits.cols() != classes.size() + 1 || nq == 0) {
    throw ShapeError("extract_panoptic: heatmap " + std::to_string(nq) + "x" +
                     std::to_string(k0) + ", class logits " +
                     std::to_string(class_logits.rows()) + "x" +
                     std::to_string(class_logits.cols()) + ", grid " +
                     std::to_string(grid.num_voxels()) + " voxels, " +
                     std::to_string(classes.size()) + " classes");
  }
  const int c = classes.size();
  WindowPrediction pred;
  pred.query_class.resize(nq);
  pred.query_confidence.resize(nq);
  pred.query_included.resize(nq);
  bool any_included = false;
  for (Eigen::Index q = 0; q < nq; ++q) {
    const Eigen::RowVectorXd z = class_logits.row(q).array() - class_logits.row(q).maxCoeff();
    const Eigen::RowVectorXd p = z.array().exp() / z.array().exp().sum();
    Eigen::Index best = 0;
    p.head(c).maxCoeff(&best);
    pred.query_class[q] = static_cast<int>(best);
    pred.query_confidence[q] = p(best);
    pred.query_included[q] = !(p(c) > p(best));
    any_included = any_included || pred.query_included[q];
  }
  if (!any_included) {
    LOG(WARNING) << "extract_panoptic: every query prefers no-object; using all queries";
    std::fill(pred.query_included.begin(), pred.query_included.end(), true);
  }

  pred.voxel_query.assign(k0, -1);
  for (Eigen::Index v = 0; v < k0; ++v) {
    double best = -1.0;
    for (Eigen::Index q = 0; q < nq; ++q) {
      if (!pred.query_included[q]) continue;
      const double heat = 1.0 / (1.0 + std::exp(-heatmap_logits(q, v)));
      const double score = pred.query_confidence[q] * heat;
      if (score > best) {
        best = score;
        pred.voxel_query[v] = static_cast<int>(q);
      }
    }
  }

  const std::size_t m = grid.point_to_voxel.size();
  pred.point_semantic.resize(m);
  pred.point_instance.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    const int q = pred.voxel_query[grid.point_to_voxel[i]];
    pred.point_semantic[i] = pred.query_class[q];
    pred.point_instance[i] = classes.thing(pred.query_class[q]) ? q + 1 : 0;
  }
  return pred;
}

WindowPrediction extract_panoptic(const MaskModuleOutput& output, const VoxelGrid& grid,
                                  const ClassTable& classes) {
  return extract_panoptic(output.heatmap_logits.value(), output.class_logits.value(),
                          grid, classes);
}

std::vector<int> dbscan(const Points& points, double eps, int min_pts,
                        std::span<const int> group) {
  if (!(eps > 0.0)) throw ParameterError("dbscan: eps must be > 0");
  if (min_pts < 1) throw ParameterError("dbscan: min_pts must be >= 1");
  const auto n = points.rows();
  if (!group.empty() && static_cast<Eigen::Index>(group.size()) != n) {
    throw ShapeError("dbscan: group has " + std::to_string(group.size()) +
                     " entries for " + std::to_string(n) + " points");
  }
  using Cell = std::array<std::int64_t, 3>;
  auto cell_of = [&](Eigen::Index i) {
    return Cell{static_cast<std::int64_t>(std::floor(points(i, 0) / eps)),
                static_cast<std::int64_t>(std::floor(points(i, 1) / eps)),
                static_cast<std::int64_t>(std::floor(points(i, 2) / eps))};
  };
  std::unordered_map<Cell, std::vector<int>, CellHash> cells;
  for (Eigen::Index i = 0; i < n; ++i) cells[cell_of(i)].push_back(static_cast<int>(i));

  const double eps2 = eps * eps;
  auto neighbors = [&](int i) {
    std::vector<int> out;
    const Cell c = cell_of(i);
    for (int dx = -1; dx <= 1; ++dx) {
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dz = -1; dz <= 1; ++dz) {
          const auto it = cells.find(Cell{c[0] + dx, c[1] + dy, c[2] + dz});
          if (it == cells.end()) continue;
          for (int j : it->second) {
            if (!group.empty() && group[j] != group[i]) continue;
            if ((points.row(j) - points.row(i)).squaredNorm() <= eps2) out.push_back(j);
          }
        }
      }
    }
    return out;
  };

  constexpr int kUnvisited = -2;
  std::vector<int> label(n, kUnvisited);
  int next_cluster = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (label[i] != kUnvisited) continue;
    std::vector<int> nb = neighbors(static_cast<int>(i));
    if (static_cast<int>(nb.size()) < min_pts) {
      label[i] = kNoise;
      continue;
    }
    const int cluster = next_cluster++;
    label[i] = cluster;
    std::deque<int> queue(nb.begin(), nb.end());
    while (!queue.empty()) {
      const int j = queue.front();
      queue.pop_front();
      if (label[j] == kNoise) label[j] = cluster;  // border point
      if (label[j] != kUnvisited) continue;
      label[j] = cluster;
      std::vector<int> nb_j = neighbors(j);
      if (static_cast<int>(nb_j.size()) >= min_pts) {
        queue.insert(queue.end(), nb_j.begin(), nb_j.end());
      }
    }
  }
  return label;
}

WindowPrediction split_non_compact(const WindowPrediction& pred,
                                   const SuperimposedCloud& cloud,
                                   const SplitConfig& config) {
  if (pred.num_points() != static_cast<std::size_t>(cloud.size())) {
    throw ShapeError("split_non_compact: " + std::to_string(pred.num_points()) +
                     " labels for " + std::to_string(cloud.size()) + " points");
  }
  WindowPrediction out = pred;
  std::map<int, std::vector<int>> members;
  for (std::size_t i = 0; i < pred.num_points(); ++i) {
    if (pred.point_instance[i] > 0) members[pred.point_instance[i]].push_back(static_cast<int>(i));
  }
  int next_id = members.empty() ? 1 : members.rbegin()->first + 1;
  for (const auto& [id, idx] : members) {
    const auto n = static_cast<Eigen::Index>(idx.size());
    Points pts(n, 3);
    std::vector<int> group;
    for (Eigen::Index i = 0; i < n; ++i) {
      pts.row(i) = cloud.points.row(idx[i]);
      if (config.per_frame) group.push_back(cloud.frame_of[idx[i]]);
    }
    std::vector<int> cluster = dbscan(pts, config.eps, config.min_pts, group);
    const int num_clusters = *std::max_element(cluster.begin(), cluster.end()) + 1;
    if (num_clusters <= 1) continue;  // compact, or all noise

    Eigen::MatrixXd centroid = Eigen::MatrixXd::Zero(num_clusters, 3);
    Eigen::VectorXd count = Eigen::VectorXd::Zero(num_clusters);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (cluster[i] == kNoise) continue;
      centroid.row(cluster[i]) += pts.row(i);
      count(cluster[i]) += 1.0;
    }
    centroid.array().colwise() /= count.array();
    for (Eigen::Index i = 0; i < n; ++i) {
      if (cluster[i] != kNoise) continue;
      Eigen::Index best = 0;
      (centroid.rowwise() - pts.row(i)).rowwise().squaredNorm().minCoeff(&best);
      cluster[i] = static_cast<int>(best);
    }
    std::vector<int> new_id(num_clusters, 0);
    new_id[cluster[0]] = id;
    for (int k = 0; k < num_clusters; ++k) {
      if (new_id[k] == 0) new_id[k] = next_id++;
    }
    for (Eigen::Index i = 0; i < n; ++i) out.point_instance[idx[i]] = new_id[cluster[i]];
  }
  return out;
}

std::map<int, int> stitch(std::span<const int> prev_shared,
                          std::span<const int> next_shared,
                          std::span<const int> next_ids, int first_free_id) {
  if (prev_shared.size() != next_shared.size()) {
    throw ContractError("stitch: shared frames have " + std::to_string(prev_shared.size()) +
                        " and " + std::to_string(next_shared.size()) + " points");
  }
  if (prev_shared.empty()) throw ContractError("stitch: windows share no points");
  std::set<int> prev_set, next_set(next_ids.begin(), next_ids.end());
  next_set.erase(0);
  for (std::size_t i = 0; i < prev_shared.size(); ++i) {
    if (prev_shared[i] > 0) prev_set.insert(prev_shared[i]);
    if (next_shared[i] > 0) next_set.insert(next_shared[i]);
  }
  const std::vector<int> prev_list(prev_set.begin(), prev_set.end());
  const std::vector<int> next_list(next_set.begin(), next_set.end());
  std::map<int, int> prev_index, next_index;
  for (std::size_t i = 0; i < prev_list.size(); ++i) prev_index[prev_list[i]] = static_cast<int>(i);
  for (std::size_t i = 0; i < next_list.size(); ++i) next_index[next_list[i]] = static_cast<int>(i);

  Eigen::MatrixXd overlap = Eigen::MatrixXd::Zero(next_list.size(), prev_list.size());
  for (std::size_t i = 0; i < prev_shared.size(); ++i) {
    if (prev_shared[i] > 0 && next_shared[i] > 0) {
      overlap(next_index[next_shared[i]], prev_index[prev_shared[i]]) += 1.0;
    }
  }
  std::map<int, int> remap;
  if (overlap.size() > 0) {
    const std::vector<int> match = linear_assignment(-overlap);
    for (std::size_t r = 0; r < match.size(); ++r) {
      if (match[r] >= 0 && overlap(static_cast<Eigen::Index>(r), match[r]) >= 1.0) {
        remap[next_list[r]] = prev_list[match[r]];
      }
    }
  }
  int fresh = first_free_id;
  for (int id : next_list) {
    if (!remap.count(id)) remap[id] = fresh++;
  }
  return remap;
}

std::vector<int> window_starts(int num_frames, int window, int stride) {
  if (window < 1 || stride < 1) throw ParameterError("window and stride must be >= 1");
  if (num_frames <= window) return {0};
  if (stride >= window) {
    throw ContractError("stride " + std::to_string(stride) + " leaves windows of " +
                        std::to_string(window) + " frames without a shared frame");
  }
  std::vector<int> starts;
  for (int s = 0; s + window <= num_frames; s += stride) starts.push_back(s);
  if (starts.back() + window < num_frames) starts.push_back(num_frames - window);
  return starts;
}

std::vector<std::vector<PointLabel>> run_sequence(const WindowPredictor& predictor,
                                                  std::span<const LidarScan> scans,
                                                  std::span<const Posed> poses,
                                                  const SequenceOptions& options) {
  if (scans.size() != poses.size()) {
    throw ArityError(std::to_string(scans.size()) + " scans but " +
                     std::to_string(poses.size()) + " poses");
  }
  if (scans.empty()) throw ParameterError("run_sequence: empty sequence");
  const int n = static_cast<int>(scans.size());
  const std::vector<int> starts = window_starts(n, options.window, options.stride);
  const int t = std::min(options.window, n);

  std::vector<std::vector<PointLabel>> out(n);
  for (int s = 0; s < n; ++s) out[s].resize(scans[s].size());
  int max_id = 0;
  int covered_end = 0;  // frames [0, covered_end) are labeled

  for (int start : starts) {
    const WindowInput input = prepare_window(scans.subspan(start, t), poses.subspan(start, t),
                                             options.voxel_size, options.depth);
    WindowPrediction pred = predictor(input);
    if (pred.num_points() != static_cast<std::size_t>(input.cloud.size())) {
      throw ShapeError("run_sequence: predictor labeled " + std::to_string(pred.num_points()) +
                       " of " + std::to_string(input.cloud.size()) + " points");
    }
    if (options.split) pred = split_non_compact(pred, input.cloud, options.split_config);

    std::vector<int> prev_shared, next_shared;
    std::set<int> ids;
    for (std::size_t i = 0; i < pred.num_points(); ++i) {
      const SourcePoint sp = input.cloud.source_point[i];
      const int scan = start + sp.scan;
      if (pred.point_instance[i] > 0) ids.insert(pred.point_instance[i]);
      if (scan < covered_end) {
        prev_shared.push_back(out[scan][sp.point].instance);
        next_shared.push_back(pred.point_instance[i]);
      }
    }
    std::map<int, int> remap;
    const std::vector<int> id_list(ids.begin(), ids.end());
    if (covered_end == 0) {
      int fresh = max_id + 1;
      for (int id : id_list) remap[id] = fresh++;
    } else {
      remap = stitch(prev_shared, next_shared, id_list, max_id + 1);
    }
    for (const auto& [local, global] : remap) max_id = std::max(max_id, global);
    for (std::size_t i = 0; i < pred.num_points(); ++i) {
      const SourcePoint sp = input.cloud.source_point[i];
      const int local = pred.point_instance[i];
      out[start + sp.scan][sp.point] = {pred.point_semantic[i], local > 0 ? remap.at(local) : 0};
    }
    covered_end = std::max(covered_end, start + t);
  }
  return out;
}

WindowPredictor model_predictor(const Model& model, const ClassTable& classes) {
  return [&model, classes](const WindowInput& input) {
    ad::Tape tape;
    const ForwardResult r = model.forward(tape, input);
    return extract_panoptic(r.final_output(), input.grid, classes);
  };
}

}  // namespace p4d
