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

#include "p4d/geometry.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <string>
#include <unordered_map>

namespace p4d {
namespace {

struct CoordHash {
  std::size_t operator()(const std::array<std::int64_t, 3>& c) const {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto v : c) {
      h ^= static_cast<std::uint64_t>(v) + 0x9e3779b97f4a7c15ull + (h << 6) +
           (h >> 2);
    }
    return static_cast<std::size_t>(h);
  }
};

}  // namespace

int SuperimposedCloud::first_frame() const {
  if (frame_of.empty()) return 0;
  return *std::min_element(frame_of.begin(), frame_of.end());
}

int SuperimposedCloud::last_frame() const {
  if (frame_of.empty()) return 0;
  return *std::max_element(frame_of.begin(), frame_of.end());
}

SuperimposedCloud superimpose(std::span<const LidarScan> scans,
                              std::span<const Posed> poses) {
  if (scans.size() != poses.size()) {
    throw ArityError("superimpose: " + std::to_string(scans.size()) +
                     " scans but " + std::to_string(poses.size()) + " poses");
  }
  Eigen::Index total = 0;
  for (const auto& scan : scans) total += scan.size();

  SuperimposedCloud cloud;
  cloud.points.resize(total, 3);
  cloud.frame_of.reserve(total);
  cloud.source_point.reserve(total);
  Eigen::Index row = 0;
  for (std::size_t s = 0; s < scans.size(); ++s) {
    const auto& scan = scans[s];
    if (scan.size() > 0) {
      cloud.points.middleRows(row, scan.size()) = apply_pose(scan, poses[s]);
    } else {
      poses[s].validate();
    }
    for (Eigen::Index i = 0; i < scan.size(); ++i) {
      cloud.frame_of.push_back(scan.frame_index);
      cloud.source_point.push_back({static_cast<int>(s), static_cast<int>(i)});
    }
    row += scan.size();
  }
  return cloud;
}

VoxelGrid voxelize(const Points& points, std::span<const int> frame_of,
                   double voxel_size) {
  if (!(voxel_size > 0.0)) {
    throw ParameterError("voxelize: voxel_size must be positive");
  }
  if (static_cast<Eigen::Index>(frame_of.size()) != points.rows()) {
    throw ArityError("voxelize: frame_of length differs from point count");
  }
  const Eigen::Index m = points.rows();
  VoxelGrid grid;
  grid.voxel_size = voxel_size;
  grid.point_to_voxel.resize(m);

  std::unordered_map<std::array<std::int64_t, 3>, int, CoordHash> index;
  index.reserve(static_cast<std::size_t>(m));
  std::vector<std::array<std::int64_t, 3>> coords;
  for (Eigen::Index i = 0; i < m; ++i) {
    std::array<std::int64_t, 3> c;
    for (int a = 0; a < 3; ++a) {
      c[a] = static_cast<std::int64_t>(std::floor(points(i, a) / voxel_size));
    }
    auto [it, inserted] = index.try_emplace(c, static_cast<int>(coords.size()));
    if (inserted) {
      coords.push_back(c);
      grid.voxel_to_points.emplace_back();
    }
    grid.point_to_voxel[i] = it->second;
    grid.voxel_to_points[it->second].push_back(static_cast<int>(i));
  }

  const auto k = static_cast<Eigen::Index>(coords.size());
  grid.voxel_coords.resize(k, 3);
  grid.voxel_centroids.setZero(k, 3);
  grid.voxel_frame.setZero(k);
  for (Eigen::Index v = 0; v < k; ++v) {
    for (int a = 0; a < 3; ++a) grid.voxel_coords(v, a) = coords[v][a];
    const auto& members = grid.voxel_to_points[v];
    for (const int p : members) {
      grid.voxel_centroids.row(v) += points.row(p);
      grid.voxel_frame(v) += frame_of[p];
    }
    grid.voxel_centroids.row(v) /= static_cast<double>(members.size());
    grid.voxel_frame(v) /= static_cast<double>(members.size());
  }
  return grid;
}

VoxelGrid voxelize(const SuperimposedCloud& cloud, double voxel_size) {
  return voxelize(cloud.points, cloud.frame_of, voxel_size);
}

std::vector<int> farthest_point_sampling(const Points& points, int k,
                                         int seed_index) {
  const auto n = static_cast<int>(points.rows());
  if (k < 1 || k > n) {
    throw ParameterError("farthest_point_sampling: k=" + std::to_string(k) +
                         " outside [1, " + std::to_string(n) + "]");
  }
  if (seed_index < 0 || seed_index >= n) {
    throw ParameterError("farthest_point_sampling: seed index out of range");
  }
  std::vector<int> selected;
  selected.reserve(k);
  selected.push_back(seed_index);
  Eigen::VectorXd min_dist = Eigen::VectorXd::Constant(
      n, std::numeric_limits<double>::infinity());
  std::vector<char> taken(n, 0);
  taken[seed_index] = 1;
  int last = seed_index;
  while (static_cast<int>(selected.size()) < k) {
    int best = -1;
    double best_dist = -1.0;
    for (int i = 0; i < n; ++i) {
      if (taken[i]) continue;
      const double d = (points.row(i) - points.row(last)).squaredNorm();
      if (d < min_dist(i)) min_dist(i) = d;
      if (min_dist(i) > best_dist) {
        best_dist = min_dist(i);
        best = i;
      }
    }
    taken[best] = 1;
    selected.push_back(best);
    last = best;
  }
  return selected;
}

Extent compute_extent(const Points& points) {
  Extent e;
  if (points.rows() == 0) return e;
  e.min = points.colwise().minCoeff().transpose();
  e.max = points.colwise().maxCoeff().transpose();
  return e;
}

TrajectoryBox trajectory_box(const Points& instance_points,
                             const Extent& reference_extent) {
  if (instance_points.rows() == 0) {
    throw EmptyInstanceError("trajectory_box: instance has no points");
  }
  const Eigen::Vector3d size = reference_extent.size();
  if (!(size.minCoeff() > 0.0)) {
    throw ParameterError("trajectory_box: reference extent is degenerate");
  }
  const Extent own = compute_extent(instance_points);
  TrajectoryBox box;
  box.center = ((0.5 * (own.min + own.max) - reference_extent.min).array() /
                size.array())
                   .matrix();
  box.dims = (own.size().array() / size.array()).matrix();
  box.center = box.center.cwiseMax(0.0).cwiseMin(1.0);
  box.dims = box.dims.cwiseMax(0.0).cwiseMin(1.0);
  return box;
}

}  // namespace p4d
