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

// Point-cloud primitives: rigid poses, scan superposition, voxelization,
// farthest point sampling and normalized trajectory boxes.

#pragma once

#include <Eigen/Core>
#include <Eigen/LU>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "p4d/error.hpp"

namespace p4d {

template <typename Scalar>
using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Mat3 = Eigen::Matrix<Scalar, 3, 3>;
template <typename Scalar>
using PointsX3 = Eigen::Matrix<Scalar, Eigen::Dynamic, 3>;

using Points = PointsX3<double>;
using VoxelCoords = Eigen::Matrix<std::int64_t, Eigen::Dynamic, 3>;

inline constexpr int kIgnoreLabel = 255;

struct PointLabel {
  int semantic = 0;
  int instance = 0;
  friend bool operator==(const PointLabel&, const PointLabel&) = default;
};

// Rigid transform x -> R x + t.
template <typename Scalar>
struct Pose {
  Mat3<Scalar> rotation = Mat3<Scalar>::Identity();
  Vec3<Scalar> translation = Vec3<Scalar>::Zero();

  static Pose Identity() { return Pose{}; }

  // Throws InvalidPoseError unless R^T R = I and det R = +1 within tol.
  void validate(Scalar tol = Scalar(1e-6)) const {
    const Scalar ortho =
        (rotation.transpose() * rotation - Mat3<Scalar>::Identity())
            .cwiseAbs()
            .maxCoeff();
    if (!(ortho <= tol)) throw InvalidPoseError("rotation is not orthonormal");
    if (!(std::abs(rotation.determinant() - Scalar(1)) <= tol)) {
      throw InvalidPoseError("rotation determinant is not +1");
    }
    if (!translation.allFinite()) throw InvalidPoseError("non-finite translation");
  }

  Pose inverse() const {
    Pose inv;
    inv.rotation = rotation.transpose();
    inv.translation = -(inv.rotation * translation);
    return inv;
  }

  Pose operator*(const Pose& other) const {
    Pose out;
    out.rotation = rotation * other.rotation;
    out.translation = rotation * other.translation + translation;
    return out;
  }
};

using Posed = Pose<double>;

// Rotation about +z by `radians`.
template <typename Scalar>
Mat3<Scalar> rotation_z(Scalar radians) {
  Mat3<Scalar> r = Mat3<Scalar>::Identity();
  const Scalar c = std::cos(radians), s = std::sin(radians);
  r(0, 0) = c;
  r(0, 1) = -s;
  r(1, 0) = s;
  r(1, 1) = c;
  return r;
}

struct LidarScan {
  Points points;  // sensor frame, meters
  int frame_index = 0;
  std::optional<std::vector<PointLabel>> labels;

  Eigen::Index size() const { return points.rows(); }
};

template <typename Scalar>
PointsX3<Scalar> apply_pose(const PointsX3<Scalar>& points,
                            const Pose<Scalar>& pose) {
  pose.validate();
  PointsX3<Scalar> out(points.rows(), 3);
  out.noalias() = points * pose.rotation.transpose();
  out.rowwise() += pose.translation.transpose();
  return out;
}

inline Points apply_pose(const LidarScan& scan, const Posed& pose) {
  return apply_pose<double>(scan.points, pose);
}

struct SourcePoint {
  int scan = 0;
  int point = 0;
  friend bool operator==(const SourcePoint&, const SourcePoint&) = default;
};

// Ego-pose aligned concatenation of a window of scans.
struct SuperimposedCloud {
  Points points;                          // M x 3, global frame
  std::vector<int> frame_of;              // M
  std::vector<SourcePoint> source_point;  // M, index into the input scan list

  Eigen::Index size() const { return points.rows(); }
  int first_frame() const;
  int last_frame() const;
};

SuperimposedCloud superimpose(std::span<const LidarScan> scans,
                              std::span<const Posed> poses);

struct VoxelGrid {
  VoxelCoords voxel_coords;                    // K0 x 3, unique rows
  double voxel_size = 0.0;
  std::vector<int> point_to_voxel;             // M
  std::vector<std::vector<int>> voxel_to_points;  // K0
  Points voxel_centroids;                      // K0 x 3
  Eigen::VectorXd voxel_frame;                 // K0, mean member frame index

  Eigen::Index num_voxels() const { return voxel_coords.rows(); }
};

// Voxel of p is floor(p / voxel_size); voxels are numbered in order of first
// occurrence.
VoxelGrid voxelize(const SuperimposedCloud& cloud, double voxel_size);
VoxelGrid voxelize(const Points& points, std::span<const int> frame_of,
                   double voxel_size);

// Greedy farthest point sampling. Ties go to the lowest index.
std::vector<int> farthest_point_sampling(const Points& points, int k,
                                         int seed_index);

struct Extent {
  Eigen::Vector3d min = Eigen::Vector3d::Zero();
  Eigen::Vector3d max = Eigen::Vector3d::Zero();

  Eigen::Vector3d size() const { return max - min; }
};

Extent compute_extent(const Points& points);

// Axis-aligned box normalized against a reference extent, all in [0, 1].
struct TrajectoryBox {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d dims = Eigen::Vector3d::Zero();

  Eigen::Matrix<double, 6, 1> as_vector() const {
    Eigen::Matrix<double, 6, 1> v;
    v << center, dims;
    return v;
  }
};

TrajectoryBox trajectory_box(const Points& instance_points,
                             const Extent& reference_extent);

}  // namespace p4d
