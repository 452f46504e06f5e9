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

// Fixed sinusoidal feature banks for positions and scan times.

#pragma once

#include <Eigen/Core>

#include "p4d/geometry.hpp"

namespace p4d {

// Spatial and temporal normalization for one superimposed window. Positions
// map to [0, 1] over the window extent; frames map to (frame - first) / count.
struct WindowFrame {
  Extent extent;
  int first_frame = 0;
  int num_frames = 1;

  Points normalize_positions(const Points& p) const;
  Eigen::VectorXd normalize_frames(const Eigen::VectorXd& frames) const;

  static WindowFrame of(const SuperimposedCloud& cloud);
};

struct FourierConfig {
  int num_frequencies = 6;
  double first_frequency = 0.5;  // cycles per unit of normalized input
  double frequency_base = 2.0;   // geometric spacing
};

// Frequencies f_k = first * base^k. The spatial bank projects the normalized
// position on seven fixed directions (the three axes and the four cube
// diagonals); each (direction, frequency) contributes sin and cos of
// 2 pi f_k <w, p>. The temporal bank does the same on the normalized frame.
class FourierBank {
 public:
  explicit FourierBank(const FourierConfig& config = {});

  int spatial_dim() const;
  int temporal_dim() const;
  double frequency(int k) const;

  // Rows of normalized positions (N x 3) -> N x spatial_dim(), in [-1, 1].
  Eigen::MatrixXd spatial(const Points& normalized) const;
  // Normalized frames (N) -> N x temporal_dim(), in [-1, 1].
  Eigen::MatrixXd temporal(const Eigen::VectorXd& normalized) const;

  static constexpr int kNumDirections = 7;

 private:
  FourierConfig config_;
  Eigen::Matrix<double, kNumDirections, 3> directions_;
};

}  // namespace p4d
