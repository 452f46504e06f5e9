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

#include "p4d/encoding.hpp"

#include <cmath>
#include <numbers>

namespace p4d {

Points WindowFrame::normalize_positions(const Points& p) const {
  Eigen::Vector3d size = extent.size();
  for (int a = 0; a < 3; ++a) {
    if (!(size(a) > 0.0)) size(a) = 1.0;
  }
  Points out = p.rowwise() - extent.min.transpose();
  out.array().rowwise() /= size.transpose().array();
  return out;
}

Eigen::VectorXd WindowFrame::normalize_frames(const Eigen::VectorXd& frames) const {
  return (frames.array() - static_cast<double>(first_frame)) /
         static_cast<double>(num_frames);
}

WindowFrame WindowFrame::of(const SuperimposedCloud& cloud) {
  WindowFrame w;
  w.extent = compute_extent(cloud.points);
  w.first_frame = cloud.first_frame();
  w.num_frames = cloud.last_frame() - cloud.first_frame() + 1;
  return w;
}

FourierBank::FourierBank(const FourierConfig& config) : config_(config) {
  if (config.num_frequencies < 1) {
    throw ParameterError("FourierBank: num_frequencies must be >= 1");
  }
  const double d = 1.0 / std::sqrt(3.0);
  directions_ << 1, 0, 0,  //
      0, 1, 0,             //
      0, 0, 1,             //
      d, d, d,             //
      d, -d, d,            //
      -d, d, d,            //
      d, d, -d;
}

int FourierBank::spatial_dim() const {
  return 2 * kNumDirections * config_.num_frequencies;
}

int FourierBank::temporal_dim() const { return 2 * config_.num_frequencies; }

double FourierBank::frequency(int k) const {
  return config_.first_frequency * std::pow(config_.frequency_base, k);
}

Eigen::MatrixXd FourierBank::spatial(const Points& normalized) const {
  const Eigen::MatrixXd proj = normalized * directions_.transpose();  // N x 7
  const int nf = config_.num_frequencies;
  Eigen::MatrixXd out(normalized.rows(), spatial_dim());
  for (int k = 0; k < nf; ++k) {
    const double w = 2.0 * std::numbers::pi * frequency(k);
    for (int d = 0; d < kNumDirections; ++d) {
      const int col = 2 * (k * kNumDirections + d);
      out.col(col) = (w * proj.col(d)).array().sin();
      out.col(col + 1) = (w * proj.col(d)).array().cos();
    }
  }
  return out;
}

Eigen::MatrixXd FourierBank::temporal(const Eigen::VectorXd& normalized) const {
  const int nf = config_.num_frequencies;
  Eigen::MatrixXd out(normalized.size(), temporal_dim());
  for (int k = 0; k < nf; ++k) {
    const double w = 2.0 * std::numbers::pi * frequency(k);
    out.col(2 * k) = (w * normalized).array().sin();
    out.col(2 * k + 1) = (w * normalized).array().cos();
  }
  return out;
}

}  // namespace p4d
