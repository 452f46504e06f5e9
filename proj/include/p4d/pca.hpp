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

// Principal components of learned features, rendered as point colors.

#pragma once

#include <cstdint>
#include <filesystem>

#include "p4d/geometry.hpp"

namespace p4d {

struct PrincipalComponents {
  Eigen::MatrixXd components;  // D x k, unit columns, descending variance
  Eigen::VectorXd variances;   // k, eigenvalues of the sample covariance
  Eigen::RowVectorXd mean;     // 1 x D
};

// Top-k components by power iteration on the covariance with deflation.
// Components whose variance is below `tol` times the total are zero columns.
PrincipalComponents principal_components(const Eigen::MatrixXd& features, int k,
                                         int max_iterations = 1000, double tol = 1e-12);

using Colors = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, 3>;

// Projects onto the top three components and maps each channel's range to
// [0, 255]. Channels without variance are gray (127); all-constant features
// log a warning.
Colors pca_colors(const Eigen::MatrixXd& features);

// ASCII PLY with x y z red green blue per vertex.
void write_ply(const std::filesystem::path& path, const Points& points,
               const Colors& colors);

}  // namespace p4d
