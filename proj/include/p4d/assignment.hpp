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

#pragma once

#include <Eigen/Core>
#include <vector>

namespace p4d {

// Minimum-cost one-to-one assignment on a rectangular cost matrix
// (shortest augmenting paths with potentials, O(n^2 m)).
//
// Returns, for each row, the assigned column or -1. When rows <= cols every
// row is assigned; otherwise every column is. Costs must be finite.
std::vector<int> linear_assignment(const Eigen::MatrixXd& cost);

// Sum of cost(r, assignment[r]) over assigned rows, in row order.
double assignment_cost(const Eigen::MatrixXd& cost, const std::vector<int>& assignment);

}  // namespace p4d
