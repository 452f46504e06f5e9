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

#include "p4d/pca.hpp"

#include <glog/logging.h>

#include <cmath>
#include <fstream>
#include <string>

namespace p4d {

PrincipalComponents principal_components(const Eigen::MatrixXd& features, int k,
                                         int max_iterations, double tol) {
  const auto n = features.rows();
  const auto d = features.cols();
  if (n < 1 || d < 1) throw ParameterError("pca: empty feature matrix");
  if (k < 1 || k > d) throw ParameterError("pca: k must be in [1, D]");
  PrincipalComponents pc;
  pc.mean = features.colwise().mean();
  const Eigen::MatrixXd centered = features.rowwise() - pc.mean;
  Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n);
  const double total = cov.trace();
  pc.components.setZero(d, k);
  pc.variances.setZero(k);

  for (int c = 0; c < k; ++c) {
    if (!(total > 0.0)) break;
    // Deterministic start that is not orthogonal to any axis.
    Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(d, 1.0, 2.0).normalized();
    double lambda = 0.0;
    for (int it = 0; it < max_iterations; ++it) {
      Eigen::VectorXd w = cov * v;
      const double norm = w.norm();
      if (norm <= tol * total) {
        lambda = 0.0;
        break;
      }
      w /= norm;
      const double change = std::min((w - v).norm(), (w + v).norm());
      v = w;
      lambda = v.dot(cov * v);
      if (change < 1e-13) break;
    }
    if (lambda <= tol * total) break;
    // Sign convention: largest-magnitude entry positive.
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    pc.components.col(c) = v;
    pc.variances(c) = lambda;
    cov -= lambda * v * v.transpose();
  }
  return pc;
}

Colors pca_colors(const Eigen::MatrixXd& features) {
  const auto n = features.rows();
  Colors colors = Colors::Constant(n, 3, 127);
  if (n == 0) return colors;
  const int k = static_cast<int>(std::min<Eigen::Index>(3, features.cols()));
  const PrincipalComponents pc = principal_components(features, k);
  if (pc.variances.isZero(0.0)) {
    LOG(WARNING) << "pca_colors: constant features; output is gray";
    return colors;
  }
  const Eigen::MatrixXd proj = (features.rowwise() - pc.mean) * pc.components;
  for (int c = 0; c < k; ++c) {
    if (pc.variances(c) == 0.0) continue;
    const double lo = proj.col(c).minCoeff();
    const double hi = proj.col(c).maxCoeff();
    if (!(hi > lo)) continue;
    for (Eigen::Index i = 0; i < n; ++i) {
      colors(i, c) = static_cast<std::uint8_t>(std::lround(255.0 * (proj(i, c) - lo) / (hi - lo)));
    }
  }
  return colors;
}

void write_ply(const std::filesystem::path& path, const Points& points,
               const Colors& colors) {
  if (points.rows() != colors.rows()) {
    throw ShapeError("write_ply: " + std::to_string(points.rows()) + " points, " +
                     std::to_string(colors.rows()) + " colors");
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "ply\nformat ascii 1.0\nelement vertex " << points.rows()
      << "\nproperty float x\nproperty float y\nproperty float z\n"
         "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    out << static_cast<float>(points(i, 0)) << ' ' << static_cast<float>(points(i, 1)) << ' '
        << static_cast<float>(points(i, 2)) << ' ' << int(colors(i, 0)) << ' '
        << int(colors(i, 1)) << ' ' << int(colors(i, 2)) << '\n';
  }
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace p4d
