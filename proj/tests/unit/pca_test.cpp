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

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <filesystem>
#include <fstream>
#include <string>

#include "p4d/rng.hpp"

namespace p4d {
namespace {

Eigen::MatrixXd Anisotropic(std::uint64_t seed, int n, const Eigen::VectorXd& scales) {
  Rng rng(seed);
  const auto d = scales.size();
  Eigen::MatrixXd z(n, d), r(d, d);
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
  for (Eigen::Index i = 0; i < r.size(); ++i) r(i) = rng.normal();
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(r).householderQ();
  Eigen::MatrixXd x = z * scales.asDiagonal() * q.transpose();
  x.rowwise() += Eigen::RowVectorXd::LinSpaced(d, -3.0, 3.0);
  return x;
}

TEST(PcaTest, MatchesDenseEigensolver) {
  Eigen::VectorXd scales(6);
  scales << 5, 3, 2, 1, 0.5, 0.2;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Eigen::MatrixXd x = Anisotropic(seed, 400, scales);
    const PrincipalComponents pc = principal_components(x, 3);
    const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
    const Eigen::MatrixXd cov = centered.transpose() * centered / 400.0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    for (int c = 0; c < 3; ++c) {
      const Eigen::Index j = 5 - c;  // ascending eigenvalues
      EXPECT_NEAR(pc.variances(c), es.eigenvalues()(j), 1e-6 * es.eigenvalues()(5));
      const Eigen::VectorXd ref = es.eigenvectors().col(j);
      const double err = std::min((pc.components.col(c) - ref).norm(),
                                  (pc.components.col(c) + ref).norm());
      EXPECT_LT(err, 1e-6) << "seed " << seed << " component " << c;
    }
    EXPECT_NEAR((pc.components.transpose() * pc.components - Eigen::Matrix3d::Identity())
                    .cwiseAbs()
                    .maxCoeff(),
                0.0, 1e-9);
  }
}

TEST(PcaTest, RankOneData) {
  Eigen::MatrixXd x(5, 3);
  for (int i = 0; i < 5; ++i) x.row(i) = static_cast<double>(i) * Eigen::RowVector3d(1, 2, 2);
  const PrincipalComponents pc = principal_components(x, 3);
  EXPECT_NEAR(pc.components(0, 0), 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(pc.components(1, 0), 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(pc.variances(0), 2.0 * 9.0, 1e-9);  // var of 0..4 is 2, |(1,2,2)|^2 = 9
  EXPECT_EQ(pc.variances(1), 0.0);
  EXPECT_EQ(pc.components.col(1).norm(), 0.0);
}

TEST(PcaTest, SignConventionLargestEntryPositive) {
  Eigen::VectorXd scales(4);
  scales << 4, 2, 1, 0.5;
  const PrincipalComponents pc = principal_components(Anisotropic(9, 200, scales), 4);
  for (int c = 0; c < 4; ++c) {
    Eigen::Index arg = 0;
    pc.components.col(c).cwiseAbs().maxCoeff(&arg);
    EXPECT_GT(pc.components(arg, c), 0.0);
  }
}

TEST(PcaTest, InvalidArguments) {
  EXPECT_THROW(principal_components(Eigen::MatrixXd(0, 3), 1), ParameterError);
  EXPECT_THROW(principal_components(Eigen::MatrixXd::Ones(4, 3), 4), ParameterError);
}

TEST(PcaColorsTest, ConstantFeaturesAreGray) {
  const Colors c = pca_colors(Eigen::MatrixXd::Constant(10, 8, 3.0));
  EXPECT_TRUE((c.array() == 127).all());
}

TEST(PcaColorsTest, ChannelsSpanFullRange) {
  Eigen::VectorXd scales(5);
  scales << 3, 2, 1, 0.1, 0.1;
  const Colors c = pca_colors(Anisotropic(4, 100, scales));
  for (int ch = 0; ch < 3; ++ch) {
    EXPECT_EQ(c.col(ch).minCoeff(), 0);
    EXPECT_EQ(c.col(ch).maxCoeff(), 255);
  }
}

TEST(PlyTest, WritesHeaderAndVertices) {
  Points p(2, 3);
  p << 0, 1, 2, 3.5, 4, 5;
  Colors c(2, 3);
  c << 255, 0, 127, 1, 2, 3;
  const auto path = std::filesystem::temp_directory_path() / "p4d_pca_test.ply";
  write_ply(path, p, c);
  std::ifstream in(path);
  std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  EXPECT_EQ(all.rfind("ply\nformat ascii 1.0\nelement vertex 2\n", 0), 0u);
  EXPECT_NE(all.find("end_header\n0 1 2 255 0 127\n3.5 4 5 1 2 3\n"), std::string::npos);
  std::filesystem::remove(path);
  EXPECT_THROW(write_ply(path, p, Colors(1, 3)), ShapeError);
}

}  // namespace
}  // namespace p4d
