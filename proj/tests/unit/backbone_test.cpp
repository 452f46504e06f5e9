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

#include "p4d/backbone.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <tuple>
#include <vector>

#include "p4d/rng.hpp"

namespace p4d {
namespace {

struct Window {
  SuperimposedCloud cloud;
  VoxelGrid grid;
  WindowFrame frame;
};

Window RandomWindow(std::uint64_t seed, int n = 300, double voxel = 0.3) {
  Rng rng(seed);
  Window w;
  w.cloud.points.resize(n, 3);
  for (int i = 0; i < n; ++i) {
    for (int a = 0; a < 3; ++a) w.cloud.points(i, a) = 6.0 * rng.uniform() - 3.0;
    w.cloud.frame_of.push_back(static_cast<int>(rng.index(3)));
    w.cloud.source_point.push_back({w.cloud.frame_of.back(), i});
  }
  w.grid = voxelize(w.cloud, voxel);
  w.frame = WindowFrame::of(w.cloud);
  return w;
}

TEST(LayoutTest, ParentsHalveCoordinates) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Window w = RandomWindow(seed);
    const PyramidLayout layout = build_layout(w.grid, 4);
    ASSERT_EQ(layout.levels.size(), 4u);
    for (int r = 0; r + 1 < 4; ++r) {
      const PyramidLevel& child = layout.levels[r];
      const PyramidLevel& parent = layout.levels[r + 1];
      std::set<std::tuple<long, long, long>> expected;
      for (Eigen::Index i = 0; i < child.size(); ++i) {
        const auto h = [&](int a) {
          return static_cast<long>(std::floor(static_cast<double>(child.coords(i, a)) / 2.0));
        };
        expected.insert({h(0), h(1), h(2)});
        const int p = child.parent[i];
        EXPECT_EQ(parent.coords(p, 0), h(0));
        EXPECT_EQ(parent.coords(p, 1), h(1));
        EXPECT_EQ(parent.coords(p, 2), h(2));
      }
      EXPECT_EQ(static_cast<std::size_t>(parent.size()), expected.size());
    }
    EXPECT_TRUE(layout.levels.back().parent.empty());
  }
}

TEST(LayoutTest, ParentsNumberedByFirstOccurrence) {
  const Window w = RandomWindow(9);
  const PyramidLayout layout = build_layout(w.grid, 2);
  int next = 0;
  for (int p : layout.levels[0].parent) {
    ASSERT_LE(p, next);
    if (p == next) ++next;
  }
}

TEST(LayoutTest, DepthOneHasSingleLevel) {
  const Window w = RandomWindow(1);
  const PyramidLayout layout = build_layout(w.grid, 1);
  ASSERT_EQ(layout.levels.size(), 1u);
  EXPECT_EQ(layout.levels[0].size(), w.grid.num_voxels());
  EXPECT_THROW(build_layout(w.grid, 0), ParameterError);
}

TEST(LayoutTest, NegativeCoordinatesFloor) {
  Points pts(2, 3);
  pts << -0.05, 0.05, 0.05,  //
      -0.15, 0.05, 0.05;
  const std::vector<int> frames = {0, 0};
  const VoxelGrid grid = voxelize(pts, frames, 0.1);
  const PyramidLayout layout = build_layout(grid, 2);
  // Voxels -1 and -2 share the parent -1.
  ASSERT_EQ(layout.levels[1].size(), 1);
  EXPECT_EQ(layout.levels[1].coords(0, 0), -1);
}

TEST(PoolTest, MeanOfChildren) {
  Points pts(2, 3);
  pts << 0.05, 0.05, 0.05,  //
      0.15, 0.05, 0.05;
  const std::vector<int> frames = {0, 0};
  const VoxelGrid grid = voxelize(pts, frames, 0.1);
  const PyramidLayout layout = build_layout(grid, 2);
  ASSERT_EQ(layout.levels[1].size(), 1);
  ad::Tape t;
  const ad::Var child = t.leaf((ad::Matrix(2, 1) << 1.0, 3.0).finished());
  const ad::Var pooled = Backbone::pool_to_parent(layout, 0, child);
  EXPECT_EQ(pooled.value()(0, 0), 2.0);
  EXPECT_NEAR(layout.levels[1].positions(0, 0), 0.1, 1e-12);
}

TEST(SeedFeaturesTest, OffsetsFramesAndCounts) {
  Points pts(3, 3);
  pts << 0.25, 0.5, 0.75,  //
      0.25, 0.5, 0.75,     //
      1.5, 1.5, 1.5;
  const std::vector<int> frames = {0, 2, 1};
  SuperimposedCloud cloud;
  cloud.points = pts;
  cloud.frame_of = frames;
  cloud.source_point = {{0, 0}, {2, 0}, {1, 0}};
  const VoxelGrid grid = voxelize(cloud, 1.0);
  const WindowFrame window = WindowFrame::of(cloud);
  const Eigen::MatrixXd s = seed_features(grid, window);
  ASSERT_EQ(s.rows(), 2);
  ASSERT_EQ(s.cols(), kSeedFeatureDim);
  EXPECT_NEAR(s(0, 0), 0.25, 1e-12);
  EXPECT_NEAR(s(0, 1), 0.5, 1e-12);
  EXPECT_NEAR(s(0, 2), 0.75, 1e-12);
  EXPECT_NEAR(s(0, 3), 1.0 / 3.0, 1e-12);  // mean frame 1 of 3 frames
  EXPECT_NEAR(s(0, 4), std::log(2.0), 1e-12);
  EXPECT_NEAR(s(1, 4), 0.0, 1e-12);
}

TEST(BackboneTest, ShapesAndDeterminism) {
  const Window w = RandomWindow(4);
  BackboneConfig cfg;
  cfg.depth = 3;
  cfg.widths = {8, 12, 16};
  const PyramidLayout layout = build_layout(w.grid, cfg.depth);
  ad::Matrix first;
  for (int rep = 0; rep < 2; ++rep) {
    ad::ParameterStore store;
    Rng rng(5);
    Backbone bb(store, cfg, rng);
    ad::Tape t;
    const FeaturePyramid p =
        bb.extract(t, layout, w.frame, t.constant(seed_features(w.grid, w.frame)));
    ASSERT_EQ(p.depth(), 3);
    for (int r = 0; r < 3; ++r) {
      EXPECT_EQ(p.features[r].rows(), layout.levels[r].size());
      EXPECT_EQ(p.features[r].cols(), cfg.widths[r]);
      EXPECT_TRUE(p.features[r].value().allFinite());
      EXPECT_GE(p.features[r].value().minCoeff(), 0.0);  // relu output
    }
    if (rep == 0) {
      first = p.features[0].value();
    } else {
      EXPECT_EQ(p.features[0].value(), first);
    }
  }
}

TEST(BackboneTest, GradientsReachEveryParameter) {
  const Window w = RandomWindow(6, 80, 0.8);
  BackboneConfig cfg;
  cfg.depth = 2;
  cfg.widths = {4, 6};
  cfg.fourier.num_frequencies = 2;
  const PyramidLayout layout = build_layout(w.grid, cfg.depth);
  ad::ParameterStore store;
  Rng rng(7);
  Backbone bb(store, cfg, rng);
  auto params = store.all();
  // Zero-initialized biases put dead-relu voxels exactly on the kink, where
  // finite differences see half the slope.
  Rng jitter(3);
  for (ad::Parameter* p : params) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value(i) += 0.1 * jitter.normal();
  }
  const Eigen::MatrixXd seed = seed_features(w.grid, w.frame);
  const double err = ad::finite_difference_check(
      [&](ad::Tape& t) {
        const FeaturePyramid p = bb.extract(t, layout, w.frame, t.constant(seed));
        return ad::mean(ad::mul(p.features[0], p.features[0]));
      },
      params, 1e-6, 7);
  EXPECT_LT(err, 1e-5);
}

TEST(BackboneTest, RejectsMismatchedInputs) {
  const Window w = RandomWindow(8);
  BackboneConfig cfg;
  cfg.depth = 2;
  cfg.widths = {4, 4};
  ad::ParameterStore store;
  Rng rng(0);
  Backbone bb(store, cfg, rng);
  ad::Tape t;
  const PyramidLayout wrong_depth = build_layout(w.grid, 3);
  const ad::Var seed = t.constant(seed_features(w.grid, w.frame));
  EXPECT_THROW(bb.extract(t, wrong_depth, w.frame, seed), ShapeError);
  BackboneConfig bad = cfg;
  bad.widths = {4};
  EXPECT_THROW(bad.validate(), ParameterError);
}

}  // namespace
}  // namespace p4d
