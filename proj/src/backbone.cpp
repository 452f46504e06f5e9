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

#include <array>
#include <cmath>
#include <map>
#include <string>

namespace p4d {
namespace {

std::int64_t floor_half(std::int64_t c) { return c >= 0 ? c / 2 : -((-c + 1) / 2); }

}  // namespace

void BackboneConfig::validate() const {
  if (depth < 1) throw ParameterError("backbone: depth must be >= 1");
  if (static_cast<int>(widths.size()) != depth) {
    throw ParameterError("backbone: need one width per level");
  }
  for (int w : widths) {
    if (w < 1) throw ParameterError("backbone: widths must be positive");
  }
}

PyramidLayout build_layout(const VoxelGrid& grid, int depth) {
  if (depth < 1) throw ParameterError("build_layout: depth must be >= 1");
  PyramidLayout layout;
  PyramidLevel base;
  base.coords = grid.voxel_coords;
  base.positions = grid.voxel_centroids;
  base.frame = grid.voxel_frame;
  layout.levels.push_back(std::move(base));

  for (int r = 1; r < depth; ++r) {
    PyramidLevel& child = layout.levels.back();
    std::map<std::array<std::int64_t, 3>, int> index;
    std::vector<std::array<std::int64_t, 3>> coords;
    child.parent.resize(child.size());
    for (Eigen::Index i = 0; i < child.size(); ++i) {
      const std::array<std::int64_t, 3> c = {floor_half(child.coords(i, 0)),
                                             floor_half(child.coords(i, 1)),
                                             floor_half(child.coords(i, 2))};
      auto [it, inserted] = index.try_emplace(c, static_cast<int>(coords.size()));
      if (inserted) coords.push_back(c);
      child.parent[i] = it->second;
    }
    PyramidLevel up;
    const auto k = static_cast<Eigen::Index>(coords.size());
    up.coords.resize(k, 3);
    up.positions.setZero(k, 3);
    up.frame.setZero(k);
    Eigen::VectorXd count = Eigen::VectorXd::Zero(k);
    for (Eigen::Index v = 0; v < k; ++v) {
      for (int a = 0; a < 3; ++a) up.coords(v, a) = coords[v][a];
    }
    for (Eigen::Index i = 0; i < child.size(); ++i) {
      const int p = child.parent[i];
      up.positions.row(p) += child.positions.row(i);
      up.frame(p) += child.frame(i);
      count(p) += 1.0;
    }
    up.positions.array().colwise() /= count.array();
    up.frame.array() /= count.array();
    layout.levels.push_back(std::move(up));
  }
  return layout;
}

Eigen::MatrixXd seed_features(const VoxelGrid& grid, const WindowFrame& window) {
  const Eigen::Index k = grid.num_voxels();
  Eigen::MatrixXd seed(k, kSeedFeatureDim);
  const Eigen::VectorXd frames = window.normalize_frames(grid.voxel_frame);
  for (Eigen::Index v = 0; v < k; ++v) {
    for (int a = 0; a < 3; ++a) {
      const double corner = static_cast<double>(grid.voxel_coords(v, a)) * grid.voxel_size;
      seed(v, a) = (grid.voxel_centroids(v, a) - corner) / grid.voxel_size;
    }
    seed(v, 3) = frames(v);
    seed(v, 4) = std::log(static_cast<double>(grid.voxel_to_points[v].size()));
  }
  return seed;
}

Backbone::Backbone(ad::ParameterStore& store, const BackboneConfig& config, Rng& rng)
    : config_(config), bank_(config.fourier) {
  config_.validate();
  const int pos_dim =
      config_.positional_input ? bank_.spatial_dim() + bank_.temporal_dim() : 0;
  for (int r = 0; r < config_.depth; ++r) {
    const int in = (r == 0 ? kSeedFeatureDim : config_.widths[r - 1]) + pos_dim;
    const int w = config_.widths[r];
    encoders_.push_back(
        nn::make_mlp(store, "backbone.enc" + std::to_string(r), {in, w, w}, rng));
  }
  for (int r = 0; r + 1 < config_.depth; ++r) {
    const int w = config_.widths[r];
    const int in = config_.widths[r + 1] + w + pos_dim;
    decoders_.push_back(
        nn::make_mlp(store, "backbone.dec" + std::to_string(r), {in, w, w}, rng));
  }
}

Eigen::MatrixXd Backbone::positional(const PyramidLevel& level,
                                     const WindowFrame& window) const {
  const Eigen::MatrixXd s = bank_.spatial(window.normalize_positions(level.positions));
  const Eigen::MatrixXd t = bank_.temporal(window.normalize_frames(level.frame));
  Eigen::MatrixXd out(level.size(), s.cols() + t.cols());
  out << s, t;
  return out;
}

ad::Var Backbone::pool_to_parent(const PyramidLayout& layout, int level,
                                 ad::Var child_features) {
  const auto& child = layout.levels.at(level);
  const auto& parent = layout.levels.at(level + 1);
  return ad::segment_mean(child_features, child.parent,
                          static_cast<int>(parent.size()));
}

FeaturePyramid Backbone::extract(ad::Tape& tape, const PyramidLayout& layout,
                                 const WindowFrame& window, ad::Var seed) const {
  if (static_cast<int>(layout.levels.size()) != config_.depth) {
    throw ShapeError("backbone: layout has " + std::to_string(layout.levels.size()) +
                     " levels, config expects " + std::to_string(config_.depth));
  }
  if (seed.rows() != layout.levels[0].size() || seed.cols() != kSeedFeatureDim) {
    throw ShapeError("backbone: seed is " + std::to_string(seed.rows()) + "x" +
                     std::to_string(seed.cols()) + ", expected " +
                     std::to_string(layout.levels[0].size()) + "x" +
                     std::to_string(kSeedFeatureDim));
  }
  auto with_position = [&](ad::Var x, int r) {
    if (!config_.positional_input) return x;
    const ad::Var parts[] = {x, tape.constant(positional(layout.levels[r], window))};
    return ad::concat_cols(parts);
  };

  std::vector<ad::Var> skip;
  ad::Var x = seed;
  for (int r = 0; r < config_.depth; ++r) {
    if (r > 0) x = pool_to_parent(layout, r - 1, x);
    x = ad::relu(encoders_[r](tape, with_position(x, r)));
    skip.push_back(x);
  }

  FeaturePyramid pyramid;
  pyramid.layout = layout;
  pyramid.features.resize(config_.depth);
  pyramid.features[config_.depth - 1] = skip.back();
  for (int r = config_.depth - 2; r >= 0; --r) {
    const ad::Var up = ad::gather_rows(pyramid.features[r + 1], layout.levels[r].parent);
    const ad::Var parts[] = {up, skip[r]};
    pyramid.features[r] =
        ad::relu(decoders_[r](tape, with_position(ad::concat_cols(parts), r)));
  }
  return pyramid;
}

}  // namespace p4d
