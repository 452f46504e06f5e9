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

// Multi-scale voxel feature pyramid.
//
// The encoder pools each level into parents at 2x coarser integer coordinates
// (segment mean) and applies a per-level MLP; the decoder broadcasts coarse
// features back to children, concatenates the encoder skip and applies another
// MLP. Every MLP also sees a fixed Fourier encoding of the voxel position and
// time, which stands in for the wide receptive field of a sparse conv U-Net.

#pragma once

#include <vector>

#include "p4d/autodiff.hpp"
#include "p4d/encoding.hpp"
#include "p4d/geometry.hpp"
#include "p4d/nn.hpp"

namespace p4d {

struct BackboneConfig {
  int depth = 4;
  std::vector<int> widths = {32, 64, 96, 128};
  bool positional_input = true;
  FourierConfig fourier;

  void validate() const;
};

// Non-learned structure of one pyramid level.
struct PyramidLevel {
  VoxelCoords coords;          // K_r x 3
  std::vector<int> parent;     // K_r -> index in level r+1; empty on the top level
  Points positions;            // K_r x 3, meters
  Eigen::VectorXd frame;       // K_r, mean frame index

  Eigen::Index size() const { return coords.rows(); }
};

struct PyramidLayout {
  std::vector<PyramidLevel> levels;  // level 0 is the finest
};

// Parent coordinates are floor(c / 2); parents are numbered by first
// occurrence among their children.
PyramidLayout build_layout(const VoxelGrid& grid, int depth);

struct FeaturePyramid {
  PyramidLayout layout;
  std::vector<ad::Var> features;  // K_r x D_r per level

  int depth() const { return static_cast<int>(features.size()); }
};

inline constexpr int kSeedFeatureDim = 5;

// Per voxel: (centroid - voxel corner) / voxel_size, normalized mean frame,
// log(member count).
Eigen::MatrixXd seed_features(const VoxelGrid& grid, const WindowFrame& window);

class Backbone {
 public:
  Backbone(ad::ParameterStore& store, const BackboneConfig& config, Rng& rng);

  FeaturePyramid extract(ad::Tape& tape, const PyramidLayout& layout,
                         const WindowFrame& window, ad::Var seed) const;

  const BackboneConfig& config() const { return config_; }
  int width(int level) const { return config_.widths[level]; }

  // Mean of child rows into their parents (level -> level + 1).
  static ad::Var pool_to_parent(const PyramidLayout& layout, int level,
                                ad::Var child_features);

 private:
  Eigen::MatrixXd positional(const PyramidLevel& level,
                             const WindowFrame& window) const;

  BackboneConfig config_;
  FourierBank bank_;
  std::vector<nn::Mlp> encoders_;
  std::vector<nn::Mlp> decoders_;  // decoders_[r] refines level r, r < depth-1
};

}  // namespace p4d
