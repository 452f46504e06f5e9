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

// The full network: backbone, query decoder and mask module over one
// superimposed window of scans.

#pragma once

#include <cstdint>
#include <memory>
#include <span>

#include "p4d/backbone.hpp"
#include "p4d/decoder.hpp"
#include "p4d/heads.hpp"

namespace p4d {

struct ModelConfig {
  double voxel_size = 0.05;
  int num_queries = 100;
  int num_classes = 4;
  std::uint64_t init_seed = 0;
  std::uint64_t query_seed = 0;
  BackboneConfig backbone;
  DecoderConfig decoder;

  void validate() const;
};

// Everything about a window that does not depend on weights.
struct WindowInput {
  SuperimposedCloud cloud;
  VoxelGrid grid;
  PyramidLayout layout;
  WindowFrame frame;
  Eigen::MatrixXd seed;  // K0 x kSeedFeatureDim
};

WindowInput prepare_window(std::span<const LidarScan> scans,
                           std::span<const Posed> poses, double voxel_size,
                           int depth);
// Re-voxelizes an already superimposed cloud (used after augmentation).
WindowInput prepare_window(SuperimposedCloud cloud, double voxel_size, int depth);

struct ForwardResult {
  QuerySet queries;
  FeaturePyramid pyramid;
  ad::Var mask_features;
  RefineResult refined;

  const MaskModuleOutput& final_output() const { return refined.outputs.back(); }
};

class Model {
 public:
  explicit Model(const ModelConfig& config);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  // Uses min(num_queries, K0) queries.
  ForwardResult forward(ad::Tape& tape, const WindowInput& input) const;
  ForwardResult forward(ad::Tape& tape, const WindowInput& input, int rounds) const;

  const ModelConfig& config() const { return config_; }
  ad::ParameterStore& parameters() { return store_; }
  MaskModule& mask_module() { return *mask_; }
  const Backbone& backbone() const { return *backbone_; }
  const Decoder& decoder() const { return *decoder_; }

 private:
  ModelConfig config_;
  ad::ParameterStore store_;
  std::unique_ptr<Backbone> backbone_;
  std::unique_ptr<Decoder> decoder_;
  std::unique_ptr<MaskModule> mask_;
};

}  // namespace p4d
