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

#include "p4d/model.hpp"

#include <algorithm>

namespace p4d {

void ModelConfig::validate() const {
  if (!(voxel_size > 0.0)) throw ParameterError("model: voxel_size must be > 0");
  if (num_queries < 1) throw ParameterError("model: num_queries must be >= 1");
  if (num_classes < 1) throw ParameterError("model: num_classes must be >= 1");
  backbone.validate();
  decoder.validate();
}

WindowInput prepare_window(SuperimposedCloud cloud, double voxel_size, int depth) {
  if (cloud.size() == 0) throw ParameterError("prepare_window: empty window");
  WindowInput in;
  in.cloud = std::move(cloud);
  in.grid = voxelize(in.cloud, voxel_size);
  in.layout = build_layout(in.grid, depth);
  in.frame = WindowFrame::of(in.cloud);
  in.seed = seed_features(in.grid, in.frame);
  return in;
}

WindowInput prepare_window(std::span<const LidarScan> scans,
                           std::span<const Posed> poses, double voxel_size,
                           int depth) {
  return prepare_window(superimpose(scans, poses), voxel_size, depth);
}

Model::Model(const ModelConfig& config) : config_(config) {
  config_.validate();
  Rng rng(config_.init_seed);
  backbone_ = std::make_unique<Backbone>(store_, config_.backbone, rng);
  decoder_ = std::make_unique<Decoder>(store_, config_.decoder,
                                       config_.backbone.widths, rng);
  mask_ = std::make_unique<MaskModule>(store_, config_.decoder.dim,
                                       config_.backbone.widths.front(),
                                       config_.num_classes, rng);
}

ForwardResult Model::forward(ad::Tape& tape, const WindowInput& input) const {
  return forward(tape, input, config_.decoder.num_rounds);
}

ForwardResult Model::forward(ad::Tape& tape, const WindowInput& input,
                             int rounds) const {
  ForwardResult r;
  r.pyramid = backbone_->extract(tape, input.layout, input.frame,
                                 tape.constant(input.seed));
  r.mask_features = mask_->mask_features(tape, r.pyramid.features[0]);
  const int k0 = static_cast<int>(input.grid.num_voxels());
  r.queries = decoder_->init_queries(tape, input.layout, input.frame,
                                     std::min(config_.num_queries, k0),
                                     config_.query_seed);
  r.refined = decoder_->refine(tape, r.queries, r.pyramid, input.frame, *mask_,
                               r.mask_features, rounds);
  return r;
}

}  // namespace p4d
