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

// Mask module: per-query instance heatmaps over the finest voxels, class
// logits over C real classes plus a trailing no-object class, and normalized
// trajectory boxes.

#pragma once

#include "p4d/autodiff.hpp"
#include "p4d/nn.hpp"

namespace p4d {

struct MaskModuleOutput {
  ad::Var heatmap_logits;  // N_q x K0
  ad::Var class_logits;    // N_q x (C + 1), column C is no-object
  ad::Var boxes;           // N_q x 6 in [0, 1]: center xyz, dims whd

  Eigen::Index num_queries() const { return class_logits.rows(); }
  int num_classes() const { return static_cast<int>(class_logits.cols()) - 1; }
};

class MaskModule {
 public:
  MaskModule(ad::ParameterStore& store, int query_dim, int finest_width,
             int num_classes, Rng& rng);

  // Projects the finest backbone features F_0 (K0 x D_0) to K0 x query_dim.
  ad::Var mask_features(ad::Tape& tape, ad::Var finest) const;

  MaskModuleOutput operator()(ad::Tape& tape, ad::Var queries,
                              ad::Var mask_features) const;

  int num_classes() const { return num_classes_; }

  // Zeroes every layer; used to check the degenerate network.
  void set_zero();

 private:
  int num_classes_;
  nn::LayerNorm norm_;
  nn::Mlp mask_embed_;
  nn::Linear class_head_;
  nn::Mlp box_head_;
  nn::Linear feature_proj_;
};

}  // namespace p4d
