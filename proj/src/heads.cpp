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

#include "p4d/heads.hpp"

namespace p4d {

MaskModule::MaskModule(ad::ParameterStore& store, int query_dim,
                       int finest_width, int num_classes, Rng& rng)
    : num_classes_(num_classes) {
  if (num_classes < 1) throw ParameterError("mask module: need >= 1 class");
  norm_ = nn::make_layer_norm(store, "mask.norm", query_dim);
  mask_embed_ =
      nn::make_mlp(store, "mask.embed", {query_dim, query_dim, query_dim}, rng);
  class_head_ = nn::make_linear(store, "mask.class", query_dim, num_classes + 1, rng);
  box_head_ = nn::make_mlp(store, "mask.box", {query_dim, query_dim, 6}, rng);
  feature_proj_ = nn::make_linear(store, "mask.feature_proj", finest_width,
                                  query_dim, rng);
}

ad::Var MaskModule::mask_features(ad::Tape& tape, ad::Var finest) const {
  if (finest.cols() != feature_proj_.in_features()) {
    throw ShapeError("mask module: finest features have " +
                     std::to_string(finest.cols()) + " columns, expected " +
                     std::to_string(feature_proj_.in_features()));
  }
  return feature_proj_(tape, finest);
}

MaskModuleOutput MaskModule::operator()(ad::Tape& tape, ad::Var queries,
                                        ad::Var mask_features) const {
  if (queries.cols() != mask_features.cols()) {
    throw ShapeError("mask module: query dim " + std::to_string(queries.cols()) +
                     " differs from mask feature dim " +
                     std::to_string(mask_features.cols()));
  }
  const ad::Var x = norm_(tape, queries);
  MaskModuleOutput out;
  out.heatmap_logits =
      ad::matmul(mask_embed_(tape, x), ad::transpose(mask_features));
  out.class_logits = class_head_(tape, x);
  out.boxes = ad::sigmoid(box_head_(tape, x));
  return out;
}

void MaskModule::set_zero() {
  mask_embed_.set_zero();
  class_head_.set_zero();
  box_head_.set_zero();
  feature_proj_.set_zero();
}

}  // namespace p4d
