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

// Spatio-temporal query refinement.
//
// Queries are anchored at farthest-point-sampled voxels. Each refinement step
// visits one pyramid level: masked cross-attention onto that level (queries
// only see voxels their previous heatmap marked foreground), self-attention
// among queries, then a feed-forward block. All three are pre-norm residual
// blocks. The mask module runs after every step and its outputs are kept for
// deep supervision.

#pragma once

#include <vector>

#include "p4d/backbone.hpp"
#include "p4d/encoding.hpp"
#include "p4d/heads.hpp"
#include "p4d/nn.hpp"

namespace p4d {

struct DecoderConfig {
  int dim = 64;
  int num_heads = 4;
  int ffn_dim = 128;
  int num_rounds = 3;
  double mask_threshold = 0.5;  // on sigmoid(heatmap)
  FourierConfig fourier;

  void validate() const;
};

struct QuerySet {
  ad::Var features;              // N_q x D
  ad::Var positional;            // N_q x D, encoding of the anchors
  std::vector<int> anchor_voxels;
  Points anchor_positions;       // N_q x 3
  Eigen::VectorXd anchor_frames; // N_q

  Eigen::Index size() const { return features.rows(); }
};

// Learned sum of a spatial and a temporal Fourier projection.
class PositionalEncoder {
 public:
  PositionalEncoder(ad::ParameterStore& store, const FourierConfig& config,
                    int dim, Rng& rng);

  // Inputs are already normalized (see WindowFrame).
  ad::Var operator()(ad::Tape& tape, const Points& normalized_positions,
                     const Eigen::VectorXd& normalized_frames) const;
  ad::Var spatial(ad::Tape& tape, const Points& normalized_positions) const;
  ad::Var temporal(ad::Tape& tape, const Eigen::VectorXd& normalized_frames) const;

  const FourierBank& bank() const { return bank_; }

 private:
  FourierBank bank_;
  nn::Linear spatial_proj_;
  nn::Linear temporal_proj_;
};

// One position (meters) and frame -> 1 x D encoding for the given window.
ad::Var fourier_encode(ad::Tape& tape, const PositionalEncoder& encoder,
                       const WindowFrame& window, const Eigen::Vector3d& position,
                       double frame);

struct AttentionBlock {
  nn::LayerNorm norm;
  nn::Linear q, k, v, o;
  int num_heads = 1;
};

struct FeedForwardBlock {
  nn::LayerNorm norm;
  nn::Linear in, out;
};

AttentionBlock make_attention_block(ad::ParameterStore& store,
                                    const std::string& name, int dim,
                                    int num_heads, Rng& rng);
FeedForwardBlock make_ffn_block(ad::ParameterStore& store, const std::string& name,
                                int dim, int hidden, Rng& rng);

// Multi-head scaled dot-product attention: softmax(Q K^T / sqrt(d_h)) V per
// head, heads concatenated, then the output projection. The mask (N_q x K) must
// already have no empty rows if every query should receive input.
ad::Var multi_head_attention(ad::Tape& tape, const AttentionBlock& block,
                             ad::Var query_in, ad::Var key_in, ad::Var value_in,
                             const ad::Mask* mask);

// x + MHA(LN(x) + pos, kv, kv) restricted by `mask`. Rows of `mask` with no
// allowed key are replaced by all-true rows.
ad::Var masked_cross_attention(ad::Tape& tape, const AttentionBlock& block,
                               ad::Var queries, ad::Var query_pos, ad::Var kv,
                               ad::Mask mask);
// x + MHA(LN(x) + pos, LN(x) + pos, LN(x))
ad::Var self_attention(ad::Tape& tape, const AttentionBlock& block,
                       ad::Var queries, ad::Var query_pos);
// x + W2 relu(W1 LN(x))
ad::Var feed_forward(ad::Tape& tape, const FeedForwardBlock& block, ad::Var queries);

// Foreground mask at `level` from finest-level heatmap logits: threshold, then
// max-pool children into parents level by level. Empty rows become all-true.
ad::Mask attention_mask_for_level(const Eigen::MatrixXd& heatmap_logits,
                                  const PyramidLayout& layout, int level,
                                  double threshold);

struct RefineResult {
  ad::Var queries;
  std::vector<MaskModuleOutput> outputs;  // initial output first
};

class Decoder {
 public:
  Decoder(ad::ParameterStore& store, const DecoderConfig& config,
          const std::vector<int>& level_widths, Rng& rng);

  // Anchors are FPS over the finest voxel centroids starting from a voxel
  // drawn with `seed`.
  QuerySet init_queries(ad::Tape& tape, const PyramidLayout& layout,
                        const WindowFrame& window, int num_queries,
                        std::uint64_t seed) const;

  RefineResult refine(ad::Tape& tape, const QuerySet& queries,
                      const FeaturePyramid& pyramid, const WindowFrame& window,
                      const MaskModule& mask_module, ad::Var mask_features,
                      int rounds) const;

  const DecoderConfig& config() const { return config_; }
  const PositionalEncoder& positional() const { return pos_; }
  int num_levels() const { return static_cast<int>(level_proj_.size()); }

 private:
  struct Layer {
    AttentionBlock cross;
    AttentionBlock self;
    FeedForwardBlock ffn;
  };

  DecoderConfig config_;
  PositionalEncoder pos_;
  ad::Parameter* query_bias_ = nullptr;
  std::vector<nn::Linear> level_proj_;
  std::vector<Layer> layers_;  // num_rounds x levels, coarse level first
};

// First-voxel choice used by init_queries.
int anchor_seed_index(std::uint64_t seed, int num_voxels);

}  // namespace p4d
