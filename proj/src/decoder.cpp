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

#include "p4d/decoder.hpp"

#include <cmath>
#include <string>

namespace p4d {

void DecoderConfig::validate() const {
  if (dim < 1 || num_heads < 1 || dim % num_heads != 0) {
    throw ParameterError("decoder: dim must be a positive multiple of num_heads");
  }
  if (ffn_dim < 1 || num_rounds < 0) {
    throw ParameterError("decoder: invalid ffn_dim or num_rounds");
  }
  if (!(mask_threshold > 0.0 && mask_threshold < 1.0)) {
    throw ParameterError("decoder: mask_threshold must be in (0, 1)");
  }
}

PositionalEncoder::PositionalEncoder(ad::ParameterStore& store,
                                     const FourierConfig& config, int dim, Rng& rng)
    : bank_(config) {
  spatial_proj_ = nn::make_linear(store, "pos.spatial", bank_.spatial_dim(), dim, rng);
  temporal_proj_ = nn::make_linear(store, "pos.temporal", bank_.temporal_dim(), dim,
                                   rng, /*with_bias=*/false);
}

ad::Var PositionalEncoder::spatial(ad::Tape& tape,
                                   const Points& normalized_positions) const {
  return spatial_proj_(tape, tape.constant(bank_.spatial(normalized_positions)));
}

ad::Var PositionalEncoder::temporal(ad::Tape& tape,
                                    const Eigen::VectorXd& normalized_frames) const {
  return temporal_proj_(tape, tape.constant(bank_.temporal(normalized_frames)));
}

ad::Var PositionalEncoder::operator()(ad::Tape& tape,
                                      const Points& normalized_positions,
                                      const Eigen::VectorXd& normalized_frames) const {
  return ad::add(spatial(tape, normalized_positions),
                 temporal(tape, normalized_frames));
}

ad::Var fourier_encode(ad::Tape& tape, const PositionalEncoder& encoder,
                       const WindowFrame& window, const Eigen::Vector3d& position,
                       double frame) {
  Points p(1, 3);
  p.row(0) = position.transpose();
  Eigen::VectorXd f(1);
  f(0) = frame;
  return encoder(tape, window.normalize_positions(p), window.normalize_frames(f));
}

AttentionBlock make_attention_block(ad::ParameterStore& store,
                                    const std::string& name, int dim,
                                    int num_heads, Rng& rng) {
  AttentionBlock b;
  b.norm = nn::make_layer_norm(store, name + ".norm", dim);
  b.q = nn::make_linear(store, name + ".q", dim, dim, rng);
  b.k = nn::make_linear(store, name + ".k", dim, dim, rng);
  b.v = nn::make_linear(store, name + ".v", dim, dim, rng);
  b.o = nn::make_linear(store, name + ".o", dim, dim, rng);
  b.num_heads = num_heads;
  return b;
}

FeedForwardBlock make_ffn_block(ad::ParameterStore& store, const std::string& name,
                                int dim, int hidden, Rng& rng) {
  FeedForwardBlock b;
  b.norm = nn::make_layer_norm(store, name + ".norm", dim);
  b.in = nn::make_linear(store, name + ".in", dim, hidden, rng);
  b.out = nn::make_linear(store, name + ".out", hidden, dim, rng);
  return b;
}

ad::Var multi_head_attention(ad::Tape& tape, const AttentionBlock& block,
                             ad::Var query_in, ad::Var key_in, ad::Var value_in,
                             const ad::Mask* mask) {
  if (key_in.rows() != value_in.rows()) {
    throw ShapeError("attention: " + std::to_string(key_in.rows()) + " keys but " +
                     std::to_string(value_in.rows()) + " values");
  }
  const ad::Var q = block.q(tape, query_in);
  const ad::Var k = block.k(tape, key_in);
  const ad::Var v = block.v(tape, value_in);
  const auto dim = q.cols();
  const auto head_dim = dim / block.num_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  std::vector<ad::Var> heads;
  for (int h = 0; h < block.num_heads; ++h) {
    const ad::Var qh = ad::slice_cols(q, h * head_dim, head_dim);
    const ad::Var kh = ad::slice_cols(k, h * head_dim, head_dim);
    const ad::Var vh = ad::slice_cols(v, h * head_dim, head_dim);
    const ad::Var scores = ad::scale(ad::matmul(qh, ad::transpose(kh)), scale);
    heads.push_back(ad::matmul(ad::softmax_rows(scores, mask), vh));
  }
  const ad::Var merged = heads.size() == 1 ? heads[0] : ad::concat_cols(heads);
  return block.o(tape, merged);
}

ad::Var masked_cross_attention(ad::Tape& tape, const AttentionBlock& block,
                               ad::Var queries, ad::Var query_pos, ad::Var kv,
                               ad::Mask mask) {
  if (mask.rows() != queries.rows() || mask.cols() != kv.rows()) {
    throw ShapeError("cross attention: mask is " + std::to_string(mask.rows()) +
                     "x" + std::to_string(mask.cols()) + " for " +
                     std::to_string(queries.rows()) + " queries and " +
                     std::to_string(kv.rows()) + " keys");
  }
  for (Eigen::Index r = 0; r < mask.rows(); ++r) {
    if (!mask.row(r).any()) mask.row(r).setConstant(true);
  }
  const ad::Var q_in = ad::add(block.norm(tape, queries), query_pos);
  return ad::add(queries, multi_head_attention(tape, block, q_in, kv, kv, &mask));
}

ad::Var self_attention(ad::Tape& tape, const AttentionBlock& block,
                       ad::Var queries, ad::Var query_pos) {
  const ad::Var normed = block.norm(tape, queries);
  const ad::Var qk = ad::add(normed, query_pos);
  return ad::add(queries, multi_head_attention(tape, block, qk, qk, normed, nullptr));
}

ad::Var feed_forward(ad::Tape& tape, const FeedForwardBlock& block, ad::Var queries) {
  const ad::Var h = ad::relu(block.in(tape, block.norm(tape, queries)));
  return ad::add(queries, block.out(tape, h));
}

ad::Mask attention_mask_for_level(const Eigen::MatrixXd& heatmap_logits,
                                  const PyramidLayout& layout, int level,
                                  double threshold) {
  if (heatmap_logits.cols() != layout.levels.at(0).size()) {
    throw ShapeError("attention mask: heatmap has " +
                     std::to_string(heatmap_logits.cols()) + " voxels, level 0 has " +
                     std::to_string(layout.levels[0].size()));
  }
  const double logit = std::log(threshold / (1.0 - threshold));
  ad::Mask mask = heatmap_logits.array() > logit;
  for (int r = 0; r < level; ++r) {
    const auto& child = layout.levels[r];
    ad::Mask up = ad::Mask::Constant(mask.rows(), layout.levels[r + 1].size(), false);
    for (Eigen::Index i = 0; i < child.size(); ++i) {
      up.col(child.parent[i]) = up.col(child.parent[i]) || mask.col(i);
    }
    mask = std::move(up);
  }
  for (Eigen::Index q = 0; q < mask.rows(); ++q) {
    if (!mask.row(q).any()) mask.row(q).setConstant(true);
  }
  return mask;
}

int anchor_seed_index(std::uint64_t seed, int num_voxels) {
  Rng rng(seed);
  return static_cast<int>(rng.index(num_voxels));
}

Decoder::Decoder(ad::ParameterStore& store, const DecoderConfig& config,
                 const std::vector<int>& level_widths, Rng& rng)
    : config_(config), pos_(store, config.fourier, config.dim, rng) {
  config_.validate();
  if (level_widths.empty()) throw ParameterError("decoder: no pyramid levels");
  query_bias_ = &store.add("decoder.query_bias", ad::Matrix::Zero(1, config_.dim));
  for (std::size_t r = 0; r < level_widths.size(); ++r) {
    level_proj_.push_back(nn::make_linear(store, "decoder.level" + std::to_string(r),
                                          level_widths[r], config_.dim, rng));
  }
  const int levels = static_cast<int>(level_widths.size());
  for (int i = 0; i < config_.num_rounds * levels; ++i) {
    const std::string name = "decoder.layer" + std::to_string(i);
    Layer layer;
    layer.cross = make_attention_block(store, name + ".cross", config_.dim,
                                       config_.num_heads, rng);
    layer.self = make_attention_block(store, name + ".self", config_.dim,
                                      config_.num_heads, rng);
    layer.ffn = make_ffn_block(store, name + ".ffn", config_.dim, config_.ffn_dim, rng);
    layers_.push_back(std::move(layer));
  }
}

QuerySet Decoder::init_queries(ad::Tape& tape, const PyramidLayout& layout,
                               const WindowFrame& window, int num_queries,
                               std::uint64_t seed) const {
  const auto& finest = layout.levels.at(0);
  const int k0 = static_cast<int>(finest.size());
  if (num_queries < 1 || num_queries > k0) {
    throw ParameterError("init_queries: N_q=" + std::to_string(num_queries) +
                         " must be in [1, K0=" + std::to_string(k0) + "]");
  }
  QuerySet qs;
  qs.anchor_voxels = farthest_point_sampling(finest.positions, num_queries,
                                             anchor_seed_index(seed, k0));
  qs.anchor_positions.resize(num_queries, 3);
  qs.anchor_frames.resize(num_queries);
  for (int i = 0; i < num_queries; ++i) {
    qs.anchor_positions.row(i) = finest.positions.row(qs.anchor_voxels[i]);
    qs.anchor_frames(i) = finest.frame(qs.anchor_voxels[i]);
  }
  qs.positional = pos_(tape, window.normalize_positions(qs.anchor_positions),
                       window.normalize_frames(qs.anchor_frames));
  qs.features = ad::add(qs.positional, tape.parameter(*query_bias_));
  return qs;
}

RefineResult Decoder::refine(ad::Tape& tape, const QuerySet& queries,
                             const FeaturePyramid& pyramid, const WindowFrame& window,
                             const MaskModule& mask_module, ad::Var mask_features,
                             int rounds) const {
  const int levels = num_levels();
  if (pyramid.depth() != levels) {
    throw ShapeError("refine: pyramid has " + std::to_string(pyramid.depth()) +
                     " levels, decoder expects " + std::to_string(levels));
  }
  if (rounds < 0 || rounds > config_.num_rounds) {
    throw ParameterError("refine: rounds must be in [0, " +
                         std::to_string(config_.num_rounds) + "]");
  }
  RefineResult result;
  result.queries = queries.features;
  result.outputs.push_back(mask_module(tape, result.queries, mask_features));
  if (rounds == 0) return result;

  std::vector<ad::Var> kv(levels);
  for (int r = 0; r < levels; ++r) {
    const auto& level = pyramid.layout.levels[r];
    kv[r] = ad::add(level_proj_[r](tape, pyramid.features[r]),
                    pos_(tape, window.normalize_positions(level.positions),
                         window.normalize_frames(level.frame)));
  }
  int layer_index = 0;
  for (int round = 0; round < rounds; ++round) {
    for (int r = levels - 1; r >= 0; --r, ++layer_index) {
      const Layer& layer = layers_[layer_index];
      ad::Mask mask = attention_mask_for_level(
          result.outputs.back().heatmap_logits.value(), pyramid.layout, r,
          config_.mask_threshold);
      ad::Var x = masked_cross_attention(tape, layer.cross, result.queries,
                                         queries.positional, kv[r], std::move(mask));
      x = self_attention(tape, layer.self, x, queries.positional);
      x = feed_forward(tape, layer.ffn, x);
      result.queries = x;
      result.outputs.push_back(mask_module(tape, x, mask_features));
    }
  }
  return result;
}

}  // namespace p4d
