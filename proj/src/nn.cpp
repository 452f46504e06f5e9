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

#include "p4d/nn.hpp"

#include <cmath>

namespace p4d::nn {

ad::Var Linear::operator()(ad::Tape& tape, ad::Var x) const {
  ad::Var y = ad::matmul(x, tape.parameter(*weight));
  if (bias != nullptr) y = ad::add(y, tape.parameter(*bias));
  return y;
}

void Linear::set_zero() {
  weight->value.setZero();
  if (bias != nullptr) bias->value.setZero();
}

Linear make_linear(ad::ParameterStore& store, const std::string& name, int in,
                   int out, Rng& rng, bool with_bias) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  ad::Matrix w(in, out);
  for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = rng.uniform(-limit, limit);
  Linear lin;
  lin.weight = &store.add(name + ".weight", std::move(w));
  if (with_bias) lin.bias = &store.add(name + ".bias", ad::Matrix::Zero(1, out));
  return lin;
}

ad::Var LayerNorm::operator()(ad::Tape& tape, ad::Var x) const {
  return ad::layer_norm_rows(x, tape.parameter(*gamma), tape.parameter(*beta));
}

LayerNorm make_layer_norm(ad::ParameterStore& store, const std::string& name,
                          int dim) {
  LayerNorm ln;
  ln.gamma = &store.add(name + ".gamma", ad::Matrix::Ones(1, dim));
  ln.beta = &store.add(name + ".beta", ad::Matrix::Zero(1, dim));
  return ln;
}

ad::Var Mlp::operator()(ad::Tape& tape, ad::Var x) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    x = layers[i](tape, x);
    if (i + 1 < layers.size()) x = ad::relu(x);
  }
  return x;
}

void Mlp::set_zero() {
  for (auto& l : layers) l.set_zero();
}

Mlp make_mlp(ad::ParameterStore& store, const std::string& name,
             const std::vector<int>& dims, Rng& rng) {
  Mlp mlp;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    mlp.layers.push_back(make_linear(store, name + "." + std::to_string(i),
                                     dims[i], dims[i + 1], rng));
  }
  return mlp;
}

}  // namespace p4d::nn
