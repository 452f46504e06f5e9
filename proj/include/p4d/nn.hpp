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

// Small layer building blocks over the autodiff tape.

#pragma once

#include <string>
#include <vector>

#include "p4d/autodiff.hpp"
#include "p4d/rng.hpp"

namespace p4d::nn {

// y = x W + b, W is in x out.
struct Linear {
  ad::Parameter* weight = nullptr;
  ad::Parameter* bias = nullptr;  // may be null

  ad::Var operator()(ad::Tape& tape, ad::Var x) const;
  int in_features() const { return static_cast<int>(weight->value.rows()); }
  int out_features() const { return static_cast<int>(weight->value.cols()); }
  void set_zero();
};

// Xavier-uniform weights, zero bias.
Linear make_linear(ad::ParameterStore& store, const std::string& name, int in,
                   int out, Rng& rng, bool with_bias = true);

struct LayerNorm {
  ad::Parameter* gamma = nullptr;
  ad::Parameter* beta = nullptr;

  ad::Var operator()(ad::Tape& tape, ad::Var x) const;
};

LayerNorm make_layer_norm(ad::ParameterStore& store, const std::string& name,
                          int dim);

// Linear layers with ReLU between them (none after the last).
struct Mlp {
  std::vector<Linear> layers;

  ad::Var operator()(ad::Tape& tape, ad::Var x) const;
  void set_zero();
};

// dims = {in, hidden..., out}
Mlp make_mlp(ad::ParameterStore& store, const std::string& name,
             const std::vector<int>& dims, Rng& rng);

}  // namespace p4d::nn
