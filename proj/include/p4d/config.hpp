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

// Run configuration as plain "key = value" text.
//
//   # comment
//   voxel_size = 0.05
//   model.widths = 32,64,96,128
//
// Every key is optional; unknown or repeated keys are errors. serialize()
// writes every key, so load(serialize(c)) == c.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "p4d/inference.hpp"
#include "p4d/model.hpp"
#include "p4d/synth.hpp"
#include "p4d/train.hpp"

namespace p4d {

struct RunConfig {
  std::uint64_t seed = 0;
  SceneSpec scene;
  ModelConfig model;
  TrainConfig train;
  SequenceOptions inference;   // voxel_size and depth mirror `model`
  int ablation_sequences = 20;       // held-out sequences for `ablate`
  int ablation_train_sequences = 4;  // training sequences for `ablate`

  // Copies seed, voxel size and depth into the nested structs.
  void sync();
  void validate() const;
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
std::string serialize_config(const RunConfig& config);

bool operator==(const RunConfig& a, const RunConfig& b);

// Every recognized key, in serialization order.
std::vector<std::string> config_keys();

}  // namespace p4d
