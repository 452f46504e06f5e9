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

// AdamW, the one-cycle learning-rate schedule, and parameter checkpoints.

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "p4d/autodiff.hpp"

namespace p4d::ad {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct OptimizerState {
  AdamWConfig config;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  long long step = 0;
};

OptimizerState make_optimizer_state(std::span<Parameter* const> params,
                                    const AdamWConfig& config = {});

// One decoupled-weight-decay Adam update using each parameter's grad:
//   theta <- theta - lr * wd * theta
//   theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)
void adamw_step(OptimizerState& state, std::span<Parameter* const> params,
                double lr);

struct LrSchedule {
  double max_lr = 2e-4;
  long long total_steps = 1000;
  double warmup_fraction = 0.3;
  double div_start = 25.0;
  double div_end = 1e4;

  long long peak_step() const;
};

// Cosine ramp from max_lr / div_start to max_lr at peak_step(), then cosine
// anneal to max_lr / div_end at the final step.
double one_cycle_lr(const LrSchedule& schedule, long long step);

// Little-endian checkpoint:
//   char[8]  "P4DCKPT\0"
//   u32      version (1)
//   u32      metadata byte length, then metadata bytes (free text)
//   u32      parameter count
//   per parameter: u32 name length, name bytes, u32 rows, u32 cols,
//                  rows*cols float64 values in row-major order
void save_checkpoint(const std::filesystem::path& path, ParameterStore& params,
                     const std::string& metadata);

struct Checkpoint {
  std::string metadata;
  std::vector<std::pair<std::string, Matrix>> tensors;
};

Checkpoint read_checkpoint(const std::filesystem::path& path);

// Copies checkpoint values into same-named parameters. Missing, extra or
// mis-shaped tensors are errors.
void load_parameters(const Checkpoint& ckpt, ParameterStore& params);

}  // namespace p4d::ad
