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

// Single-window training with AdamW and a one-cycle learning rate.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "p4d/loss.hpp"
#include "p4d/model.hpp"
#include "p4d/optim.hpp"
#include "p4d/synth.hpp"

namespace p4d {

// Random rigid-plus-scale perturbation of each training window.
struct AugmentConfig {
  bool rotation = false;      // about +z, uniform in [-max_rotation, max_rotation]
  bool translation = false;   // xy, uniform in [-max_translation, max_translation]
  bool scaling = false;       // uniform in [1 - max_scale_delta, 1 + max_scale_delta]
  double max_rotation = 3.141592653589793;
  double max_translation = 2.0;
  double max_scale_delta = 0.05;
};

struct TrainConfig {
  long long steps = 1000;
  double max_lr = 2e-4;
  double warmup_fraction = 0.3;
  ad::AdamWConfig adamw;
  LossWeights weights;
  std::uint64_t seed = 0;  // window order and augmentation
  int window = 2;
  int stride = 1;
  AugmentConfig augment;
  // Where a non-finite loss dumps its window; empty disables the dump.
  std::filesystem::path dump_dir;

  void validate() const;
  ad::LrSchedule schedule() const;
};

// One labeled training window.
struct TrainingWindow {
  std::vector<LidarScan> scans;
  std::vector<Posed> poses;
};

// Sliding windows over every sequence (see window_starts). Scans must carry
// labels.
std::vector<TrainingWindow> make_training_windows(std::span<const ScanSequence> dataset,
                                                  int window, int stride);

struct StepRecord {
  long long step = 0;
  double lr = 0.0;
  LossBreakdown loss;
};

using StepCallback = std::function<void(const StepRecord&)>;

// Runs config.steps optimizer steps, cycling through the windows in an order
// reshuffled every pass. Deterministic for a fixed model init and seed.
// Throws NonFiniteLossError on a NaN or infinite loss.
std::vector<StepRecord> train(Model& model, std::span<const TrainingWindow> windows,
                              const ClassTable& classes, const TrainConfig& config,
                              const StepCallback& on_step = {});

// Forward, match and loss on one prepared window; no parameter update.
LossResult evaluate_loss(const Model& model, ad::Tape& tape, const WindowInput& input,
                         const Targets& targets, const LossWeights& weights);

// Voxelized input and targets of one window, optionally augmented with `rng`.
struct PreparedWindow {
  WindowInput input;
  Targets targets;
};
PreparedWindow prepare_training_window(const TrainingWindow& window,
                                       const ModelConfig& model, const ClassTable& classes,
                                       const AugmentConfig& augment, Rng* rng);

// Header: step,lr,total,dice,bce,ce,box
void write_trace_csv(std::ostream& os, std::span<const StepRecord> trace);

}  // namespace p4d
