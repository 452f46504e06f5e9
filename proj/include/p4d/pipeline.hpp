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

// End-to-end runs: train from a config, evaluate over sequences, and the
// box-loss x DBSCAN ablation grid.

#pragma once

#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "p4d/config.hpp"
#include "p4d/metrics.hpp"

namespace p4d {

LabelSequence ground_truth(const ScanSequence& seq);

// Sequences seeded first_seed, first_seed + 1, ... from `base`.
std::vector<ScanSequence> make_sequences(const SceneSpec& base, std::uint64_t first_seed,
                                         int count);

struct TrainedModel {
  std::unique_ptr<Model> model;
  std::vector<StepRecord> trace;
};

TrainedModel train_model(const RunConfig& config, std::span<const ScanSequence> data,
                         const StepCallback& on_step = {});

// Mean of the per-sequence reports.
MetricReport evaluate_sequences(const WindowPredictor& predictor,
                                std::span<const ScanSequence> sequences,
                                const SequenceOptions& options, const ClassTable& classes);

struct AblationRow {
  bool box_loss = false;
  bool dbscan = false;
  MetricReport report;
};

// Rows in order (-box, -dbscan), (-box, +dbscan), (+box, -dbscan),
// (+box, +dbscan). Training data and held-out sequences use same-class
// objects; held-out seeds start after the training seeds.
std::vector<AblationRow> run_ablation(const RunConfig& config,
                                      const StepCallback& on_step = {});

std::string format_ablation_table(std::span<const AblationRow> rows);
void write_ablation_csv(std::ostream& os, std::span<const AblationRow> rows);

}  // namespace p4d
