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

#include "p4d/train.hpp"

#include <glog/logging.h>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

#include "p4d/inference.hpp"
#include "p4d/io.hpp"

namespace p4d {

void TrainConfig::validate() const {
  if (steps < 1) throw ParameterError("train: steps must be >= 1");
  if (!(max_lr >= 0.0)) throw ParameterError("train: max_lr must be >= 0");
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) {
    throw ParameterError("train: warmup_fraction must be in [0, 1)");
  }
  weights.validate();
}

ad::LrSchedule TrainConfig::schedule() const {
  ad::LrSchedule s;
  s.max_lr = max_lr;
  s.total_steps = steps;
  s.warmup_fraction = warmup_fraction;
  return s;
}

std::vector<TrainingWindow> make_training_windows(std::span<const ScanSequence> dataset,
                                                  int window, int stride) {
  std::vector<TrainingWindow> out;
  for (const ScanSequence& seq : dataset) {
    for (const LidarScan& scan : seq.scans) {
      if (!scan.labels) throw ParameterError("training scans must carry labels");
    }
    const int n = seq.num_frames();
    const int t = std::min(window, n);
    for (int start : window_starts(n, window, stride)) {
      TrainingWindow w;
      w.scans.assign(seq.scans.begin() + start, seq.scans.begin() + start + t);
      w.poses.assign(seq.poses.begin() + start, seq.poses.begin() + start + t);
      out.push_back(std::move(w));
    }
  }
  if (out.empty()) throw ParameterError("train: empty dataset");
  return out;
}

PreparedWindow prepare_training_window(const TrainingWindow& window,
                                       const ModelConfig& model, const ClassTable& classes,
                                       const AugmentConfig& augment, Rng* rng) {
  SuperimposedCloud cloud = superimpose(window.scans, window.poses);
  if (rng != nullptr && (augment.rotation || augment.translation || augment.scaling)) {
    const double angle =
        augment.rotation ? rng->uniform(-augment.max_rotation, augment.max_rotation) : 0.0;
    const double tx = augment.translation
                          ? rng->uniform(-augment.max_translation, augment.max_translation)
                          : 0.0;
    const double ty = augment.translation
                          ? rng->uniform(-augment.max_translation, augment.max_translation)
                          : 0.0;
    const double scale =
        augment.scaling
            ? rng->uniform(1.0 - augment.max_scale_delta, 1.0 + augment.max_scale_delta)
            : 1.0;
    const Eigen::Matrix3d r = rotation_z(angle) * scale;
    const Eigen::RowVector3d t(tx, ty, 0.0);
    cloud.points = (cloud.points * r.transpose()).rowwise() + t;
  }
  std::vector<PointLabel> labels;
  labels.reserve(cloud.size());
  for (const SourcePoint& sp : cloud.source_point) {
    labels.push_back((*window.scans[sp.scan].labels)[sp.point]);
  }
  PreparedWindow out;
  const Points points = cloud.points;
  out.input = prepare_window(std::move(cloud), model.voxel_size, model.backbone.depth);
  out.targets = build_targets(out.input.grid, points, labels, classes, out.input.frame.extent);
  return out;
}

LossResult evaluate_loss(const Model& model, ad::Tape& tape, const WindowInput& input,
                         const Targets& targets, const LossWeights& weights) {
  const ForwardResult r = model.forward(tape, input);
  return total_loss(r.refined.outputs, targets, weights);
}

namespace {

std::string describe(const LossBreakdown& b) {
  std::ostringstream os;
  os << "total=" << b.total << " dice=" << b.dice << " bce=" << b.bce << " ce=" << b.ce
     << " box=" << b.box;
  return os.str();
}

void dump_window(const std::filesystem::path& dir, long long step,
                 const TrainingWindow& window) {
  ScanSequence seq;
  seq.scans = window.scans;
  seq.poses = window.poses;
  const std::filesystem::path out = dir / ("step_" + std::to_string(step));
  write_sequence(out, seq);
  LOG(ERROR) << "non-finite loss; offending window written to " << out;
}

}  // namespace

std::vector<StepRecord> train(Model& model, std::span<const TrainingWindow> windows,
                              const ClassTable& classes, const TrainConfig& config,
                              const StepCallback& on_step) {
  config.validate();
  if (windows.empty()) throw ParameterError("train: no training windows");
  if (classes.size() != model.config().num_classes) {
    throw ParameterError("train: class table has " + std::to_string(classes.size()) +
                         " classes, model has " +
                         std::to_string(model.config().num_classes));
  }
  const bool augmenting =
      config.augment.rotation || config.augment.translation || config.augment.scaling;
  std::vector<PreparedWindow> cache;
  if (!augmenting) {
    for (const TrainingWindow& w : windows) {
      cache.push_back(prepare_training_window(w, model.config(), classes, config.augment, nullptr));
    }
  }

  std::vector<ad::Parameter*> params = model.parameters().all();
  ad::OptimizerState opt = ad::make_optimizer_state(params, config.adamw);
  const ad::LrSchedule schedule = config.schedule();
  Rng rng(config.seed);
  std::vector<int> order(windows.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<StepRecord> trace;
  trace.reserve(config.steps);

  for (long long step = 0; step < config.steps; ++step) {
    const std::size_t slot = static_cast<std::size_t>(step) % order.size();
    if (slot == 0 && order.size() > 1) {
      for (std::size_t i = order.size() - 1; i > 0; --i) {
        std::swap(order[i], order[rng.index(i + 1)]);
      }
    }
    const int w = order[slot];
    PreparedWindow fresh;
    if (augmenting) {
      fresh = prepare_training_window(windows[w], model.config(), classes, config.augment, &rng);
    }
    const PreparedWindow& pw = augmenting ? fresh : cache[w];

    model.parameters().zero_grad();
    ad::Tape tape;
    LossResult loss;
    try {
      loss = evaluate_loss(model, tape, pw.input, pw.targets, config.weights);
    } catch (const NonFiniteLossError& e) {
      if (!config.dump_dir.empty()) dump_window(config.dump_dir, step, windows[w]);
      throw NonFiniteLossError("train: step " + std::to_string(step) + " on window " +
                               std::to_string(w) + ": " + e.what());
    }
    if (!std::isfinite(loss.breakdown.total)) {
      if (!config.dump_dir.empty()) dump_window(config.dump_dir, step, windows[w]);
      throw NonFiniteLossError("train: non-finite loss at step " + std::to_string(step) +
                               " on window " + std::to_string(w) + " (" +
                               describe(loss.breakdown) + ")");
    }
    tape.backward(loss.loss);
    const double lr = ad::one_cycle_lr(schedule, step);
    ad::adamw_step(opt, params, lr);

    StepRecord rec{step, lr, loss.breakdown};
    trace.push_back(rec);
    if (on_step) on_step(rec);
  }
  return trace;
}

void write_trace_csv(std::ostream& os, std::span<const StepRecord> trace) {
  os << "step,lr,total,dice,bce,ce,box\n" << std::setprecision(17);
  for (const StepRecord& r : trace) {
    os << r.step << ',' << r.lr << ',' << r.loss.total << ',' << r.loss.dice << ','
       << r.loss.bce << ',' << r.loss.ce << ',' << r.loss.box << '\n';
  }
}

}  // namespace p4d
