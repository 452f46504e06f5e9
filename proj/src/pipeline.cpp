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

#include "p4d/pipeline.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

namespace p4d {

LabelSequence ground_truth(const ScanSequence& seq) {
  LabelSequence out;
  for (const LidarScan& scan : seq.scans) {
    if (!scan.labels) throw ParameterError("ground_truth: scan without labels");
    out.push_back(*scan.labels);
  }
  return out;
}

std::vector<ScanSequence> make_sequences(const SceneSpec& base, std::uint64_t first_seed,
                                         int count) {
  std::vector<ScanSequence> out;
  for (int i = 0; i < count; ++i) {
    SceneSpec spec = base;
    spec.seed = first_seed + static_cast<std::uint64_t>(i);
    out.push_back(generate_sequence(spec));
  }
  return out;
}

TrainedModel train_model(const RunConfig& config, std::span<const ScanSequence> data,
                         const StepCallback& on_step) {
  TrainedModel out;
  out.model = std::make_unique<Model>(config.model);
  const std::vector<TrainingWindow> windows =
      make_training_windows(data, config.train.window, config.train.stride);
  out.trace = train(*out.model, windows, config.scene.classes, config.train, on_step);
  return out;
}

MetricReport evaluate_sequences(const WindowPredictor& predictor,
                                std::span<const ScanSequence> sequences,
                                const SequenceOptions& options, const ClassTable& classes) {
  if (sequences.empty()) throw ParameterError("evaluate_sequences: no sequences");
  MetricReport mean;
  mean.class_iou.assign(classes.size(), 0.0);
  std::vector<int> class_count(classes.size(), 0);
  for (const ScanSequence& seq : sequences) {
    const LabelSequence pred = run_sequence(predictor, seq.scans, seq.poses, options);
    const MetricReport r = evaluate(pred, ground_truth(seq), classes);
    mean.lstq += r.lstq;
    mean.s_assoc += r.s_assoc;
    mean.s_cls += r.s_cls;
    mean.iou_stuff += r.iou_stuff;
    mean.iou_things += r.iou_things;
    mean.pq += r.pq;
    mean.sq += r.sq;
    mean.rq += r.rq;
    for (int k = 0; k < classes.size(); ++k) {
      if (!std::isnan(r.class_iou[k])) {
        mean.class_iou[k] += r.class_iou[k];
        ++class_count[k];
      }
    }
  }
  const double n = static_cast<double>(sequences.size());
  mean.lstq /= n;
  mean.s_assoc /= n;
  mean.s_cls /= n;
  mean.iou_stuff /= n;
  mean.iou_things /= n;
  mean.pq /= n;
  mean.sq /= n;
  mean.rq /= n;
  for (int k = 0; k < classes.size(); ++k) {
    mean.class_iou[k] = class_count[k] > 0 ? mean.class_iou[k] / class_count[k]
                                           : std::numeric_limits<double>::quiet_NaN();
  }
  return mean;
}

std::vector<AblationRow> run_ablation(const RunConfig& config, const StepCallback& on_step) {
  SceneSpec scene = config.scene;
  scene.same_class_objects = true;
  scene.num_thing_objects = std::max(scene.num_thing_objects, 2);
  const std::uint64_t train_seed = config.seed;
  const std::uint64_t eval_seed = config.seed + config.ablation_train_sequences;
  const std::vector<ScanSequence> train_data =
      make_sequences(scene, train_seed, config.ablation_train_sequences);
  const std::vector<ScanSequence> eval_data =
      make_sequences(scene, eval_seed, config.ablation_sequences);

  std::vector<AblationRow> rows;
  for (const bool box : {false, true}) {
    RunConfig c = config;
    if (!box) c.train.weights.box = 0.0;
    const TrainedModel trained = train_model(c, train_data, on_step);
    const WindowPredictor predictor = model_predictor(*trained.model, c.scene.classes);
    for (const bool dbscan : {false, true}) {
      SequenceOptions options = c.inference;
      options.split = dbscan;
      AblationRow row;
      row.box_loss = box;
      row.dbscan = dbscan;
      row.report = evaluate_sequences(predictor, eval_data, options, c.scene.classes);
      rows.push_back(row);
    }
  }
  return rows;
}

std::string format_ablation_table(std::span<const AblationRow> rows) {
  std::ostringstream os;
  os << "     L_box  DBSCAN    LSTQ   S_cls  S_assoc\n" << std::fixed << std::setprecision(1);
  int i = 1;
  for (const AblationRow& r : rows) {
    os << "  (" << i++ << ")  " << (r.box_loss ? "  +  " : "  -  ") << "   "
       << (r.dbscan ? "  +  " : "  -  ") << std::setw(7) << 100 * r.report.lstq
       << std::setw(8) << 100 * r.report.s_cls << std::setw(9) << 100 * r.report.s_assoc
       << '\n';
  }
  return os.str();
}

void write_ablation_csv(std::ostream& os, std::span<const AblationRow> rows) {
  os << "row,L_box,DBSCAN,LSTQ,S_cls,S_assoc\n" << std::setprecision(17);
  int i = 1;
  for (const AblationRow& r : rows) {
    os << i++ << ',' << (r.box_loss ? 1 : 0) << ',' << (r.dbscan ? 1 : 0) << ','
       << r.report.lstq << ',' << r.report.s_cls << ',' << r.report.s_assoc << '\n';
  }
}

}  // namespace p4d
