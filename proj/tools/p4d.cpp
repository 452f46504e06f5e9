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

// p4d: generate | train | infer | eval | ablate | inspect
//
// Log verbosity: P4D_LOG_LEVEL = 0 (info), 1 (warning, default), 2 (error).

#include <glog/logging.h>

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <vector>

#include "p4d/config.hpp"
#include "p4d/io.hpp"
#include "p4d/optim.hpp"
#include "p4d/pca.hpp"
#include "p4d/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

using p4d::RunConfig;

// Removes outputs created by a failed command.
class OutputGuard {
 public:
  void track(const fs::path& p) {
    if (!fs::exists(p)) created_.push_back(p);
  }
  void commit() { created_.clear(); }
  ~OutputGuard() {
    std::error_code ec;
    for (const fs::path& p : created_) fs::remove_all(p, ec);
  }

 private:
  std::vector<fs::path> created_;
};

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool no_dbscan = false;
  bool no_box_loss = false;
  std::optional<int> window;
  std::optional<int> stride;
};

RunConfig resolve_config(const CommonOptions& o) {
  RunConfig c = o.config.empty() ? p4d::parse_config("") : p4d::load_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.no_dbscan) c.inference.split = false;
  if (o.no_box_loss) c.train.weights.box = 0.0;
  if (o.window) {
    c.inference.window = *o.window;
    if (!o.stride) c.inference.stride = std::max(1, *o.window - 1);
  }
  if (o.stride) c.inference.stride = *o.stride;
  c.sync();
  c.validate();
  return c;
}

void add_common(CLI::App* app, CommonOptions& o, bool needs_out) {
  app->add_option("--config", o.config, "key = value run configuration")->check(CLI::ExistingFile);
  app->add_option("--seed", o.seed, "overrides the config seed");
  auto* out = app->add_option("--out", o.out, "output path");
  if (needs_out) out->required();
  app->add_flag("--no-dbscan", o.no_dbscan, "disable DBSCAN mask splitting");
  app->add_flag("--no-box-loss", o.no_box_loss, "set the box loss weight to 0");
  app->add_option("--window", o.window, "scans per window");
  app->add_option("--stride", o.stride, "frames between window starts (default window - 1)");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw p4d::Error("cannot write " + path.string());
  out << text;
  if (!out) throw p4d::Error("write failed for " + path.string());
}

// Rebuilds the model a checkpoint was trained with.
std::unique_ptr<p4d::Model> load_model(const fs::path& path, RunConfig& config) {
  const p4d::ad::Checkpoint ckpt = p4d::ad::read_checkpoint(path);
  config = p4d::parse_config(ckpt.metadata);
  auto model = std::make_unique<p4d::Model>(config.model);
  p4d::ad::load_parameters(ckpt, model->parameters());
  return model;
}

int run_generate(const CommonOptions& o) {
  const RunConfig c = resolve_config(o);
  OutputGuard guard;
  guard.track(o.out);
  p4d::write_sequence(o.out, p4d::generate_sequence(c.scene));
  guard.commit();
  LOG(INFO) << "wrote sequence to " << o.out;
  return 0;
}

int run_train(const CommonOptions& o, const std::string& sequence) {
  const RunConfig c = resolve_config(o);
  std::vector<p4d::ScanSequence> data;
  data.push_back(sequence.empty() ? p4d::generate_sequence(c.scene)
                                  : p4d::read_sequence(sequence));
  OutputGuard guard;
  guard.track(o.out);
  fs::create_directories(o.out);
  const long long log_every = std::max<long long>(1, c.train.steps / 20);
  const p4d::TrainedModel trained =
      p4d::train_model(c, data, [&](const p4d::StepRecord& r) {
        if (r.step % log_every == 0 || r.step + 1 == c.train.steps) {
          LOG(INFO) << "step " << r.step << " lr " << r.lr << " loss " << r.loss.total;
        }
      });
  p4d::ad::save_checkpoint(fs::path(o.out) / "model.ckpt", trained.model->parameters(),
                           p4d::serialize_config(c));
  std::ofstream csv(fs::path(o.out) / "loss.csv");
  p4d::write_trace_csv(csv, trained.trace);
  if (!csv) throw p4d::Error("write failed for loss.csv");
  guard.commit();
  return 0;
}

int run_infer(const CommonOptions& o, const std::string& checkpoint,
              const std::string& sequence) {
  RunConfig c;
  const auto model = load_model(checkpoint, c);
  if (o.no_dbscan) c.inference.split = false;
  if (o.window) {
    c.inference.window = *o.window;
    c.inference.stride = std::max(1, *o.window - 1);
  }
  if (o.stride) c.inference.stride = *o.stride;
  const p4d::ScanSequence seq = p4d::read_sequence(sequence);
  const p4d::LabelSequence labels =
      p4d::run_sequence(p4d::model_predictor(*model, c.scene.classes), seq.scans, seq.poses,
                        c.inference);
  OutputGuard guard;
  guard.track(o.out);
  p4d::write_label_dir(o.out, labels);
  guard.commit();
  return 0;
}

p4d::LabelSequence read_labels_any(const fs::path& dir) {
  if (fs::exists(dir / "labels")) return p4d::read_label_dir(dir / "labels");
  return p4d::read_label_dir(dir);
}

int run_eval(const CommonOptions& o, const std::string& pred, const std::string& gt) {
  const RunConfig c = resolve_config(o);
  const p4d::MetricReport r =
      p4d::evaluate(read_labels_any(pred), read_labels_any(gt), c.scene.classes);
  std::cout << p4d::format_report_table(r, c.scene.classes);
  if (!o.out.empty()) {
    OutputGuard guard;
    guard.track(o.out);
    std::ofstream csv(o.out);
    p4d::write_report_csv(csv, r, c.scene.classes);
    if (!csv) throw p4d::Error("write failed for " + o.out);
    guard.commit();
  }
  return 0;
}

int run_ablate(const CommonOptions& o) {
  const RunConfig c = resolve_config(o);
  const std::vector<p4d::AblationRow> rows = p4d::run_ablation(c);
  std::cout << p4d::format_ablation_table(rows);
  if (!o.out.empty()) {
    OutputGuard guard;
    guard.track(o.out);
    std::ofstream csv(o.out);
    p4d::write_ablation_csv(csv, rows);
    if (!csv) throw p4d::Error("write failed for " + o.out);
    guard.commit();
  }
  return 0;
}

int run_inspect(const CommonOptions& o, const std::string& checkpoint,
                const std::string& sequence) {
  RunConfig c;
  const auto model = load_model(checkpoint, c);
  const p4d::ScanSequence seq = p4d::read_sequence(sequence);
  const int t = std::min(o.window.value_or(c.inference.window), seq.num_frames());
  const std::span<const p4d::LidarScan> scans(seq.scans.data(), t);
  const std::span<const p4d::Posed> poses(seq.poses.data(), t);
  const p4d::WindowInput input =
      p4d::prepare_window(scans, poses, c.model.voxel_size, c.model.backbone.depth);
  p4d::ad::Tape tape;
  const p4d::FeaturePyramid pyramid = model->backbone().extract(
      tape, input.layout, input.frame, tape.constant(input.seed));
  const p4d::Colors voxel_colors = p4d::pca_colors(pyramid.features[0].value());
  p4d::Colors colors(input.cloud.size(), 3);
  for (Eigen::Index i = 0; i < input.cloud.size(); ++i) {
    colors.row(i) = voxel_colors.row(input.grid.point_to_voxel[i]);
  }
  OutputGuard guard;
  guard.track(o.out);
  p4d::write_ply(o.out, input.cloud.points, colors);
  guard.commit();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  google::InitGoogleLogging(argv[0]);
  FLAGS_logtostderr = true;
  FLAGS_minloglevel = 1;
  if (const char* level = std::getenv("P4D_LOG_LEVEL")) FLAGS_minloglevel = std::atoi(level);

  CLI::App app{"4D panoptic segmentation of superimposed LiDAR scans"};
  app.require_subcommand(1);
  CommonOptions o;
  std::string checkpoint, sequence, pred, gt;

  auto* gen = app.add_subcommand("generate", "write a synthetic labeled sequence");
  add_common(gen, o, true);
  auto* tr = app.add_subcommand("train", "train a model; writes model.ckpt and loss.csv");
  add_common(tr, o, true);
  tr->add_option("--sequence", sequence, "training sequence (default: generated)");
  auto* inf = app.add_subcommand("infer", "write per-scan .label predictions");
  add_common(inf, o, true);
  inf->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  inf->add_option("--sequence", sequence)->required()->check(CLI::ExistingDirectory);
  auto* ev = app.add_subcommand("eval", "score predictions against ground truth");
  add_common(ev, o, false);
  ev->add_option("--pred", pred)->required()->check(CLI::ExistingDirectory);
  ev->add_option("--gt", gt)->required()->check(CLI::ExistingDirectory);
  auto* ab = app.add_subcommand("ablate", "box loss x DBSCAN grid on held-out sequences");
  add_common(ab, o, false);
  auto* ins = app.add_subcommand("inspect", "PCA colors of finest features as PLY");
  add_common(ins, o, true);
  ins->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  ins->add_option("--sequence", sequence)->required()->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    if (*gen) return run_generate(o);
    if (*tr) return run_train(o, sequence);
    if (*inf) return run_infer(o, checkpoint, sequence);
    if (*ev) return run_eval(o, pred, gt);
    if (*ab) return run_ablate(o);
    if (*ins) return run_inspect(o, checkpoint, sequence);
  } catch (const std::exception& e) {
    std::cerr << "p4d: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
