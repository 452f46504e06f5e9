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

#include "p4d/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace p4d {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const char* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ParameterError("config: bad value '" + v + "' for " + key);
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ParameterError("config: bad boolean '" + v + "' for " + key);
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<int>(key, trim(item)));
  if (out.empty()) throw ParameterError("config: empty list for " + key);
  return out;
}

std::string to_text(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}
template <typename T>
std::string to_text(T v) requires std::is_integral_v<T> {
  return std::to_string(v);
}
std::string to_text(bool v) { return v ? "true" : "false"; }
std::string to_text(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

// Binds a key to a member reached through `ref`.
template <typename T, typename Ref>
Field field(std::string key, Ref ref) {
  Field f;
  f.key = key;
  f.get = [ref](const RunConfig& c) { return to_text(ref(const_cast<RunConfig&>(c))); };
  f.set = [ref, key](RunConfig& c, const std::string& v) {
    T& target = ref(c);
    if constexpr (std::is_same_v<T, bool>) {
      target = parse_bool(key, v);
    } else if constexpr (std::is_same_v<T, std::vector<int>>) {
      target = parse_int_list(key, v);
    } else {
      target = parse_number<T>(key, v);
    }
  };
  return f;
}

#define P4D_FIELD(type, key, expr) \
  field<type>(key, [](RunConfig& c) -> type& { return expr; })

const std::vector<Field>& fields() {
  static const std::vector<Field> all = {
      P4D_FIELD(std::uint64_t, "seed", c.seed),
      P4D_FIELD(int, "scene.num_frames", c.scene.num_frames),
      P4D_FIELD(int, "scene.num_objects", c.scene.num_thing_objects),
      P4D_FIELD(int, "scene.points_per_object", c.scene.points_per_object),
      P4D_FIELD(int, "scene.points_per_stuff", c.scene.points_per_stuff),
      P4D_FIELD(double, "scene.ego_speed", c.scene.ego_speed),
      P4D_FIELD(double, "scene.ego_turn_rate", c.scene.ego_turn_rate),
      P4D_FIELD(double, "scene.object_speed_min", c.scene.object_speed_min),
      P4D_FIELD(double, "scene.object_speed_max", c.scene.object_speed_max),
      P4D_FIELD(double, "scene.object_turn_rate_max", c.scene.object_turn_rate_max),
      P4D_FIELD(double, "scene.arena_extent", c.scene.arena_extent),
      P4D_FIELD(double, "scene.min_object_separation", c.scene.min_object_separation),
      P4D_FIELD(double, "scene.occlusion_probability", c.scene.occlusion_probability),
      P4D_FIELD(bool, "scene.same_class_objects", c.scene.same_class_objects),
      P4D_FIELD(double, "voxel_size", c.model.voxel_size),
      P4D_FIELD(int, "model.num_queries", c.model.num_queries),
      P4D_FIELD(int, "model.depth", c.model.backbone.depth),
      P4D_FIELD(std::vector<int>, "model.widths", c.model.backbone.widths),
      P4D_FIELD(bool, "model.positional_input", c.model.backbone.positional_input),
      P4D_FIELD(int, "model.dim", c.model.decoder.dim),
      P4D_FIELD(int, "model.heads", c.model.decoder.num_heads),
      P4D_FIELD(int, "model.ffn_dim", c.model.decoder.ffn_dim),
      P4D_FIELD(int, "model.rounds", c.model.decoder.num_rounds),
      P4D_FIELD(double, "model.mask_threshold", c.model.decoder.mask_threshold),
      P4D_FIELD(int, "model.num_frequencies", c.model.decoder.fourier.num_frequencies),
      P4D_FIELD(double, "model.first_frequency", c.model.decoder.fourier.first_frequency),
      P4D_FIELD(double, "model.frequency_base", c.model.decoder.fourier.frequency_base),
      P4D_FIELD(double, "loss.dice", c.train.weights.dice),
      P4D_FIELD(double, "loss.bce", c.train.weights.bce),
      P4D_FIELD(double, "loss.ce", c.train.weights.ce),
      P4D_FIELD(double, "loss.box", c.train.weights.box),
      P4D_FIELD(double, "loss.no_object", c.train.weights.no_object),
      P4D_FIELD(bool, "loss.sum_reduced", c.train.weights.sum_reduced),
      P4D_FIELD(long long, "train.steps", c.train.steps),
      P4D_FIELD(double, "train.max_lr", c.train.max_lr),
      P4D_FIELD(double, "train.warmup_fraction", c.train.warmup_fraction),
      P4D_FIELD(double, "train.weight_decay", c.train.adamw.weight_decay),
      P4D_FIELD(double, "train.beta1", c.train.adamw.beta1),
      P4D_FIELD(double, "train.beta2", c.train.adamw.beta2),
      P4D_FIELD(bool, "train.augment_rotation", c.train.augment.rotation),
      P4D_FIELD(bool, "train.augment_translation", c.train.augment.translation),
      P4D_FIELD(bool, "train.augment_scaling", c.train.augment.scaling),
      P4D_FIELD(int, "window", c.inference.window),
      P4D_FIELD(int, "stride", c.inference.stride),
      P4D_FIELD(bool, "dbscan.enabled", c.inference.split),
      P4D_FIELD(double, "dbscan.eps", c.inference.split_config.eps),
      P4D_FIELD(int, "dbscan.min_pts", c.inference.split_config.min_pts),
      P4D_FIELD(bool, "dbscan.per_frame", c.inference.split_config.per_frame),
      P4D_FIELD(int, "ablate.sequences", c.ablation_sequences),
      P4D_FIELD(int, "ablate.train_sequences", c.ablation_train_sequences),
  };
  return all;
}

#undef P4D_FIELD

}  // namespace

void RunConfig::sync() {
  scene.seed = seed;
  model.init_seed = seed;
  model.query_seed = seed;
  train.seed = seed;
  model.num_classes = scene.classes.size();
  model.backbone.fourier = model.decoder.fourier;
  train.window = inference.window;
  train.stride = inference.stride;
  inference.voxel_size = model.voxel_size;
  inference.depth = model.backbone.depth;
}

void RunConfig::validate() const {
  scene.validate();
  model.validate();
  train.validate();
  if (inference.window < 1 || inference.stride < 1) {
    throw ParameterError("config: window and stride must be >= 1");
  }
  if (inference.stride >= inference.window && inference.window < scene.num_frames) {
    throw ParameterError("config: stride must be smaller than window");
  }
  if (!(inference.split_config.eps > 0.0) || inference.split_config.min_pts < 1) {
    throw ParameterError("config: dbscan.eps must be > 0 and dbscan.min_pts >= 1");
  }
  if (ablation_sequences < 1 || ablation_train_sequences < 1) {
    throw ParameterError("config: ablate.sequences and ablate.train_sequences must be >= 1");
  }
}

RunConfig parse_config(const std::string& text) {
  RunConfig c;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParameterError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const Field* f = nullptr;
    for (const Field& candidate : fields()) {
      if (candidate.key == key) f = &candidate;
    }
    if (f == nullptr) {
      throw ParameterError("config line " + std::to_string(line_no) + ": unknown key '" +
                           key + "'");
    }
    if (!seen.insert(key).second) {
      throw ParameterError("config line " + std::to_string(line_no) + ": repeated key '" +
                           key + "'");
    }
    f->set(c, value);
  }
  c.sync();
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const RunConfig& config) {
  std::string out;
  for (const Field& f : fields()) out += f.key + " = " + f.get(config) + "\n";
  return out;
}

bool operator==(const RunConfig& a, const RunConfig& b) {
  return serialize_config(a) == serialize_config(b);
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const Field& f : fields()) keys.push_back(f.key);
  return keys;
}

}  // namespace p4d
