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

#include "p4d/synth.hpp"

#include <cmath>
#include <numbers>

#include "p4d/rng.hpp"

namespace p4d {
namespace {

constexpr double kSensorHeight = 1.7;
constexpr double kWallHeight = 4.0;
constexpr double kGroundNoise = 0.02;
constexpr std::uint64_t kRenderStream = 0x9e3779b97f4a7c15ull;

Eigen::Vector3d shape_for(const ClassTable& classes, int class_id) {
  const auto& name = classes.names[class_id];
  if (name == "car") return {4.0, 1.8, 1.5};
  if (name == "person") return {0.8, 0.8, 1.7};
  if (name == "truck") return {7.0, 2.5, 3.0};
  return {2.0, 2.0, 2.0};
}

bool inside_footprint(const Eigen::Vector3d& p, const ObjectTrack& track,
                      int frame) {
  const Eigen::Vector3d d = p - track.center[frame];
  const double c = std::cos(track.heading[frame]);
  const double s = std::sin(track.heading[frame]);
  const double along = c * d.x() + s * d.y();
  const double across = -s * d.x() + c * d.y();
  return std::abs(along) <= 0.5 * track.shape.x() &&
         std::abs(across) <= 0.5 * track.shape.y();
}

// Uniform sample over the four sides and the top of an oriented box.
Eigen::Vector3d sample_box_surface(const ObjectTrack& track, int frame,
                                   Rng& rng) {
  const double l = track.shape.x(), w = track.shape.y(), h = track.shape.z();
  const double side_l = l * h, side_w = w * h, top = l * w;
  const double total = 2.0 * side_l + 2.0 * side_w + top;
  const double pick = rng.uniform() * total;
  const double u = rng.uniform() - 0.5, v = rng.uniform() - 0.5;
  Eigen::Vector3d local;
  if (pick < side_l) {
    local = {u * l, 0.5 * w, v * h};
  } else if (pick < 2.0 * side_l) {
    local = {u * l, -0.5 * w, v * h};
  } else if (pick < 2.0 * side_l + side_w) {
    local = {0.5 * l, u * w, v * h};
  } else if (pick < 2.0 * side_l + 2.0 * side_w) {
    local = {-0.5 * l, u * w, v * h};
  } else {
    local = {u * l, v * w, 0.5 * h};
  }
  return rotation_z(track.heading[frame]) * local + track.center[frame];
}

// Static wall faces for stuff class `order` >= 1: pairs of walls just outside
// the arena, alternating between the y and x boundaries.
Eigen::Vector3d sample_wall(const SceneSpec& spec, int order, Rng& rng) {
  const double half = 0.5 * spec.arena_extent;
  const double offset = half + 1.0 + 2.0 * ((order - 1) / 2);
  const double along = rng.uniform(-half, half);
  const double side = rng.bernoulli(0.5) ? 1.0 : -1.0;
  const double z = rng.uniform(0.0, kWallHeight);
  if ((order - 1) % 2 == 0) return {along, side * offset, z};
  return {side * offset, along, z};
}

}  // namespace

std::vector<int> ClassTable::thing_classes() const {
  std::vector<int> out;
  for (int c = 0; c < size(); ++c) {
    if (is_thing[c]) out.push_back(c);
  }
  return out;
}

std::vector<int> ClassTable::stuff_classes() const {
  std::vector<int> out;
  for (int c = 0; c < size(); ++c) {
    if (!is_thing[c]) out.push_back(c);
  }
  return out;
}

void ClassTable::validate() const {
  if (names.size() != is_thing.size()) {
    throw ParameterError("class table: names and thing flags differ in length");
  }
  if (names.empty()) throw ParameterError("class table is empty");
  if (size() >= kIgnoreLabel) {
    throw ParameterError("class table: too many classes");
  }
}

ClassTable ClassTable::Default() {
  return ClassTable{{"road", "building", "car", "person"},
                    {false, false, true, true}};
}

void SceneSpec::validate() const {
  classes.validate();
  if (num_frames < 1) throw ParameterError("scene: num_frames must be >= 1");
  if (num_thing_objects < 0) {
    throw ParameterError("scene: num_thing_objects must be >= 0");
  }
  if (points_per_object < 1 || points_per_stuff < 1) {
    throw ParameterError("scene: point counts must be positive");
  }
  if (classes.stuff_classes().empty()) {
    throw ParameterError("scene: at least one stuff class is required");
  }
  if (num_thing_objects > 0 && classes.thing_classes().empty()) {
    throw ParameterError("scene: objects requested but no thing classes");
  }
  if (!(arena_extent > 0.0) || object_speed_min < 0.0 ||
      object_speed_max < object_speed_min || occlusion_probability < 0.0 ||
      occlusion_probability > 1.0) {
    throw ParameterError("scene: invalid motion or arena parameters");
  }
}

std::vector<Posed> make_ego_poses(const SceneSpec& spec) {
  spec.validate();
  std::vector<Posed> poses;
  double x = 0.0, y = 0.0, yaw = 0.0;
  for (int f = 0; f < spec.num_frames; ++f) {
    Posed pose;
    pose.rotation = rotation_z(yaw);
    pose.translation = {x, y, kSensorHeight};
    poses.push_back(pose);
    x += spec.ego_speed * std::cos(yaw);
    y += spec.ego_speed * std::sin(yaw);
    yaw += spec.ego_turn_rate;
  }
  return poses;
}

std::vector<ObjectTrack> make_tracks(const SceneSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const auto things = spec.classes.thing_classes();
  const double half = 0.5 * spec.arena_extent - 3.0;
  std::vector<ObjectTrack> tracks;
  for (int o = 0; o < spec.num_thing_objects; ++o) {
    ObjectTrack track;
    track.instance_id = o + 1;
    track.class_id = spec.same_class_objects
                         ? things.front()
                         : things[rng.index(static_cast<long long>(things.size()))];
    track.shape = shape_for(spec.classes, track.class_id);

    Eigen::Vector3d start;
    for (int attempt = 0; attempt < 1000; ++attempt) {
      start = {rng.uniform(-half, half), rng.uniform(-half, half),
               0.5 * track.shape.z()};
      bool clear = true;
      for (const auto& other : tracks) {
        if ((other.center.front() - start).head<2>().norm() <
            spec.min_object_separation) {
          clear = false;
          break;
        }
      }
      if (clear) break;
    }
    double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double speed = rng.uniform(spec.object_speed_min, spec.object_speed_max);
    const double turn =
        rng.uniform(-spec.object_turn_rate_max, spec.object_turn_rate_max);
    Eigen::Vector3d center = start;
    for (int f = 0; f < spec.num_frames; ++f) {
      track.center.push_back(center);
      track.heading.push_back(heading);
      track.visible.push_back(!rng.bernoulli(spec.occlusion_probability));
      center.x() += speed * std::cos(heading);
      center.y() += speed * std::sin(heading);
      heading += turn;
    }
    tracks.push_back(std::move(track));
  }
  return tracks;
}

ScanSequence render_sequence(const SceneSpec& spec,
                             std::vector<ObjectTrack> tracks) {
  spec.validate();
  for (const auto& t : tracks) {
    if (static_cast<int>(t.center.size()) != spec.num_frames ||
        static_cast<int>(t.heading.size()) != spec.num_frames ||
        static_cast<int>(t.visible.size()) != spec.num_frames) {
      throw ArityError("render_sequence: track length differs from num_frames");
    }
  }
  Rng rng(spec.seed ^ kRenderStream);
  const auto stuff = spec.classes.stuff_classes();
  const double radius = 0.5 * spec.arena_extent;

  ScanSequence seq;
  seq.poses = make_ego_poses(spec);
  for (int f = 0; f < spec.num_frames; ++f) {
    std::vector<Eigen::Vector3d> world;
    std::vector<PointLabel> labels;
    const Eigen::Vector3d ego = seq.poses[f].translation;

    for (std::size_t s = 0; s < stuff.size(); ++s) {
      for (int i = 0; i < spec.points_per_stuff; ++i) {
        Eigen::Vector3d p;
        if (s == 0) {
          for (int attempt = 0; attempt < 100; ++attempt) {
            const double r = radius * std::sqrt(rng.uniform());
            const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
            p = {ego.x() + r * std::cos(theta), ego.y() + r * std::sin(theta),
                 kGroundNoise * rng.normal()};
            bool covered = false;
            for (const auto& t : tracks) {
              if (t.visible[f] && inside_footprint(p, t, f)) covered = true;
            }
            if (!covered) break;
          }
        } else {
          p = sample_wall(spec, static_cast<int>(s), rng);
        }
        world.push_back(p);
        labels.push_back({stuff[s], 0});
      }
    }
    for (const auto& t : tracks) {
      if (!t.visible[f]) continue;
      for (int i = 0; i < spec.points_per_object; ++i) {
        world.push_back(sample_box_surface(t, f, rng));
        labels.push_back({t.class_id, t.instance_id});
      }
    }

    LidarScan scan;
    scan.frame_index = f;
    scan.points.resize(static_cast<Eigen::Index>(world.size()), 3);
    const Posed to_sensor = seq.poses[f].inverse();
    for (std::size_t i = 0; i < world.size(); ++i) {
      scan.points.row(static_cast<Eigen::Index>(i)) =
          (to_sensor.rotation * world[i] + to_sensor.translation).transpose();
    }
    scan.labels = std::move(labels);
    seq.scans.push_back(std::move(scan));
  }
  seq.tracks = std::move(tracks);
  return seq;
}

ScanSequence generate_sequence(const SceneSpec& spec) {
  return render_sequence(spec, make_tracks(spec));
}

}  // namespace p4d
