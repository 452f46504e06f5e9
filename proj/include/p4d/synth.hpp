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

// Deterministic synthetic LiDAR sequences with ground-truth tracklets.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "p4d/geometry.hpp"

namespace p4d {

// Semantic class table. Classes are 0..size()-1; each is a thing or stuff.
struct ClassTable {
  std::vector<std::string> names;
  std::vector<bool> is_thing;

  int size() const { return static_cast<int>(names.size()); }
  bool thing(int c) const { return c >= 0 && c < size() && is_thing[c]; }
  std::vector<int> thing_classes() const;
  std::vector<int> stuff_classes() const;
  void validate() const;

  // road, building (stuff); car, person (things).
  static ClassTable Default();
};

struct SceneSpec {
  std::uint64_t seed = 0;
  int num_frames = 4;
  int num_thing_objects = 3;
  ClassTable classes = ClassTable::Default();
  int points_per_object = 60;   // per visible frame
  int points_per_stuff = 160;   // per stuff class per frame
  double ego_speed = 0.5;       // m/frame
  double ego_turn_rate = 0.02;  // rad/frame
  double object_speed_min = 0.3;
  double object_speed_max = 1.0;
  double object_turn_rate_max = 0.05;  // rad/frame
  double arena_extent = 30.0;          // side of the square arena, meters
  double min_object_separation = 6.0;  // between object start centers
  double occlusion_probability = 0.0;  // per object per frame
  bool same_class_objects = false;     // every thing uses the first thing class

  void validate() const;
};

struct ObjectTrack {
  int instance_id = 0;
  int class_id = 0;
  std::vector<Eigen::Vector3d> center;  // per frame, world frame
  std::vector<double> heading;          // per frame, radians about +z
  Eigen::Vector3d shape = Eigen::Vector3d::Ones();  // box length, width, height
  std::vector<bool> visible;            // per frame
};

struct ScanSequence {
  std::vector<LidarScan> scans;
  std::vector<Posed> poses;
  std::vector<ObjectTrack> tracks;

  int num_frames() const { return static_cast<int>(scans.size()); }
};

// Ego trajectory and object tracks for a scene, before any points are drawn.
std::vector<Posed> make_ego_poses(const SceneSpec& spec);
std::vector<ObjectTrack> make_tracks(const SceneSpec& spec);

// Draws the scans for explicit tracks. Lets callers edit visibility first.
ScanSequence render_sequence(const SceneSpec& spec,
                             std::vector<ObjectTrack> tracks);

ScanSequence generate_sequence(const SceneSpec& spec);

}  // namespace p4d
