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

// SemanticKITTI-compatible files.
//
//   velodyne/NNNNNN.bin   little-endian float32 records (x, y, z, intensity)
//   labels/NNNNNN.label   little-endian uint32, semantic | instance << 16
//   poses.txt             one line per scan, 12 floats, row-major [R | t]

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "p4d/geometry.hpp"
#include "p4d/synth.hpp"

namespace p4d {

std::uint32_t pack_label(int semantic, int instance);
PointLabel unpack_label(std::uint32_t raw);

void write_scan(const std::filesystem::path& path, const Points& points);
Points read_scan(const std::filesystem::path& path);

void write_labels(const std::filesystem::path& path,
                  const std::vector<PointLabel>& labels);
// expected_count, when given, must equal the record count.
std::vector<PointLabel> read_labels(
    const std::filesystem::path& path,
    std::optional<std::size_t> expected_count = std::nullopt);

std::string format_poses(const std::vector<Posed>& poses);
std::vector<Posed> parse_poses(const std::string& text);
void write_poses(const std::filesystem::path& path,
                 const std::vector<Posed>& poses);
std::vector<Posed> read_poses(const std::filesystem::path& path);

std::string scan_file_name(int frame, const char* extension);

// Writes velodyne/, labels/ (when every scan has labels) and poses.txt.
void write_sequence(const std::filesystem::path& dir, const ScanSequence& seq);
// Labels are attached when labels/ exists.
ScanSequence read_sequence(const std::filesystem::path& dir);

// Per-scan label files only (prediction output directories).
void write_label_dir(const std::filesystem::path& dir,
                     const std::vector<std::vector<PointLabel>>& per_scan);
std::vector<std::vector<PointLabel>> read_label_dir(
    const std::filesystem::path& dir);

}  // namespace p4d
