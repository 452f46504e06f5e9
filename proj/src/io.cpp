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

#include "p4d/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace p4d {
namespace fs = std::filesystem;
namespace {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string(), 0);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("short write to " + path.string());
}

std::string shortest(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

std::vector<fs::path> sorted_files(const fs::path& dir, const char* ext) {
  std::vector<fs::path> files;
  if (!fs::is_directory(dir)) return files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ext) {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace

std::uint32_t pack_label(int semantic, int instance) {
  if (semantic < 0 || semantic >= (1 << 16) || instance < 0 ||
      instance >= (1 << 16)) {
    throw ParameterError("pack_label: semantic/instance must be in [0, 65536)");
  }
  return (static_cast<std::uint32_t>(instance) << 16) |
         static_cast<std::uint32_t>(semantic);
}

PointLabel unpack_label(std::uint32_t raw) {
  return {static_cast<int>(raw & 0xFFFFu), static_cast<int>(raw >> 16)};
}

void write_scan(const fs::path& path, const Points& points) {
  std::string bytes(static_cast<std::size_t>(points.rows()) * 16, '\0');
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const float rec[4] = {static_cast<float>(points(i, 0)),
                          static_cast<float>(points(i, 1)),
                          static_cast<float>(points(i, 2)), 0.0f};
    std::memcpy(bytes.data() + i * 16, rec, 16);
  }
  write_file(path, bytes);
}

Points read_scan(const fs::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() % 16 != 0) {
    throw FormatError(path.string() + ": size " + std::to_string(bytes.size()) +
                          " is not a multiple of the 16-byte record",
                      static_cast<long long>(bytes.size() - bytes.size() % 16));
  }
  const auto n = static_cast<Eigen::Index>(bytes.size() / 16);
  Points points(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    float rec[4];
    std::memcpy(rec, bytes.data() + i * 16, 16);
    points.row(i) << rec[0], rec[1], rec[2];
  }
  return points;
}

void write_labels(const fs::path& path, const std::vector<PointLabel>& labels) {
  std::string bytes(labels.size() * 4, '\0');
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::uint32_t raw = pack_label(labels[i].semantic, labels[i].instance);
    std::memcpy(bytes.data() + i * 4, &raw, 4);
  }
  write_file(path, bytes);
}

std::vector<PointLabel> read_labels(const fs::path& path,
                                    std::optional<std::size_t> expected_count) {
  const std::string bytes = read_file(path);
  if (bytes.size() % 4 != 0) {
    throw FormatError(path.string() + ": size is not a multiple of 4 bytes",
                      static_cast<long long>(bytes.size() - bytes.size() % 4));
  }
  const std::size_t n = bytes.size() / 4;
  if (expected_count && *expected_count != n) {
    throw FormatError(path.string() + ": " + std::to_string(n) +
                          " labels for " + std::to_string(*expected_count) +
                          " points",
                      static_cast<long long>(std::min(n, *expected_count) * 4));
  }
  std::vector<PointLabel> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t raw;
    std::memcpy(&raw, bytes.data() + i * 4, 4);
    labels[i] = unpack_label(raw);
  }
  return labels;
}

std::string format_poses(const std::vector<Posed>& poses) {
  std::string out;
  for (const auto& pose : poses) {
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 4; ++c) {
        const double v = c < 3 ? pose.rotation(r, c) : pose.translation(r);
        if (r != 0 || c != 0) out += ' ';
        out += shortest(v);
      }
    }
    out += '\n';
  }
  return out;
}

std::vector<Posed> parse_poses(const std::string& text) {
  std::vector<Posed> poses;
  std::size_t line_start = 0;
  while (line_start < text.size()) {
    std::size_t line_end = text.find('\n', line_start);
    if (line_end == std::string::npos) line_end = text.size();
    const char* p = text.data() + line_start;
    const char* end = text.data() + line_end;
    double values[12];
    int count = 0;
    while (p < end) {
      while (p < end && (*p == ' ' || *p == '\t' || *p == '\r')) ++p;
      if (p == end) break;
      if (count == 12) {
        throw FormatError("pose line has more than 12 values",
                          static_cast<long long>(p - text.data()));
      }
      auto [next, ec] = std::from_chars(p, end, values[count]);
      if (ec != std::errc()) {
        throw FormatError("unparsable pose value",
                          static_cast<long long>(p - text.data()));
      }
      ++count;
      p = next;
    }
    if (count == 0) {
      line_start = line_end + 1;
      continue;
    }
    if (count != 12) {
      throw FormatError("pose line has " + std::to_string(count) +
                            " values, expected 12",
                        static_cast<long long>(line_start));
    }
    Posed pose;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) pose.rotation(r, c) = values[r * 4 + c];
      pose.translation(r) = values[r * 4 + 3];
    }
    poses.push_back(pose);
    line_start = line_end + 1;
  }
  return poses;
}

void write_poses(const fs::path& path, const std::vector<Posed>& poses) {
  write_file(path, format_poses(poses));
}

std::vector<Posed> read_poses(const fs::path& path) {
  return parse_poses(read_file(path));
}

std::string scan_file_name(int frame, const char* extension) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06d%s", frame, extension);
  return buf;
}

void write_sequence(const fs::path& dir, const ScanSequence& seq) {
  bool all_labeled = !seq.scans.empty();
  for (std::size_t f = 0; f < seq.scans.size(); ++f) {
    write_scan(dir / "velodyne" / scan_file_name(static_cast<int>(f), ".bin"),
               seq.scans[f].points);
    all_labeled = all_labeled && seq.scans[f].labels.has_value();
  }
  if (all_labeled) {
    for (std::size_t f = 0; f < seq.scans.size(); ++f) {
      write_labels(dir / "labels" / scan_file_name(static_cast<int>(f), ".label"),
                   *seq.scans[f].labels);
    }
  }
  write_poses(dir / "poses.txt", seq.poses);
}

ScanSequence read_sequence(const fs::path& dir) {
  ScanSequence seq;
  const auto scans = sorted_files(dir / "velodyne", ".bin");
  if (scans.empty()) {
    throw FormatError("no scans under " + (dir / "velodyne").string(), 0);
  }
  seq.poses = read_poses(dir / "poses.txt");
  if (seq.poses.size() != scans.size()) {
    throw ArityError(dir.string() + ": " + std::to_string(scans.size()) +
                     " scans but " + std::to_string(seq.poses.size()) + " poses");
  }
  const bool labeled = fs::is_directory(dir / "labels");
  for (std::size_t f = 0; f < scans.size(); ++f) {
    LidarScan scan;
    scan.frame_index = static_cast<int>(f);
    scan.points = read_scan(scans[f]);
    if (labeled) {
      scan.labels = read_labels(
          dir / "labels" / scans[f].filename().replace_extension(".label"),
          static_cast<std::size_t>(scan.points.rows()));
    }
    seq.scans.push_back(std::move(scan));
  }
  return seq;
}

void write_label_dir(const fs::path& dir,
                     const std::vector<std::vector<PointLabel>>& per_scan) {
  for (std::size_t f = 0; f < per_scan.size(); ++f) {
    write_labels(dir / scan_file_name(static_cast<int>(f), ".label"),
                 per_scan[f]);
  }
}

std::vector<std::vector<PointLabel>> read_label_dir(const fs::path& dir) {
  std::vector<std::vector<PointLabel>> out;
  for (const auto& file : sorted_files(dir, ".label")) {
    out.push_back(read_labels(file));
  }
  return out;
}

}  // namespace p4d
