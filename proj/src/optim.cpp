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

#include "p4d/optim.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>

namespace p4d::ad {
namespace {

static_assert(std::endian::native == std::endian::little);

constexpr char kMagic[8] = {'P', '4', 'D', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  void read(void* dst, std::size_t n) {
    if (pos_ + n > bytes_.size()) {
      throw FormatError("checkpoint truncated", static_cast<long long>(pos_));
    }
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    read(&v, 4);
    return v;
  }
  std::string str(std::size_t n) {
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string bytes_;
  std::size_t pos_ = 0;
};

double cosine_anneal(double from, double to, double pct) {
  return to + (from - to) * 0.5 * (1.0 + std::cos(std::numbers::pi * pct));
}

}  // namespace

OptimizerState make_optimizer_state(std::span<Parameter* const> params,
                                    const AdamWConfig& config) {
  OptimizerState state;
  state.config = config;
  for (const Parameter* p : params) {
    state.first_moment.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    state.second_moment.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
  return state;
}

void adamw_step(OptimizerState& state, std::span<Parameter* const> params,
                double lr) {
  if (params.size() != state.first_moment.size()) {
    throw ContractError("adamw_step: optimizer state tracks " +
                        std::to_string(state.first_moment.size()) +
                        " parameters, got " + std::to_string(params.size()));
  }
  const auto& c = state.config;
  ++state.step;
  const double bias1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bias2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    Matrix& m = state.first_moment[k];
    Matrix& v = state.second_moment[k];
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols() ||
        m.rows() != p.value.rows() || m.cols() != p.value.cols()) {
      throw ContractError("adamw_step: shape mismatch for parameter " + p.name);
    }
    p.value *= 1.0 - lr * c.weight_decay;
    m = c.beta1 * m + (1.0 - c.beta1) * p.grad;
    v = c.beta2 * v + (1.0 - c.beta2) * p.grad.cwiseAbs2();
    p.value.array() -=
        lr * (m.array() / bias1) / ((v.array() / bias2).sqrt() + c.eps);
  }
}

long long LrSchedule::peak_step() const {
  return static_cast<long long>(
      std::floor(warmup_fraction * static_cast<double>(total_steps - 1)));
}

double one_cycle_lr(const LrSchedule& s, long long step) {
  if (s.total_steps < 1 || !(s.max_lr >= 0.0) || !(s.div_start > 0.0) ||
      !(s.div_end > 0.0)) {
    throw ParameterError("one_cycle_lr: invalid schedule");
  }
  if (step < 0 || step >= s.total_steps) {
    throw ParameterError("one_cycle_lr: step " + std::to_string(step) +
                         " outside [0, " + std::to_string(s.total_steps) + ")");
  }
  const long long peak = s.peak_step();
  const double start = s.max_lr / s.div_start;
  const double end = s.max_lr / s.div_end;
  if (step <= peak) {
    if (peak == 0) return s.max_lr;
    return cosine_anneal(start, s.max_lr,
                         static_cast<double>(step) / static_cast<double>(peak));
  }
  const long long tail = s.total_steps - 1 - peak;
  return cosine_anneal(s.max_lr, end,
                       static_cast<double>(step - peak) / static_cast<double>(tail));
}

void save_checkpoint(const std::filesystem::path& path, ParameterStore& params,
                     const std::string& metadata) {
  std::string out(kMagic, 8);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(metadata.size()));
  out += metadata;
  const auto all = params.all();
  put_u32(out, static_cast<std::uint32_t>(all.size()));
  for (const Parameter* p : all) {
    put_u32(out, static_cast<std::uint32_t>(p->name.size()));
    out += p->name;
    put_u32(out, static_cast<std::uint32_t>(p->value.rows()));
    put_u32(out, static_cast<std::uint32_t>(p->value.cols()));
    for (Eigen::Index r = 0; r < p->value.rows(); ++r) {
      for (Eigen::Index c = 0; c < p->value.cols(); ++c) {
        const double v = p->value(r, c);
        char b[8];
        std::memcpy(b, &v, 8);
        out.append(b, 8);
      }
    }
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write checkpoint " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open checkpoint " + path.string(), 0);
  Reader in(std::string{std::istreambuf_iterator<char>(f),
                        std::istreambuf_iterator<char>()});
  char magic[8];
  in.read(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0) throw FormatError("bad checkpoint magic", 0);
  const std::uint32_t version = in.u32();
  if (version != kVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version), 8);
  }
  Checkpoint ckpt;
  ckpt.metadata = in.str(in.u32());
  const std::uint32_t count = in.u32();
  for (std::uint32_t k = 0; k < count; ++k) {
    std::string name = in.str(in.u32());
    const std::uint32_t rows = in.u32(), cols = in.u32();
    Matrix m(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r) {
      for (std::uint32_t c = 0; c < cols; ++c) in.read(&m(r, c), 8);
    }
    ckpt.tensors.emplace_back(std::move(name), std::move(m));
  }
  if (!in.done()) {
    throw FormatError("trailing bytes in checkpoint", static_cast<long long>(in.pos()));
  }
  return ckpt;
}

void load_parameters(const Checkpoint& ckpt, ParameterStore& params) {
  if (ckpt.tensors.size() != params.size()) {
    throw ContractError("checkpoint has " + std::to_string(ckpt.tensors.size()) +
                        " tensors, model has " + std::to_string(params.size()));
  }
  for (const auto& [name, value] : ckpt.tensors) {
    Parameter* p = params.find(name);
    if (p == nullptr) throw ContractError("checkpoint tensor " + name + " unknown");
    if (p->value.rows() != value.rows() || p->value.cols() != value.cols()) {
      throw ShapeError("checkpoint tensor " + name + " has the wrong shape");
    }
    p->value = value;
  }
}

}  // namespace p4d::ad
