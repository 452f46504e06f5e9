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

// Minimal reverse-mode automatic differentiation over dense float64 matrices.
//
// Every tensor is a 2-D Eigen matrix (a scalar is 1x1, a vector is 1xN or
// Nx1). A Tape records each primitive as it is evaluated; nodes are appended
// in evaluation order, so the tape is always topologically sorted and
// backward() is a single reverse sweep.
//
//   ad::Tape tape;
//   ad::Var x = tape.leaf(m);
//   ad::Var loss = ad::sum(ad::sigmoid(ad::matmul(x, w)));
//   tape.backward(loss);
//   tape.grad(x);

#pragma once

#include <Eigen/Core>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "p4d/error.hpp"

namespace p4d::ad {

using Matrix = Eigen::MatrixXd;
using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

// A trainable tensor living outside any tape. Tape::backward() adds into grad.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

// Owns parameters with stable addresses, in registration order.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;

  Parameter& add(std::string name, Matrix value);
  Parameter* find(const std::string& name);
  std::vector<Parameter*> all();
  std::size_t size() const { return params_.size(); }
  std::size_t num_scalars() const;
  void zero_grad();

 private:
  std::deque<Parameter> params_;
};

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  // Receives the gradient of the node's output; pushes into inputs via
  // accumulate().
  using BackwardFn = std::function<void(Tape&, const Matrix&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var leaf(Matrix value, bool requires_grad = true);
  // Gradient reaching this node is added into p.grad by backward().
  Var parameter(Parameter& p);

  const Matrix& value(Var v) const { return nodes_[v.id()].value; }
  const Matrix& value(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  // Zero matrix when no gradient reached the node.
  Matrix grad(Var v) const;

  void backward(Var loss);

  Var record(Matrix value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var record(Matrix value, std::span<const Var> inputs, BackwardFn fn);

  template <typename Expr>
  void accumulate(int id, const Expr& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    BackwardFn backward;
    Parameter* param = nullptr;
  };
  std::deque<Node> nodes_;
};

// ---- primitives -----------------------------------------------------------

Var matmul(Var a, Var b);
Var transpose(Var a);
// Same shape, or b is 1 x cols (broadcast over rows).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise, same shape
Var div(Var a, Var b);  // elementwise, same shape
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var neg(Var a);

Var relu(Var a);
Var sigmoid(Var a);
// log(1 + exp(a)), evaluated without overflow.
Var softplus(Var a);
Var log(Var a);
Var exp(Var a);
Var abs(Var a);
// Gradient passes only where lo <= a <= hi.
Var clamp(Var a, double lo, double hi);

Var sum(Var a);       // 1x1
Var mean(Var a);      // 1x1
Var row_sum(Var a);   // rows x 1

// Row-wise softmax. With a mask, disallowed entries get exactly 0 and no
// gradient; a row with no allowed entry yields an all-zero row.
Var softmax_rows(Var a, const Mask* mask = nullptr);
Var log_softmax_rows(Var a);
// Per-row normalization with affine gamma, beta (both 1 x cols).
Var layer_norm_rows(Var x, Var gamma, Var beta, double eps = 1e-5);

Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
Var gather_rows(Var a, std::span<const int> index);
// out[k] = mean of rows i with segment[i] == k; empty segments are zero.
Var segment_mean(Var a, std::span<const int> segment, int num_segments);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator-(Var a) { return neg(a); }

// ---- checking ---------------------------------------------------------------

using ScalarFn = std::function<Var(Tape&, Var)>;

// max_i |g_analytic - g_fd| / max(1, |g_fd|) with central differences.
double finite_difference_check(const ScalarFn& f, const Matrix& x, double h);

// Same measure over parameter entries. f builds the loss on a fresh tape.
// stride > 1 checks every stride-th entry of each parameter.
double finite_difference_check(const std::function<Var(Tape&)>& f,
                               std::span<Parameter* const> params, double h,
                               int stride = 1);

}  // namespace p4d::ad
