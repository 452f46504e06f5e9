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

#include "p4d/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace p4d::ad {
namespace {

std::string shape_of(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

[[noreturn]] void shape_error(const char* op, const Matrix& a, const Matrix& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_of(a) +
                   " and " + shape_of(b));
}

Tape& tape_of(Var a) {
  if (!a.valid()) throw ContractError("operation on an unbound Var");
  return *a.tape();
}

Tape& tape_of(Var a, Var b) {
  if (a.tape() != b.tape()) throw ContractError("Vars from different tapes");
  return tape_of(a);
}

}  // namespace

// ---- ParameterStore ---------------------------------------------------------

Parameter& ParameterStore::add(std::string name, Matrix value) {
  if (find(name) != nullptr) {
    throw ContractError("duplicate parameter name " + name);
  }
  Parameter& p = params_.emplace_back();
  p.name = std::move(name);
  p.value = std::move(value);
  p.zero_grad();
  return p;
}

Parameter* ParameterStore::find(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

std::vector<Parameter*> ParameterStore::all() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::size_t ParameterStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

// ---- Var / Tape ---------------------------------------------------------------

const Matrix& Var::value() const { return tape_->value(id_); }

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::constant(Matrix value) { return leaf(std::move(value), false); }

Var Tape::leaf(Matrix value, bool requires_grad) {
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::parameter(Parameter& p) {
  Var v = leaf(p.value, true);
  nodes_.back().param = &p;
  return v;
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Var Tape::record(Matrix value, std::span<const Var> inputs, BackwardFn fn) {
  bool needs = false;
  for (const Var& in : inputs) {
    if (in.tape() != this) throw ContractError("input recorded on another tape");
    needs = needs || nodes_[in.id()].requires_grad;
  }
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.requires_grad = needs;
  if (needs) n.backward = std::move(fn);
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs,
                 BackwardFn fn) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(fn));
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw ContractError("backward: loss is not on this tape");
  const Matrix& lv = nodes_[loss.id()].value;
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ContractError("backward: loss must be scalar, got " + shape_of(lv));
  }
  for (auto& n : nodes_) n.grad.resize(0, 0);
  if (!nodes_[loss.id()].requires_grad) return;
  nodes_[loss.id()].grad = Matrix::Ones(1, 1);
  for (int id = loss.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, n.grad);
    if (n.param != nullptr) n.param->grad += n.grad;
  }
}

// ---- primitives -----------------------------------------------------------

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  if (a.cols() != b.rows()) shape_error("matmul", a.value(), b.value());
  Matrix out = a.value() * b.value();
  const int ia = a.id(), ib = b.id();
  return t.record(std::move(out), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

Var transpose(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.record(a.value().transpose(), {a},
                  [ia](Tape& t, const Matrix& g) { t.accumulate(ia, g.transpose()); });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const int ia = a.id(), ib = b.id();
  if (a.rows() == b.rows() && a.cols() == b.cols()) {
    return t.record(a.value() + b.value(), {a, b},
                    [ia, ib](Tape& t, const Matrix& g) {
                      t.accumulate(ia, g);
                      t.accumulate(ib, g);
                    });
  }
  if (b.rows() == 1 && b.cols() == a.cols()) {
    Matrix out = a.value();
    out.rowwise() += b.value().row(0);
    return t.record(std::move(out), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
      t.accumulate(ia, g);
      if (t.requires_grad(ib)) t.accumulate(ib, g.colwise().sum());
    });
  }
  shape_error("add", a.value(), b.value());
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    shape_error("sub", a.value(), b.value());
  }
  const int ia = a.id(), ib = b.id();
  return t.record(a.value() - b.value(), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, -g);
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    shape_error("mul", a.value(), b.value());
  }
  const int ia = a.id(), ib = b.id();
  return t.record(a.value().cwiseProduct(b.value()), {a, b},
                  [ia, ib](Tape& t, const Matrix& g) {
                    if (t.requires_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value(ib)));
                    if (t.requires_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia)));
                  });
}

Var div(Var a, Var b) {
  Tape& t = tape_of(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    shape_error("div", a.value(), b.value());
  }
  const int ia = a.id(), ib = b.id();
  return t.record(a.value().cwiseQuotient(b.value()), {a, b},
                  [ia, ib](Tape& t, const Matrix& g) {
                    const Matrix& bv = t.value(ib);
                    if (t.requires_grad(ia)) t.accumulate(ia, g.cwiseQuotient(bv));
                    if (t.requires_grad(ib)) {
                      t.accumulate(ib, -(g.array() * t.value(ia).array() /
                                         bv.array().square())
                                            .matrix());
                    }
                  });
}

Var scale(Var a, double s) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.record(a.value() * s, {a},
                  [ia, s](Tape& t, const Matrix& g) { t.accumulate(ia, g * s); });
}

Var add_scalar(Var a, double s) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.record((a.value().array() + s).matrix(), {a},
                  [ia](Tape& t, const Matrix& g) { t.accumulate(ia, g); });
}

Var neg(Var a) { return scale(a, -1.0); }

Var relu(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.record(a.value().cwiseMax(0.0), {a}, [ia](Tape& t, const Matrix& g) {
    t.accumulate(ia, (t.value(ia).array() > 0.0).select(g, 0.0));
  });
}

Var sigmoid(Var a) {
  Tape& t = tape_of(a);
  Matrix out = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  const int ia = a.id();
  const int io = static_cast<int>(t.size());  // id of the node recorded below
  return t.record(std::move(out), {a}, [ia, io](Tape& t, const Matrix& g) {
    const auto y = t.value(io).array();
    t.accumulate(ia, (g.array() * y * (1.0 - y)).matrix());
  });
}

Var softplus(Var a) {
  Tape& t = tape_of(a);
  const auto x = a.value().array();
  Matrix out = (x.max(0.0) + (-x.abs()).exp().log1p()).matrix();
  const int ia = a.id();
  return t.record(std::move(out), {a}, [ia](Tape& t, const Matrix& g) {
    const auto s = 1.0 / (1.0 + (-t.value(ia).array()).exp());
    t.accumulate(ia, (g.array() * s).matrix());
  });
}

Var log(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.record(a.value().array().log().matrix(), {a},
                  [ia](Tape& t, const Matrix& g) {
                    t.accumulate(ia, g.cwiseQuotient(t.value(ia)));
                  });
}

Var exp(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  const int io = static_cast<int>(t.size());
  return t.record(a.value().array().exp().matrix(), {a},
                  [ia, io](Tape& t, const Matrix& g) {
                    t.accumulate(ia, g.cwiseProduct(t.value(io)));
                  });
}

Var abs(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.record(a.value().cwiseAbs(), {a}, [ia](Tape& t, const Matrix& g) {
    t.accumulate(ia, (g.array() * t.value(ia).array().sign()).matrix());
  });
}

Var clamp(Var a, double lo, double hi) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.record(a.value().cwiseMax(lo).cwiseMin(hi), {a},
                  [ia, lo, hi](Tape& t, const Matrix& g) {
                    const auto x = t.value(ia).array();
                    t.accumulate(ia, ((x >= lo) && (x <= hi)).select(g, 0.0));
                  });
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  const Eigen::Index r = a.rows(), c = a.cols();
  return t.record(Matrix::Constant(1, 1, a.value().sum()), {a},
                  [ia, r, c](Tape& t, const Matrix& g) {
                    t.accumulate(ia, Matrix::Constant(r, c, g(0, 0)));
                  });
}

Var mean(Var a) {
  const double n = static_cast<double>(std::max<Eigen::Index>(a.value().size(), 1));
  return scale(sum(a), 1.0 / n);
}

Var row_sum(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  const Eigen::Index c = a.cols();
  return t.record(a.value().rowwise().sum(), {a}, [ia, c](Tape& t, const Matrix& g) {
    t.accumulate(ia, g.col(0).replicate(1, c));
  });
}

Var softmax_rows(Var a, const Mask* mask) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  if (mask != nullptr && (mask->rows() != x.rows() || mask->cols() != x.cols())) {
    throw ShapeError("softmax_rows: mask " + std::to_string(mask->rows()) + "x" +
                     std::to_string(mask->cols()) + " does not match logits " +
                     shape_of(x));
  }
  Matrix y = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (mask == nullptr || (*mask)(r, c)) mx = std::max(mx, x(r, c));
    }
    if (!std::isfinite(mx)) continue;
    double z = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (mask == nullptr || (*mask)(r, c)) {
        y(r, c) = std::exp(x(r, c) - mx);
        z += y(r, c);
      }
    }
    y.row(r) /= z;
  }
  const int ia = a.id();
  const int io = static_cast<int>(t.size());
  return t.record(std::move(y), {a}, [ia, io](Tape& t, const Matrix& g) {
    const Matrix& y = t.value(io);
    const Eigen::VectorXd dot = g.cwiseProduct(y).rowwise().sum();
    t.accumulate(ia, (y.array() * (g.colwise() - dot).array()).matrix());
  });
}

Var log_softmax_rows(Var a) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  const Eigen::VectorXd mx = x.rowwise().maxCoeff();
  const Matrix shifted = x.colwise() - mx;
  const Eigen::VectorXd lse = shifted.array().exp().rowwise().sum().log().matrix();
  Matrix out = shifted.colwise() - lse;
  const Matrix soft = out.array().exp().matrix();
  const int ia = a.id();
  return t.record(std::move(out), {a}, [ia, soft](Tape& t, const Matrix& g) {
    const Eigen::VectorXd gs = g.rowwise().sum();
    t.accumulate(ia, g - (soft.array().colwise() * gs.array()).matrix());
  });
}

Var layer_norm_rows(Var x, Var gamma, Var beta, double eps) {
  Tape& t = tape_of(x, gamma);
  tape_of(x, beta);
  const Matrix& xv = x.value();
  const Eigen::Index d = xv.cols();
  if (gamma.rows() != 1 || gamma.cols() != d || beta.rows() != 1 ||
      beta.cols() != d) {
    shape_error("layer_norm_rows", xv, gamma.value());
  }
  const Eigen::VectorXd mu = xv.rowwise().mean();
  const Matrix centered = xv.colwise() - mu;
  const Eigen::VectorXd inv_std =
      ((centered.array().square().rowwise().sum() / static_cast<double>(d)) + eps)
          .rsqrt()
          .matrix();
  const Matrix xhat = (centered.array().colwise() * inv_std.array()).matrix();
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).matrix();
  out.rowwise() += beta.value().row(0);
  const int ix = x.id(), ig = gamma.id(), ib = beta.id();
  return t.record(std::move(out), {x, gamma, beta},
                  [ix, ig, ib, xhat, inv_std](Tape& t, const Matrix& g) {
                    if (t.requires_grad(ig)) {
                      t.accumulate(ig, g.cwiseProduct(xhat).colwise().sum());
                    }
                    if (t.requires_grad(ib)) t.accumulate(ib, g.colwise().sum());
                    if (t.requires_grad(ix)) {
                      const Matrix dxhat =
                          (g.array().rowwise() * t.value(ig).row(0).array()).matrix();
                      const Eigen::VectorXd m1 = dxhat.rowwise().mean();
                      const Eigen::VectorXd m2 =
                          dxhat.cwiseProduct(xhat).rowwise().mean();
                      Matrix dx = dxhat.colwise() - m1;
                      dx -= (xhat.array().colwise() * m2.array()).matrix();
                      dx = (dx.array().colwise() * inv_std.array()).matrix();
                      t.accumulate(ix, dx);
                    }
                  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  Tape& t = tape_of(parts[0]);
  const Eigen::Index r = parts[0].rows();
  Eigen::Index total = 0;
  for (const Var& p : parts) {
    if (p.rows() != r) shape_error("concat_cols", parts[0].value(), p.value());
    total += p.cols();
  }
  Matrix out(r, total);
  std::vector<std::pair<int, Eigen::Index>> spans;
  Eigen::Index c = 0;
  for (const Var& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    spans.emplace_back(p.id(), c);
    c += p.cols();
  }
  return t.record(std::move(out), parts, [spans](Tape& t, const Matrix& g) {
    for (const auto& [id, start] : spans) {
      if (t.requires_grad(id)) {
        t.accumulate(id, g.middleCols(start, t.value(id).cols()));
      }
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  Tape& t = tape_of(parts[0]);
  const Eigen::Index c = parts[0].cols();
  Eigen::Index total = 0;
  for (const Var& p : parts) {
    if (p.cols() != c) shape_error("concat_rows", parts[0].value(), p.value());
    total += p.rows();
  }
  Matrix out(total, c);
  std::vector<std::pair<int, Eigen::Index>> spans;
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    spans.emplace_back(p.id(), r);
    r += p.rows();
  }
  return t.record(std::move(out), parts, [spans](Tape& t, const Matrix& g) {
    for (const auto& [id, start] : spans) {
      if (t.requires_grad(id)) {
        t.accumulate(id, g.middleRows(start, t.value(id).rows()));
      }
    }
  });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  Tape& t = tape_of(a);
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw ShapeError("slice_cols: columns [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") outside " +
                     shape_of(a.value()));
  }
  const int ia = a.id();
  const Eigen::Index r = a.rows(), c = a.cols();
  return t.record(a.value().middleCols(start, count), {a},
                  [ia, r, c, start, count](Tape& t, const Matrix& g) {
                    Matrix full = Matrix::Zero(r, c);
                    full.middleCols(start, count) = g;
                    t.accumulate(ia, full);
                  });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  Tape& t = tape_of(a);
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw ShapeError("slice_rows: rows [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") outside " +
                     shape_of(a.value()));
  }
  const int ia = a.id();
  const Eigen::Index r = a.rows(), c = a.cols();
  return t.record(a.value().middleRows(start, count), {a},
                  [ia, r, c, start, count](Tape& t, const Matrix& g) {
                    Matrix full = Matrix::Zero(r, c);
                    full.middleRows(start, count) = g;
                    t.accumulate(ia, full);
                  });
}

Var gather_rows(Var a, std::span<const int> index) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  Matrix out(static_cast<Eigen::Index>(index.size()), x.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= x.rows()) {
      throw ShapeError("gather_rows: index " + std::to_string(index[i]) +
                       " outside " + shape_of(x));
    }
    out.row(static_cast<Eigen::Index>(i)) = x.row(index[i]);
  }
  const int ia = a.id();
  const Eigen::Index r = x.rows(), c = x.cols();
  std::vector<int> idx(index.begin(), index.end());
  return t.record(std::move(out), {a}, [ia, r, c, idx](Tape& t, const Matrix& g) {
    Matrix full = Matrix::Zero(r, c);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      full.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
    }
    t.accumulate(ia, full);
  });
}

Var segment_mean(Var a, std::span<const int> segment, int num_segments) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  if (static_cast<Eigen::Index>(segment.size()) != x.rows()) {
    throw ShapeError("segment_mean: " + std::to_string(segment.size()) +
                     " segment ids for " + shape_of(x));
  }
  Eigen::VectorXd count = Eigen::VectorXd::Zero(num_segments);
  Matrix out = Matrix::Zero(num_segments, x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const int s = segment[i];
    if (s < 0 || s >= num_segments) {
      throw ShapeError("segment_mean: segment id " + std::to_string(s) +
                       " outside [0, " + std::to_string(num_segments) + ")");
    }
    out.row(s) += x.row(i);
    count(s) += 1.0;
  }
  for (int s = 0; s < num_segments; ++s) {
    if (count(s) > 0.0) out.row(s) /= count(s);
  }
  const int ia = a.id();
  const Eigen::Index r = x.rows();
  std::vector<int> seg(segment.begin(), segment.end());
  return t.record(std::move(out), {a}, [ia, r, seg, count](Tape& t, const Matrix& g) {
    Matrix full(r, g.cols());
    for (Eigen::Index i = 0; i < r; ++i) full.row(i) = g.row(seg[i]) / count(seg[i]);
    t.accumulate(ia, full);
  });
}

// ---- checking ---------------------------------------------------------------

double finite_difference_check(const ScalarFn& f, const Matrix& x, double h) {
  if (!(h > 0.0)) throw ParameterError("finite_difference_check: h must be > 0");
  Matrix analytic;
  {
    Tape tape;
    Var xv = tape.leaf(x);
    Var y = f(tape, xv);
    tape.backward(y);
    analytic = tape.grad(xv);
  }
  auto eval = [&](const Matrix& at) {
    Tape tape;
    Var xv = tape.leaf(at, false);
    return f(tape, xv).value()(0, 0);
  };
  double worst = 0.0;
  Matrix probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = probe(i);
    probe(i) = orig + h;
    const double up = eval(probe);
    probe(i) = orig - h;
    const double down = eval(probe);
    probe(i) = orig;
    const double fd = (up - down) / (2.0 * h);
    worst = std::max(worst, std::abs(analytic(i) - fd) / std::max(1.0, std::abs(fd)));
  }
  return worst;
}

double finite_difference_check(const std::function<Var(Tape&)>& f,
                               std::span<Parameter* const> params, double h,
                               int stride) {
  if (!(h > 0.0)) throw ParameterError("finite_difference_check: h must be > 0");
  if (stride < 1) throw ParameterError("finite_difference_check: stride < 1");
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    Var loss = f(tape);
    tape.backward(loss);
  }
  std::vector<Matrix> analytic;
  for (Parameter* p : params) analytic.push_back(p->grad);
  auto eval = [&] {
    Tape tape;
    return f(tape).value()(0, 0);
  };
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix& v = params[k]->value;
    for (Eigen::Index i = 0; i < v.size(); i += stride) {
      const double orig = v(i);
      v(i) = orig + h;
      const double up = eval();
      v(i) = orig - h;
      const double down = eval();
      v(i) = orig;
      const double fd = (up - down) / (2.0 * h);
      worst = std::max(worst,
                       std::abs(analytic[k](i) - fd) / std::max(1.0, std::abs(fd)));
    }
  }
  for (Parameter* p : params) p->zero_grad();
  return worst;
}

}  // namespace p4d::ad
