// Copyright 2026 The flowfill Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "flowfill/tape.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace flowfill {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

MapC as_mat(const Array& a) {
  return MapC(a.data().data(), static_cast<Eigen::Index>(a.rows()),
              static_cast<Eigen::Index>(a.cols()));
}
Map as_mat(Array& a) {
  return Map(a.data().data(), static_cast<Eigen::Index>(a.rows()),
             static_cast<Eigen::Index>(a.cols()));
}

Tape& same_tape(const char* op, const Var& a, const Var& b) {
  if (!a.valid() || !b.valid() || &a.tape() != &b.tape()) {
    throw std::invalid_argument(std::string(op) + ": operands are not on the same tape");
  }
  return a.tape();
}

void require_rank(const char* op, const Array& a, std::size_t rank) {
  if (a.rank() != rank) {
    throw ShapeError(op, "expected rank " + std::to_string(rank) + ", got " +
                             shape_string(a.shape()));
  }
}

// Unary elementwise op with derivative computed from (input, output).
template <typename F, typename D>
Var unary(const Var& a, F f, D dfdx) {
  Tape& tape = a.tape();
  const Array& x = a.value();
  Array out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  const std::size_t ia = a.id();
  return tape.record(std::move(out), [ia, dfdx](Tape& t, std::size_t self) {
    const Array& g = *t.incoming(self);
    const Array& xv = t.value(ia);
    const Array& yv = t.value(self);
    Array& ga = t.grad_slot(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dfdx(xv[i], yv[i]);
  });
}

}  // namespace

// ---- Var / Gradients --------------------------------------------------------

const Array& Var::value() const {
  if (!tape_) throw std::logic_error("Var: use of an empty handle");
  return tape_->value(id_);
}

const Array& Gradients::operator[](const Parameter& p) const {
  auto it = grads_.find(&p);
  if (it == grads_.end()) {
    throw std::out_of_range("Gradients: parameter '" + p.name + "' was not watched");
  }
  return it->second;
}

Array& Gradients::operator[](const Parameter& p) {
  auto it = grads_.find(&p);
  if (it == grads_.end()) {
    throw std::out_of_range("Gradients: parameter '" + p.name + "' was not watched");
  }
  return it->second;
}

double Gradients::global_norm() const {
  // Summed in name order so the result does not depend on parameter addresses.
  std::vector<std::pair<const std::string*, double>> parts;
  parts.reserve(grads_.size());
  for (const auto& [p, g] : grads_) {
    double s = 0.0;
    for (double v : g.data()) s += v * v;
    parts.emplace_back(&p->name, s);
  }
  std::sort(parts.begin(), parts.end(),
            [](const auto& a, const auto& b) { return *a.first < *b.first; });
  double s = 0.0;
  for (const auto& part : parts) s += part.second;
  return std::sqrt(s);
}

void Gradients::scale(double factor) {
  for (auto& [p, g] : grads_) {
    for (double& v : g.data()) v *= factor;
  }
}

void Gradients::accumulate(const Gradients& other, double factor) {
  for (const auto& [p, g] : other.grads_) {
    auto it = grads_.find(p);
    if (it == grads_.end()) {
      Array scaled = g;
      for (double& v : scaled.data()) v *= factor;
      grads_.emplace(p, std::move(scaled));
    } else {
      axpy_inplace(it->second, factor, g);
    }
  }
}

// ---- Tape ---------------------------------------------------------------------

Tape::Tape() { nodes_.reserve(512); }

Var Tape::record(Array value, BackwardFn backward) {
  nodes_.push_back(Node{std::move(value), Array(), false, std::move(backward), nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Array value) { return record(std::move(value), nullptr); }

Var Tape::input(Array value) { return record(std::move(value), nullptr); }

Var Tape::watch(const Parameter& p) {
  auto it = watched_.find(&p);
  if (it != watched_.end()) return Var(this, it->second);
  Var v = record(p.value, nullptr);
  nodes_[v.id()].parameter = &p;
  watched_.emplace(&p, v.id());
  return v;
}

Array& Tape::grad_slot(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Array::zeros_like(n.value);
    n.has_grad = true;
  }
  return n.grad;
}

const Array* Tape::incoming(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.has_grad ? &n.grad : nullptr;
}

Gradients Tape::backward(const Var& loss) {
  if (&loss.tape() != this) throw std::invalid_argument("backward: loss is on another tape");
  if (loss.value().size() != 1) {
    throw ShapeError("backward", "loss must be scalar, got " + shape_string(loss.shape()));
  }
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad = Array();
  }
  grad_slot(loss.id())[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.has_grad && n.backward) n.backward(*this, i);
  }
  Gradients out;
  for (const auto& [param, id] : watched_) {
    const Node& n = nodes_[id];
    out.grads_.emplace(param, n.has_grad ? n.grad : Array::zeros_like(n.value));
  }
  return out;
}

Array Tape::grad(const Var& v) const {
  const Node& n = nodes_.at(v.id());
  return n.has_grad ? n.grad : Array::zeros_like(n.value);
}

// ---- primitives -----------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  Tape& tape = same_tape("matmul", a, b);
  const Array& av = a.value();
  const Array& bv = b.value();
  require_rank("matmul", av, 2);
  require_rank("matmul", bv, 2);
  if (av.cols() != bv.rows()) throw ShapeError("matmul", av.shape(), bv.shape());
  Array out(Shape{av.rows(), bv.cols()});
  as_mat(out).noalias() = as_mat(av) * as_mat(bv);
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), [ia, ib](Tape& t, std::size_t self) {
    MapC g = as_mat(*t.incoming(self));
    as_mat(t.grad_slot(ia)).noalias() += g * as_mat(t.value(ib)).transpose();
    as_mat(t.grad_slot(ib)).noalias() += as_mat(t.value(ia)).transpose() * g;
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  Tape& tape = same_tape("matmul_nt", a, b);
  const Array& av = a.value();
  const Array& bv = b.value();
  require_rank("matmul_nt", av, 2);
  require_rank("matmul_nt", bv, 2);
  if (av.cols() != bv.cols()) throw ShapeError("matmul_nt", av.shape(), bv.shape());
  Array out(Shape{av.rows(), bv.rows()});
  as_mat(out).noalias() = as_mat(av) * as_mat(bv).transpose();
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), [ia, ib](Tape& t, std::size_t self) {
    MapC g = as_mat(*t.incoming(self));
    as_mat(t.grad_slot(ia)).noalias() += g * as_mat(t.value(ib));
    as_mat(t.grad_slot(ib)).noalias() += g.transpose() * as_mat(t.value(ia));
  });
}

Var add(const Var& a, const Var& b) {
  Tape& tape = same_tape("add", a, b);
  const Array& av = a.value();
  const Array& bv = b.value();
  const std::size_t ia = a.id(), ib = b.id();
  if (av.shape() == bv.shape()) {
    Array out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    return tape.record(std::move(out), [ia, ib](Tape& t, std::size_t self) {
      const Array& g = *t.incoming(self);
      axpy_inplace(t.grad_slot(ia), 1.0, g);
      axpy_inplace(t.grad_slot(ib), 1.0, g);
    });
  }
  // Leading-dimension expansion: b[D] onto every row of a[..., D].
  if (bv.rank() != 1 || av.rank() < 1 || av.shape().back() != bv.dim(0)) {
    throw ShapeError("add", av.shape(), bv.shape());
  }
  const std::size_t d = bv.size();
  Array out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % d];
  return tape.record(std::move(out), [ia, ib, d](Tape& t, std::size_t self) {
    const Array& g = *t.incoming(self);
    axpy_inplace(t.grad_slot(ia), 1.0, g);
    Array& gb = t.grad_slot(ib);
    for (std::size_t i = 0; i < g.size(); ++i) gb[i % d] += g[i];
  });
}

Var sub(const Var& a, const Var& b) {
  Tape& tape = same_tape("sub", a, b);
  const Array& av = a.value();
  const Array& bv = b.value();
  if (av.shape() != bv.shape()) throw ShapeError("sub", av.shape(), bv.shape());
  Array out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), [ia, ib](Tape& t, std::size_t self) {
    const Array& g = *t.incoming(self);
    axpy_inplace(t.grad_slot(ia), 1.0, g);
    axpy_inplace(t.grad_slot(ib), -1.0, g);
  });
}

Var mul(const Var& a, const Var& b) {
  Tape& tape = same_tape("mul", a, b);
  const Array& av = a.value();
  const Array& bv = b.value();
  if (av.shape() != bv.shape()) throw ShapeError("mul", av.shape(), bv.shape());
  Array out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), [ia, ib](Tape& t, std::size_t self) {
    const Array& g = *t.incoming(self);
    const Array& x = t.value(ia);
    const Array& y = t.value(ib);
    {
      Array& ga = t.grad_slot(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
    }
    Array& gb = t.grad_slot(ib);
    for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
  });
}

Var scale(const Var& a, double factor) {
  return unary(
      a, [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Var tanh(const Var& a) {
  return unary(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var gelu(const Var& a) {
  constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double c = 0.044715;
  return unary(
      a,
      [](double x) { return 0.5 * x * (1.0 + std::tanh(k * (x + c * x * x * x))); },
      [](double x, double) {
        const double u = k * (x + c * x * x * x);
        const double th = std::tanh(u);
        return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * k * (1.0 + 3.0 * c * x * x);
      });
}

Var square(const Var& a) {
  return unary(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var abs(const Var& a) {
  return unary(
      a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var softmax(const Var& a) {
  Tape& tape = a.tape();
  const Array& x = a.value();
  if (x.rank() != 1 && x.rank() != 2) throw ShapeError("softmax", "rank must be 1 or 2");
  const std::size_t cols = x.shape().back();
  const std::size_t rows = cols ? x.size() / cols : 0;
  Array out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data().data() + r * cols;
    double* o = out.data().data() + r * cols;
    double mx = in[0];
    for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, in[c]);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += (o[c] = std::exp(in[c] - mx));
    for (std::size_t c = 0; c < cols; ++c) o[c] /= total;
  }
  const std::size_t ia = a.id();
  return tape.record(std::move(out), [ia, rows, cols](Tape& t, std::size_t self) {
    const Array& g = *t.incoming(self);
    const Array& y = t.value(self);
    Array& ga = t.grad_slot(ia);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t off = r * cols;
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += g[off + c] * y[off + c];
      for (std::size_t c = 0; c < cols; ++c) ga[off + c] += y[off + c] * (g[off + c] - dot);
    }
  });
}

Var gather(const Var& table, std::span<const int> ids) {
  Tape& tape = table.tape();
  const Array& tv = table.value();
  require_rank("gather", tv, 2);
  const std::size_t v = tv.rows(), h = tv.cols();
  Array out(Shape{ids.size(), h});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= v) {
      throw std::out_of_range("gather: id " + std::to_string(ids[i]) +
                              " outside table of " + std::to_string(v) + " rows");
    }
    std::copy_n(tv.data().data() + ids[i] * h, h, out.data().data() + i * h);
  }
  std::vector<int> idx(ids.begin(), ids.end());
  const std::size_t it = table.id();
  return tape.record(std::move(out), [it, idx = std::move(idx), h](Tape& t, std::size_t self) {
    const Array& g = *t.incoming(self);
    Array& gt = t.grad_slot(it);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (std::size_t c = 0; c < h; ++c) gt[idx[i] * h + c] += g[i * h + c];
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no operands");
  Tape& tape = parts[0].tape();
  const std::size_t n = parts[0].value().rows();
  std::vector<std::size_t> ids, widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    same_tape("concat_cols", parts[0], p);
    require_rank("concat_cols", p.value(), 2);
    if (p.value().rows() != n) throw ShapeError("concat_cols", parts[0].shape(), p.shape());
    ids.push_back(p.id());
    widths.push_back(p.value().cols());
    total += widths.back();
  }
  Array out(Shape{n, total});
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Array& src = parts[k].value();
    for (std::size_t r = 0; r < n; ++r) {
      std::copy_n(src.data().data() + r * widths[k], widths[k],
                  out.data().data() + r * total + off);
    }
    off += widths[k];
  }
  return tape.record(std::move(out), [ids, widths, n, total](Tape& t, std::size_t self) {
    const Array& g = *t.incoming(self);
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      Array& gk = t.grad_slot(ids[k]);
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < widths[k]; ++c) gk[r * widths[k] + c] += g[r * total + off + c];
      }
      off += widths[k];
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no operands");
  Tape& tape = parts[0].tape();
  const std::size_t d = parts[0].value().cols();
  std::vector<std::size_t> ids, counts;
  std::size_t rows = 0;
  for (const Var& p : parts) {
    same_tape("concat_rows", parts[0], p);
    require_rank("concat_rows", p.value(), 2);
    if (p.value().cols() != d) throw ShapeError("concat_rows", parts[0].shape(), p.shape());
    ids.push_back(p.id());
    counts.push_back(p.value().size());
    rows += p.value().rows();
  }
  Array out(Shape{rows, d});
  std::size_t off = 0;
  for (const Var& p : parts) {
    std::copy(p.value().data().begin(), p.value().data().end(), out.data().begin() + off);
    off += p.value().size();
  }
  return tape.record(std::move(out), [ids, counts](Tape& t, std::size_t self) {
    const Array& g = *t.incoming(self);
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      Array& gk = t.grad_slot(ids[k]);
      for (std::size_t i = 0; i < counts[k]; ++i) gk[i] += g[off + i];
      off += counts[k];
    }
  });
}

Var slice_rows(const Var& a, std::size_t begin, std::size_t count) {
  Tape& tape = a.tape();
  const Array& av = a.value();
  require_rank("slice_rows", av, 2);
  if (begin + count > av.rows()) {
    throw ShapeError("slice_rows", "rows [" + std::to_string(begin) + "," +
                                       std::to_string(begin + count) + ") outside " +
                                       shape_string(av.shape()));
  }
  const std::size_t d = av.cols();
  Array out(Shape{count, d});
  std::copy_n(av.data().data() + begin * d, count * d, out.data().data());
  const std::size_t ia = a.id();
  return tape.record(std::move(out), [ia, begin, d](Tape& t, std::size_t self) {
    const Array& g = *t.incoming(self);
    Array& ga = t.grad_slot(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[begin * d + i] += g[i];
  });
}

Var slice_cols(const Var& a, std::size_t begin, std::size_t count) {
  Tape& tape = a.tape();
  const Array& av = a.value();
  require_rank("slice_cols", av, 2);
  if (begin + count > av.cols()) {
    throw ShapeError("slice_cols", "cols [" + std::to_string(begin) + "," +
                                       std::to_string(begin + count) + ") outside " +
                                       shape_string(av.shape()));
  }
  const std::size_t n = av.rows(), d = av.cols();
  Array out(Shape{n, count});
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(av.data().data() + r * d + begin, count, out.data().data() + r * count);
  }
  const std::size_t ia = a.id();
  return tape.record(std::move(out), [ia, begin, count, n, d](Tape& t, std::size_t self) {
    const Array& g = *t.incoming(self);
    Array& ga = t.grad_slot(ia);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < count; ++c) ga[r * d + begin + c] += g[r * count + c];
    }
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  Tape& tape = same_tape("layer_norm", x, gamma);
  same_tape("layer_norm", x, beta);
  const Array& xv = x.value();
  require_rank("layer_norm", xv, 2);
  const std::size_t n = xv.rows(), d = xv.cols();
  if (gamma.value().shape() != Shape{d} || beta.value().shape() != Shape{d}) {
    throw ShapeError("layer_norm", xv.shape(), gamma.value().shape());
  }
  // Normalized activations and inverse std are kept for the backward pass.
  Array xhat(Shape{n, d});
  std::vector<double> inv_std(n);
  Array out(Shape{n, d});
  const Array& gv = gamma.value();
  const Array& bv = beta.value();
  for (std::size_t r = 0; r < n; ++r) {
    const double* in = xv.data().data() + r * d;
    double mu = 0.0;
    for (std::size_t c = 0; c < d; ++c) mu += in[c];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (in[c] - mu) * (in[c] - mu);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) {
      const double h = (in[c] - mu) * inv_std[r];
      xhat[r * d + c] = h;
      out[r * d + c] = h * gv[c] + bv[c];
    }
  }
  const std::size_t ix = x.id(), ig = gamma.id(), ib = beta.id();
  return tape.record(std::move(out), [ix, ig, ib, n, d, xhat = std::move(xhat),
                                      inv_std = std::move(inv_std)](Tape& t, std::size_t self) {
    const Array& g = *t.incoming(self);
    const Array& gv = t.value(ig);
    {
      Array& gg = t.grad_slot(ig);
      for (std::size_t i = 0; i < g.size(); ++i) gg[i % d] += g[i] * xhat[i];
    }
    {
      Array& gb = t.grad_slot(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % d] += g[i];
    }
    Array& gx = t.grad_slot(ix);
    const double inv_d = 1.0 / static_cast<double>(d);
    for (std::size_t r = 0; r < n; ++r) {
      double sum_dh = 0.0, sum_dh_h = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double dh = g[r * d + c] * gv[c];
        sum_dh += dh;
        sum_dh_h += dh * xhat[r * d + c];
      }
      for (std::size_t c = 0; c < d; ++c) {
        const double dh = g[r * d + c] * gv[c];
        gx[r * d + c] += inv_std[r] * (dh - inv_d * sum_dh - xhat[r * d + c] * inv_d * sum_dh_h);
      }
    }
  });
}

Var sum(const Var& a) {
  Tape& tape = a.tape();
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const std::size_t ia = a.id();
  return tape.record(Array::scalar(s), [ia](Tape& t, std::size_t self) {
    const double g = (*t.incoming(self))[0];
    for (double& v : t.grad_slot(ia).data()) v += g;
  });
}

Var mean(const Var& a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ShapeError("mean", "empty operand");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Array sinusoidal_embed(double t, std::size_t dim) {
  if (dim == 0 || dim % 2 != 0) {
    throw std::invalid_argument("sinusoidal_embed: dim must be even and positive, got " +
                                std::to_string(dim));
  }
  const std::size_t half = dim / 2;
  Array out(Shape{dim});
  for (std::size_t i = 0; i < half; ++i) {
    const double w = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(half));
    out[2 * i] = std::sin(1000.0 * t * w);
    out[2 * i + 1] = std::cos(1000.0 * t * w);
  }
  return out;
}

Array sinusoidal_positions(std::size_t count, std::size_t dim, std::size_t offset) {
  if (dim % 2 != 0) throw std::invalid_argument("sinusoidal_positions: dim must be even");
  const std::size_t half = dim / 2;
  Array out(Shape{count, dim});
  for (std::size_t p = 0; p < count; ++p) {
    const double pos = static_cast<double>(p + offset);
    for (std::size_t i = 0; i < half; ++i) {
      const double w = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(half));
      out[p * dim + 2 * i] = std::sin(pos * w);
      out[p * dim + 2 * i + 1] = std::cos(pos * w);
    }
  }
  return out;
}

}  // namespace flowfill
