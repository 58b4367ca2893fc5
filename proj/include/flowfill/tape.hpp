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

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "flowfill/array.hpp"

namespace flowfill {

/// A named trainable tensor. Owned by a model; the tape refers to it by address.
struct Parameter {
  std::string name;
  Array value;
};

using ParameterList = std::vector<Parameter*>;
using ConstParameterList = std::vector<const Parameter*>;

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  const Array& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// d(loss)/d(parameter) for every parameter watched on a tape.
class Gradients {
 public:
  /// Gradient for p. Throws if p was never watched on the producing tape.
  const Array& operator[](const Parameter& p) const;
  Array& operator[](const Parameter& p);
  bool contains(const Parameter& p) const { return grads_.count(&p) != 0; }
  std::size_t size() const { return grads_.size(); }

  double global_norm() const;
  void scale(double factor);
  /// this += factor * other, over the union of parameters.
  void accumulate(const Gradients& other, double factor = 1.0);

  auto begin() const { return grads_.begin(); }
  auto end() const { return grads_.end(); }

 private:
  friend class Tape;
  std::unordered_map<const Parameter*, Array> grads_;
};

/// Linear record of primitive operations for one forward pass.
///
/// Nodes are appended in execution order, so ids are a topological order and
/// backward() simply walks them in reverse. Gradient slots are allocated only
/// when something flows into them; a node off every path to the loss reads as
/// exactly zero. A tape is single-writer.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf without a gradient slot of interest (data, masks, fixed tables).
  Var constant(Array value);
  /// Leaf whose gradient can be read back with grad(); used by gradient checks.
  Var input(Array value);
  /// Leaf bound to a parameter. Watching the same parameter twice returns the
  /// same node, so gradients from every use accumulate in one slot.
  Var watch(const Parameter& p);

  /// Reverse pass from a scalar node. Throws on a non-scalar loss.
  Gradients backward(const Var& loss);

  /// Gradient accumulated at v by the last backward(); zeros if none reached it.
  Array grad(const Var& v) const;

  std::size_t size() const { return nodes_.size(); }

  // Used by primitives.
  Var record(Array value, BackwardFn backward);
  const Array& value(std::size_t id) const { return nodes_[id].value; }
  /// Gradient slot of node id, allocated as zeros on first access.
  Array& grad_slot(std::size_t id);
  /// Incoming gradient of node id, or nullptr when nothing reached it.
  const Array* incoming(std::size_t id) const;

 private:
  struct Node {
    Array value;
    Array grad;
    bool has_grad = false;
    BackwardFn backward;
    const Parameter* parameter = nullptr;
  };
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> watched_;
};

// ---- primitives -------------------------------------------------------------
// Every primitive records onto the tape its operands live on. Operands from two
// different tapes are a hard error.

/// a[M,K] x b[K,N].
Var matmul(const Var& a, const Var& b);
/// a[M,K] x b[N,K]^T.
Var matmul_nt(const Var& a, const Var& b);
/// Same shapes, or b of shape [D] added to every row of a[..., D].
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
/// Elementwise product, same shapes.
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var tanh(const Var& a);
/// Tanh-approximated GELU.
Var gelu(const Var& a);
Var square(const Var& a);
/// |a| with zero subgradient at 0.
Var abs(const Var& a);
/// Softmax along the last axis (rank 1 or 2).
Var softmax(const Var& a);
/// Rows of table[V,H] selected by ids; any id outside [0,V) is an error.
Var gather(const Var& table, std::span<const int> ids);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(const Var& a, std::size_t begin, std::size_t count);
Var slice_cols(const Var& a, std::size_t begin, std::size_t count);
/// Row-wise layer normalization of x[N,D] with affine gamma[D], beta[D].
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
Var sum(const Var& a);
Var mean(const Var& a);

/// Sinusoidal embedding of a flow step t in [0,1].
///
/// Interleaved pairs: out[2i] = sin(1000 t w_i), out[2i+1] = cos(1000 t w_i)
/// with w_i = 10000^(-i / (dim/2)). dim must be even.
Array sinusoidal_embed(double t, std::size_t dim);

/// Fixed sinusoidal position table for positions [0, count).
Array sinusoidal_positions(std::size_t count, std::size_t dim, std::size_t offset = 0);

}  // namespace flowfill
