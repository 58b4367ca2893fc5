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

#include <array>
#include <cstdint>
#include <string_view>

#include "flowfill/array.hpp"

namespace flowfill {

namespace detail {
/// One Philox4x32-10 block; exposed for known-answer tests.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key);
}  // namespace detail

/// Counter-based Philox4x32-10 generator.
///
/// A generator is identified by (seed, stream); the stream index occupies the
/// upper half of the 128-bit counter, so generators with distinct streams never
/// share a block. Draws are a pure function of (seed, stream, draw count), which
/// makes record-parallel data generation reproducible regardless of scheduling.
///
/// Normals use Box-Muller on top of the uniform stream instead of
/// std::normal_distribution, whose algorithm is implementation-defined.
class Rng {
 public:
  static constexpr std::string_view kAlgorithm = "philox4x32-10";

  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p);
  double normal();
  Array normal_array(const Shape& shape);

  /// Independent generator on another stream of the same seed.
  Rng stream(std::uint64_t stream_index) const { return Rng(seed_, stream_index); }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_index() const { return stream_; }
  /// Number of 64-bit words consumed so far.
  std::uint64_t draws() const { return draws_; }

 private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::uint64_t draws_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  int buffered_ = 0;
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

}  // namespace flowfill
