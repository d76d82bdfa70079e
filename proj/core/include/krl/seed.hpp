// Copyright (c) 2026 The krl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Deterministic seed derivation and a small portable generator. Results do
// not depend on the standard library's distribution implementations.

#pragma once

#include <cstdint>
#include <string_view>

namespace krl {

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t hash_string(std::string_view text);
std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value);

std::uint64_t trajectory_seed(std::uint64_t run_seed, std::uint64_t step,
                              std::string_view task_id,
                              std::uint64_t trajectory_index);
std::uint64_t turn_seed(std::uint64_t trajectory_seed, std::uint64_t turn_index);

class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next();
  // Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  bool coin(double p_true = 0.5) { return uniform() < p_true; }

 private:
  std::uint64_t state_;
};

}  // namespace krl
