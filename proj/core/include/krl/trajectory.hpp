// Copyright (c) 2026 The krl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "krl/context.hpp"

namespace krl {

// What the policy produced for one turn, beyond what enters later contexts.
struct Generation {
  std::optional<std::string> cot_full;
  int response_tokens = 0;
  bool truncated = false;
};

struct Trajectory {
  std::string task_id;
  int trajectory_index = 0;
  std::string policy_id;
  std::uint64_t seed = 0;
  std::vector<TurnRecord> turns;
  // Parallel to turns; empty when only evaluation results were kept.
  std::vector<Generation> generations;
};

}  // namespace krl
