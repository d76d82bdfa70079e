// Copyright (c) 2026 The krl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command implementations behind the `krl` binary. Each returns a process
// exit code and writes human-readable output to `out`, diagnostics to `err`.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "krl/grpo.hpp"

namespace krl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitShortfall = 3;
inline constexpr int kExitCheck = 4;

struct RolloutOptions {
  std::filesystem::path config_path;
  std::uint64_t steps = 1;
  std::optional<std::string> run_id;
  std::optional<std::filesystem::path> runs_dir;
  std::optional<std::size_t> parallelism;
  // Continue an existing run after its last stored step.
  bool resume = false;
};

int cmd_rollout(const RolloutOptions& options, std::ostream& out, std::ostream& err);

struct EvalOptions {
  std::string run_id;
  std::filesystem::path runs_dir = "runs";
  std::size_t k = 16;
  std::size_t turns = 8;
  std::vector<double> thresholds{1.0, 1.5};
  // Defaults to the last stored step.
  std::optional<std::uint64_t> step;
  std::optional<std::filesystem::path> csv_path;
  std::optional<std::filesystem::path> json_path;
};

int cmd_eval(const EvalOptions& options, std::ostream& out, std::ostream& err);

struct ScalingOptions {
  std::string run_id;
  std::filesystem::path runs_dir = "runs";
  std::size_t budget = 128;
  std::vector<std::string> configs{"16x8", "32x4", "128x1"};
  std::optional<std::uint64_t> step;
  std::optional<std::filesystem::path> csv_path;
  std::optional<std::filesystem::path> json_path;
};

int cmd_scaling(const ScalingOptions& options, std::ostream& out, std::ostream& err);

struct GradcheckOptions {
  std::uint64_t seed = 7;
  std::size_t trials = 100;
  double h = 1e-5;
  double tolerance = 1e-4;
  // Zero every advantage; the reported gradient must vanish.
  bool zero_advantages = false;
};

// One randomized gradient-check problem. Even trials keep every ratio inside
// the clip band, odd trials force some tokens onto the clipped branch; beta
// alternates between 0 and 0.01 and the length normalization between modes.
// Ratios stay at least 1e-3 (in log space) away from the clip boundaries so
// finite differences never straddle a kink.
struct GradcheckCase {
  ToyPolicy policy{1, 2};
  ToyPolicy old_policy{1, 2};
  ToyPolicy ref_policy{1, 2};
  std::vector<ToySample> samples;
  GrpoConfig cfg;
  bool clip_active = false;
};

GradcheckCase make_gradcheck_case(std::uint64_t seed, std::size_t trial,
                                  bool zero_advantages = false);

int cmd_gradcheck(const GradcheckOptions& options, std::ostream& out, std::ostream& err);

struct GuardLintOptions {
  std::filesystem::path file;
  std::optional<std::filesystem::path> rules_path;
  std::string entry_class = "ModelNew";
  bool strict = false;
};

int cmd_guard_lint(const GuardLintOptions& options, std::ostream& out, std::ostream& err);

}  // namespace krl::cli
