// Copyright (c) 2026 The krl Authors
// SPDX-License-Identifier: Apache-2.0
//
// One multi-turn training step: for every task, m trajectories of n turns
// (context -> generate -> guard -> evaluate -> score), then per-turn samples
// with discounted suffix rewards and advantages normalized over the task's
// m*n samples.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "krl/context.hpp"
#include "krl/credit.hpp"
#include "krl/guardrails.hpp"
#include "krl/scoring.hpp"
#include "krl/trajectory.hpp"

namespace krl {

struct PolicyResponse {
  std::string cot_full;
  std::string kernel_source;
  std::string cot_summary;
  int response_tokens = 0;
  bool truncated = false;
};

// Must be deterministic for a fixed (prompt, seed). Implementations throw
// PolicyError for an unusable response.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string id() const = 0;
  virtual PolicyResponse generate(const std::string& prompt, std::uint64_t seed,
                                  double temperature,
                                  int max_response_tokens) const = 0;
  // 0 means any number of concurrent calls is safe.
  virtual std::size_t max_parallelism() const { return 0; }
};

// Throws ExecutorUnavailable when the backend cannot be reached.
class Executor {
 public:
  virtual ~Executor() = default;
  virtual EvalResult evaluate(const std::string& task_id,
                              const std::string& kernel_source,
                              std::uint64_t seed) = 0;
  virtual std::size_t max_parallelism() const { return 0; }
  // Reference time used for results that never reach the executor (policy
  // failures, guard rejections).
  virtual std::optional<double> baseline_ms(const std::string& /*task_id*/) const {
    return std::nullopt;
  }
};

struct RolloutTask {
  std::string task_id;
  std::string task_text;
};

struct ContextSpec {
  PromptBudget budget;
  PromptTemplates templates = PromptTemplates::kernelbench();
  bool first_turn_example = true;
};

struct RolloutConfig {
  int m = 16;
  int n = 4;
  AggregationSpec aggregation{AggregationMode::kSum, 0.4};
  ScoreWeights weights;
  NormalizeOptions normalize;
  ContextSpec context;
  double temperature = 0.9;
  int max_response_tokens = 16384;
  std::uint64_t run_seed = 0;
  std::uint64_t step = 0;
  RuleSet rules = default_rules();
  GuardOptions guard;
  std::string okay_prefix = "Okay, ";
  // Concurrent trajectories; 0 uses the hardware concurrency.
  std::size_t parallelism = 0;
};

void validate(const RolloutConfig& cfg);

struct TrainingSample {
  std::string task_id;
  int trajectory_index = 0;
  int turn_index = 1;
  Prompt context;
  std::string kernel_source;
  std::string cot_summary;
  Generation generation;
  EvalResult eval;
  double score = 0.0;
  double aggregated_reward = 0.0;
  double advantage = 0.0;
};

struct StepStats {
  std::size_t samples = 0;
  double mean_reward = 0.0;
  double correct_rate = 0.0;
  double not_okay_ratio = 0.0;
  double clipping_ratio = 0.0;
};

struct StepResult {
  std::vector<Trajectory> trajectories;
  std::vector<TrainingSample> samples;
  StepStats stats;
};

// Runs one step. Samples are ordered by (task_id, trajectory_index,
// turn_index) regardless of scheduling. Throws RolloutAborted when the
// executor becomes unavailable.
StepResult run_training_step(std::span<const RolloutTask> tasks,
                             const Policy& policy, Executor& executor,
                             const RolloutConfig& cfg);

// Rolls out a single trajectory; exposed for tests and the n = 1 case.
Trajectory run_trajectory(const RolloutTask& task, int trajectory_index,
                          const Policy& policy, Executor& executor,
                          const RolloutConfig& cfg);

// One sample per turn; sample t sees turns < t in its context and carries
// R_t. Advantages are left at zero.
std::vector<TrainingSample> split_trajectory(const Trajectory& traj,
                                             std::string_view task_text,
                                             const ContextSpec& context,
                                             const AggregationSpec& aggregation,
                                             const ScoreWeights& weights = {});

// Fraction of chains of thought not starting with `prefix` (byte compare).
double not_okay_ratio(std::span<const std::string> cots,
                      std::string_view prefix = "Okay, ");

// Fraction of samples whose response hit max_response_tokens.
double clipping_ratio(std::span<const TrainingSample> samples);

class RolloutAborted : public std::runtime_error {
 public:
  RolloutAborted(const std::string& what, std::vector<Trajectory> partial)
      : std::runtime_error(what), partial_(std::move(partial)) {}
  const std::vector<Trajectory>& partial() const { return partial_; }

 private:
  std::vector<Trajectory> partial_;
};

}  // namespace krl
