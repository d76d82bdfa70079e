// Copyright (c) 2026 The krl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: one JSON document, every field validated on load,
// unknown keys rejected. Errors name the offending field ("grpo.eps_low").

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "krl/credit.hpp"
#include "krl/grpo.hpp"
#include "krl/rollout.hpp"
#include "krl/scoring.hpp"
#include "krl/simenv.hpp"
#include "krl/worker_executor.hpp"

namespace krl::cli {

struct ScheduleEntry {
  std::uint64_t at_step = 0;
  int value = 0;
};

struct PolicySpec {
  enum class Kind { kScripted, kExternal } kind = Kind::kScripted;
  simenv::ScriptKind script = simenv::ScriptKind::kGreedy;
  // External only; POLICY_ENDPOINT / POLICY_TOKEN fill the blanks.
  std::string endpoint;
  std::size_t max_parallelism = 0;
};

struct ExecutorSpec {
  enum class Kind { kSimenv, kWorker } kind = Kind::kSimenv;
  double jitter = 0.0;
  WorkerExecutorOptions worker;
};

struct TaskSource {
  enum class Kind { kSimenv, kFile } kind = Kind::kSimenv;
  std::uint64_t seed = 0;
  std::size_t count = 20;
  simenv::Difficulty difficulty = simenv::Difficulty::kMixed;
  std::filesystem::path path;
};

struct RunConfig {
  std::string run_id;
  std::filesystem::path runs_dir = "runs";
  std::uint64_t seed = 0;
  int m = 16;
  int n = 4;
  AggregationSpec aggregation{AggregationMode::kSum, 0.4};
  ScoreWeights weights;
  GrpoConfig grpo;
  int max_response_tokens = 16384;
  std::vector<ScheduleEntry> max_response_tokens_schedule;
  std::size_t budget_tokens = 32768;
  bool first_turn_example = true;
  PolicySpec policy;
  ExecutorSpec executor;
  TaskSource tasks;
  std::size_t parallelism = 0;
  bool store_cot = false;

  // Normalized document with every default filled in.
  nlohmann::json snapshot;

  // Effective response cap at `step` after applying the schedule.
  int max_response_tokens_at(std::uint64_t step) const;
};

// Throws ConfigError with a field-level message.
RunConfig parse_run_config(const nlohmann::json& doc);
RunConfig load_run_config(const std::filesystem::path& path);

// Everything a rollout needs, built from a config.
struct RunSetup {
  std::vector<RolloutTask> tasks;
  std::unique_ptr<Policy> policy;
  std::unique_ptr<Executor> executor;
  ContextSpec context;
};

RunSetup build_run_setup(const RunConfig& cfg);

RolloutConfig rollout_config(const RunConfig& cfg, const ContextSpec& context,
                             std::uint64_t step);

}  // namespace krl::cli
