// Copyright (c) 2026 The krl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Append-only run storage:
//
//   <root>/<run_id>/config.json   run record (immutable)
//   <root>/<run_id>/turns.jsonl   one TurnRow per line
//   <root>/<run_id>/stats.jsonl   one StepStats per line
//   <root>/<run_id>/cot/step_<k>.jsonl   optional full chains of thought
//
// Each record is written with a single write() of a complete line; readers
// ignore a trailing partial line.

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "krl/metrics.hpp"
#include "krl/rollout.hpp"
#include "krl/scoring.hpp"

namespace krl {

struct RunRecord {
  std::string run_id;
  nlohmann::json config;
  std::string created_at;  // ISO-8601 UTC
  std::uint64_t seed = 0;
};

struct TurnRow {
  std::string run_id;
  std::uint64_t step = 0;
  std::string task_id;
  int trajectory_index = 0;
  int turn_index = 1;
  std::string kernel_source;
  std::string cot_summary;
  EvalResult eval;
  double score = 0.0;
  double aggregated_reward = 0.0;
  double advantage = 0.0;
  int response_tokens = 0;
  bool truncated = false;

  using Key = std::tuple<std::uint64_t, std::string, int, int>;
  Key key() const { return {step, task_id, trajectory_index, turn_index}; }

  bool operator==(const TurnRow&) const = default;
};

nlohmann::json to_json(const TurnRow& row);
TurnRow turn_row_from_json(const nlohmann::json& doc);
// Compact single-line JSON with a fixed key order.
std::string serialize_row(const TurnRow& row);

TurnRow make_turn_row(const std::string& run_id, std::uint64_t step,
                      const TrainingSample& sample);

nlohmann::json to_json(const StepStats& stats, std::uint64_t step);

struct ScanFilter {
  std::optional<std::uint64_t> step;
  std::optional<std::string> task_id;
};

class RunStore {
 public:
  // Creates <root>/<run_id>. Throws ConflictError if the run exists.
  static RunStore create(const std::filesystem::path& root, RunRecord record);
  // Throws NotFoundError if the run does not exist.
  static RunStore open(const std::filesystem::path& root,
                       const std::string& run_id);

  RunStore(RunStore&&) noexcept;
  RunStore& operator=(RunStore&&) noexcept;
  ~RunStore();

  const RunRecord& record() const { return record_; }
  const std::filesystem::path& dir() const { return dir_; }

  // Throws ConflictError on a duplicate (step, task, trajectory, turn) key.
  void append_turn(const TurnRow& row);
  void append_stats(const StepStats& stats, std::uint64_t step);
  void append_cot(std::uint64_t step, const TrainingSample& sample);

  // Rows in (step, task_id, trajectory_index, turn_index) order.
  std::vector<TurnRow> scan(const ScanFilter& filter = {}) const;
  std::vector<nlohmann::json> stats() const;
  std::optional<std::uint64_t> last_step() const;

 private:
  RunStore(std::filesystem::path dir, RunRecord record);
  void load_keys();

  std::filesystem::path dir_;
  RunRecord record_;
  int turns_fd_ = -1;
  std::set<TurnRow::Key> keys_;
  std::unique_ptr<std::mutex> mutex_ = std::make_unique<std::mutex>();
};

// Reads every complete JSON line of a file.
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);

// Groups rows into trajectories (turn order) per task.
TaskTrajectories group_trajectories(const std::vector<TurnRow>& rows);

}  // namespace krl
