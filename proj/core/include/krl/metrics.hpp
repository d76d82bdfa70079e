// Copyright (c) 2026 The krl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Trajectory metrics and group estimators.
//
// A trajectory is correct if any of its turns is correct; its performance is
// the best speedup among correct turns (0 if none). best@k is the expected
// maximum over a uniformly random k-subset of the n trajectories, avg@k the
// mean.

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "krl/trajectory.hpp"

namespace krl {

struct TrajectoryMetric {
  bool correct = false;
  double performance = 0.0;
  std::map<double, bool> fast_p;
};

// Only the first `max_turns` turns are considered when max_turns > 0.
TrajectoryMetric trajectory_metric(const Trajectory& traj,
                                   std::span<const double> thresholds,
                                   std::size_t max_turns = 0);

// 1 - C(n - c, k) / C(n, k), computed as a product of ratios.
double pass_at_k(std::uint64_t n, std::uint64_t c, std::uint64_t k);

// sum_{j=k}^{n} v_(j) C(j-1, k-1) / C(n, k) over ascending order statistics.
double best_at_k(std::span<const double> values, std::size_t k);

double avg_at_k(std::span<const double> values, std::size_t k);

enum class EstimateMethod { kExactEnumeration, kClosedForm };

struct GroupEstimate {
  std::string metric_name;
  std::size_t k = 0;
  std::size_t n = 0;
  double estimate = 0.0;
  EstimateMethod method = EstimateMethod::kClosedForm;
};

// Long-format report row; this is also the CSV schema.
struct ReportRow {
  std::string metric;
  std::string config;
  std::string task;
  double value = 0.0;
};

// Row label for the per-task mean.
inline constexpr const char* kAllTasks = "ALL";

struct Report {
  std::string title;
  std::vector<ReportRow> rows;

  // Aligned table of the ALL rows: one line per metric, one column per
  // config, in first-seen order.
  void write_text(std::ostream& out) const;
  void write_csv(std::ostream& out) const;
  nlohmann::json to_json() const;
};

// task_id -> trajectories in trajectory_index order.
using TaskTrajectories = std::map<std::string, std::vector<Trajectory>>;

struct EvalTableOptions {
  std::size_t k = 16;
  std::size_t turns = 8;
  std::vector<double> thresholds{1.0, 1.5};
};

// correctness / performance / fast_p rows with best@k and avg@k columns.
// Throws ShortfallError naming the first task with fewer than k
// trajectories or a trajectory with fewer than `turns` turns.
Report eval_table(const TaskTrajectories& data, const EvalTableOptions& options);

struct ScalingConfig {
  std::size_t num_traj = 0;
  std::size_t num_turns = 0;

  std::string label() const;
};

// Parses "16x8".
ScalingConfig parse_scaling_config(std::string_view text);

// Per config: mean over tasks of the best performance and the correctness
// over the first num_traj trajectories truncated to num_turns turns. Throws
// ContractViolation when num_traj * num_turns != budget and ShortfallError
// when the data is too small.
Report scaling_report(const TaskTrajectories& data,
                      std::span<const ScalingConfig> configs,
                      std::size_t budget);

// Mean over tasks of a scaling report's "performance" row for one config.
double report_value(const Report& report, std::string_view metric,
                    std::string_view config,
                    std::string_view task = kAllTasks);

}  // namespace krl
