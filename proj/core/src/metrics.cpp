// Copyright (c) 2026 The krl Authors
// SPDX-License-Identifier: Apache-2.0

#include "krl/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "krl/errors.hpp"

namespace krl {
namespace {

__extension__ using u128 = unsigned __int128;

u128 gcd128(u128 a, u128 b) {
  while (b != 0) {
    const u128 t = a % b;
    a = b;
    b = t;
  }
  return a;
}

// C(n - c, k) / C(n, k) as an exact reduced fraction, if it fits.
std::optional<std::pair<u128, u128>> exact_miss_ratio(std::uint64_t n, std::uint64_t c,
                                                      std::uint64_t k) {
  constexpr u128 kLimit = u128{1} << 100;
  u128 num = 1;
  u128 den = 1;
  for (std::uint64_t j = 0; j < k; ++j) {
    num *= (n - c - j);
    den *= (n - j);
    const u128 g = gcd128(num, den);
    num /= g;
    den /= g;
    if (num > kLimit || den > kLimit) return std::nullopt;
  }
  return std::make_pair(num, den);
}

std::string threshold_name(double p) {
  if (p == std::floor(p)) return fmt::format("fast_{:.1f}", p);
  return fmt::format("fast_{}", p);
}

void check_k(std::size_t n, std::size_t k) {
  if (n == 0) throw ContractViolation("estimator needs at least one value");
  if (k < 1 || k > n) {
    throw ContractViolation(fmt::format("estimator needs 1 <= k <= n, got k={} n={}", k, n));
  }
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void push_with_mean(Report& report, const std::string& metric, const std::string& config,
                    const std::vector<std::pair<std::string, double>>& per_task) {
  double sum = 0.0;
  for (const auto& [task, value] : per_task) {
    report.rows.push_back({metric, config, task, value});
    sum += value;
  }
  report.rows.push_back({metric, config, kAllTasks,
                         per_task.empty() ? 0.0 : sum / static_cast<double>(per_task.size())});
}

}  // namespace

TrajectoryMetric trajectory_metric(const Trajectory& traj, std::span<const double> thresholds,
                                   std::size_t max_turns) {
  TrajectoryMetric m;
  const std::size_t limit =
      max_turns == 0 ? traj.turns.size() : std::min(max_turns, traj.turns.size());
  for (std::size_t t = 0; t < limit; ++t) {
    const auto s = traj.turns[t].eval.speedup();
    if (!s) continue;
    m.performance = m.correct ? std::max(m.performance, *s) : *s;
    m.correct = true;
  }
  for (double p : thresholds) m.fast_p[p] = m.correct && m.performance >= p;
  return m;
}

double pass_at_k(std::uint64_t n, std::uint64_t c, std::uint64_t k) {
  if (c > n) throw ContractViolation(fmt::format("pass_at_k needs c <= n, got c={} n={}", c, n));
  if (k < 1 || k > n) {
    throw ContractViolation(fmt::format("pass_at_k needs 1 <= k <= n, got k={} n={}", k, n));
  }
  if (n - c < k) return 1.0;
  if (c == 0) return 0.0;
  if (const auto exact = exact_miss_ratio(n, c, k)) {
    const auto [num, den] = *exact;
    // One rounding: (den - num) / den.
    return static_cast<double>(den - num) / static_cast<double>(den);
  }
  // Product of ratios; whichever form has fewer factors.
  double miss = 1.0;
  if (c < k) {
    for (std::uint64_t i = n - c + 1; i <= n; ++i) {
      miss *= 1.0 - static_cast<double>(k) / static_cast<double>(i);
    }
  } else {
    for (std::uint64_t j = 0; j < k; ++j) {
      miss *= static_cast<double>(n - c - j) / static_cast<double>(n - j);
    }
  }
  return std::clamp(1.0 - miss, 0.0, 1.0);
}

double best_at_k(std::span<const double> values, std::size_t k) {
  const std::size_t n = values.size();
  check_k(n, k);
  std::vector<double> sorted(values.begin(), values.end());
  std::stable_sort(sorted.begin(), sorted.end());
  // Weight of the j-th smallest value (1-based): C(j-1, k-1) / C(n, k).
  // w_n = k / n and w_{j-1} = w_j * (j - k) / (j - 1).
  double weight = static_cast<double>(k) / static_cast<double>(n);
  double total = 0.0;
  for (std::size_t j = n; j >= k; --j) {
    total += sorted[j - 1] * weight;
    if (j == 1) break;
    weight *= static_cast<double>(j - k) / static_cast<double>(j - 1);
  }
  return total;
}

double avg_at_k(std::span<const double> values, std::size_t k) {
  check_k(values.size(), k);
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

void Report::write_text(std::ostream& out) const {
  std::vector<std::string> metrics;
  std::vector<std::string> configs;
  for (const auto& row : rows) {
    if (row.task != kAllTasks) continue;
    if (std::find(metrics.begin(), metrics.end(), row.metric) == metrics.end()) {
      metrics.push_back(row.metric);
    }
    if (std::find(configs.begin(), configs.end(), row.config) == configs.end()) {
      configs.push_back(row.config);
    }
  }
  std::size_t metric_width = 6;
  for (const auto& m : metrics) metric_width = std::max(metric_width, m.size());
  std::size_t col_width = 8;
  for (const auto& c : configs) col_width = std::max(col_width, c.size());

  if (!title.empty()) out << title << '\n';
  out << fmt::format("{:<{}}", "metric", metric_width);
  for (const auto& c : configs) out << fmt::format(" | {:>{}}", c, col_width);
  out << '\n' << std::string(metric_width, '-');
  for (std::size_t i = 0; i < configs.size(); ++i) out << "-+-" << std::string(col_width, '-');
  out << '\n';
  for (const auto& m : metrics) {
    out << fmt::format("{:<{}}", m, metric_width);
    for (const auto& c : configs) {
      const auto it = std::find_if(rows.begin(), rows.end(), [&](const ReportRow& r) {
        return r.metric == m && r.config == c && r.task == kAllTasks;
      });
      if (it == rows.end()) {
        out << fmt::format(" | {:>{}}", "-", col_width);
      } else {
        out << fmt::format(" | {:>{}.4f}", it->value, col_width);
      }
    }
    out << '\n';
  }
}

void Report::write_csv(std::ostream& out) const {
  out << "metric,config,task,value\n";
  for (const auto& row : rows) {
    out << csv_field(row.metric) << ',' << csv_field(row.config) << ',' << csv_field(row.task)
        << ',' << fmt::format("{}", row.value) << '\n';
  }
}

nlohmann::json Report::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& row : rows) {
    arr.push_back({{"metric", row.metric},
                   {"config", row.config},
                   {"task", row.task},
                   {"value", row.value}});
  }
  return {{"title", title}, {"rows", arr}};
}

Report eval_table(const TaskTrajectories& data, const EvalTableOptions& options) {
  if (data.empty()) throw ShortfallError("", "no trajectories stored");
  if (options.k < 1) throw ContractViolation("k must be >= 1");
  for (const auto& [task, trajs] : data) {
    if (trajs.size() < options.k) {
      throw ShortfallError(task, fmt::format("task {} has {} trajectories, {} needed", task,
                                             trajs.size(), options.k));
    }
    for (const auto& t : trajs) {
      if (t.turns.size() < options.turns) {
        throw ShortfallError(task, fmt::format("task {} trajectory {} has {} turns, {} needed",
                                               task, t.trajectory_index, t.turns.size(),
                                               options.turns));
      }
    }
  }

  std::vector<std::string> names{"correctness", "performance"};
  for (double p : options.thresholds) names.push_back(threshold_name(p));
  // names x (best, avg) x per-task values
  std::vector<std::vector<std::pair<std::string, double>>> best(names.size());
  std::vector<std::vector<std::pair<std::string, double>>> avg(names.size());
  for (const auto& [task, trajs] : data) {
    std::vector<std::vector<double>> values(names.size());
    for (const auto& t : trajs) {
      const auto m = trajectory_metric(t, options.thresholds, options.turns);
      values[0].push_back(m.correct ? 1.0 : 0.0);
      values[1].push_back(m.performance);
      for (std::size_t i = 0; i < options.thresholds.size(); ++i) {
        values[2 + i].push_back(m.fast_p.at(options.thresholds[i]) ? 1.0 : 0.0);
      }
    }
    for (std::size_t i = 0; i < names.size(); ++i) {
      best[i].emplace_back(task, best_at_k(values[i], options.k));
      avg[i].emplace_back(task, avg_at_k(values[i], options.k));
    }
  }

  Report report;
  report.title = fmt::format("{} trajectories x {} turns", options.k, options.turns);
  const std::string best_col = fmt::format("best@{}", options.k);
  const std::string avg_col = fmt::format("avg@{}", options.k);
  for (std::size_t i = 0; i < names.size(); ++i) {
    push_with_mean(report, names[i], best_col, best[i]);
    push_with_mean(report, names[i], avg_col, avg[i]);
  }
  return report;
}

std::string ScalingConfig::label() const { return fmt::format("{}x{}", num_traj, num_turns); }

ScalingConfig parse_scaling_config(std::string_view text) {
  const auto x = text.find('x');
  ScalingConfig cfg;
  if (x == std::string_view::npos) {
    throw ContractViolation(fmt::format("scaling config '{}' is not <traj>x<turns>", text));
  }
  const auto parse = [&](std::string_view part, std::size_t& out) {
    const auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), out);
    if (ec != std::errc{} || ptr != part.data() + part.size() || out == 0) {
      throw ContractViolation(fmt::format("scaling config '{}' is not <traj>x<turns>", text));
    }
  };
  parse(text.substr(0, x), cfg.num_traj);
  parse(text.substr(x + 1), cfg.num_turns);
  return cfg;
}

Report scaling_report(const TaskTrajectories& data, std::span<const ScalingConfig> configs,
                      std::size_t budget) {
  if (configs.empty()) throw ContractViolation("scaling report needs at least one config");
  for (const auto& cfg : configs) {
    if (cfg.num_traj == 0 || cfg.num_turns == 0 || cfg.num_traj * cfg.num_turns != budget) {
      throw ContractViolation(
          fmt::format("config {} does not spend the budget of {}", cfg.label(), budget));
    }
  }
  if (data.empty()) throw ShortfallError("", "no trajectories stored");

  Report report;
  report.title = fmt::format("fixed budget of {} generations", budget);
  std::vector<std::vector<std::pair<std::string, double>>> perf(configs.size());
  std::vector<std::vector<std::pair<std::string, double>>> corr(configs.size());
  for (std::size_t c = 0; c < configs.size(); ++c) {
    const auto& cfg = configs[c];
    for (const auto& [task, trajs] : data) {
      if (trajs.size() < cfg.num_traj) {
        throw ShortfallError(task, fmt::format("task {} has {} trajectories, config {} needs {}",
                                               task, trajs.size(), cfg.label(), cfg.num_traj));
      }
      double best = 0.0;
      bool correct = false;
      for (std::size_t i = 0; i < cfg.num_traj; ++i) {
        if (trajs[i].turns.size() < cfg.num_turns) {
          throw ShortfallError(task, fmt::format("task {} trajectory {} has {} turns, config {} "
                                                 "needs {}",
                                                 task, trajs[i].trajectory_index,
                                                 trajs[i].turns.size(), cfg.label(),
                                                 cfg.num_turns));
        }
        const auto m = trajectory_metric(trajs[i], {}, cfg.num_turns);
        correct = correct || m.correct;
        best = std::max(best, m.performance);
      }
      perf[c].emplace_back(task, best);
      corr[c].emplace_back(task, correct ? 1.0 : 0.0);
    }
  }
  for (std::size_t c = 0; c < configs.size(); ++c) {
    push_with_mean(report, "performance", configs[c].label(), perf[c]);
  }
  for (std::size_t c = 0; c < configs.size(); ++c) {
    push_with_mean(report, "correctness", configs[c].label(), corr[c]);
  }
  return report;
}

double report_value(const Report& report, std::string_view metric, std::string_view config,
                    std::string_view task) {
  for (const auto& row : report.rows) {
    if (row.metric == metric && row.config == config && row.task == task) return row.value;
  }
  throw NotFoundError(fmt::format("report has no {} / {} / {} row", metric, config, task));
}

}  // namespace krl
