// Copyright (c) 2026 The krl Authors
// SPDX-License-Identifier: Apache-2.0

#include "krl/rollout.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <map>
#include <mutex>
#include <thread>

#include <fmt/format.h>

#include "krl/errors.hpp"
#include "krl/seed.hpp"

namespace krl {
namespace {

// Thrown out of run_trajectory so the partial trajectory survives.
struct TrajectoryAborted {
  Trajectory partial;
  std::string message;
};

Trajectory rollout_one(const RolloutTask& task, int trajectory_index, const Policy& policy,
                       Executor& executor, const RolloutConfig& cfg) {
  Trajectory traj;
  traj.task_id = task.task_id;
  traj.trajectory_index = trajectory_index;
  traj.policy_id = policy.id();
  traj.seed = trajectory_seed(cfg.run_seed, cfg.step, task.task_id,
                              static_cast<std::uint64_t>(trajectory_index));
  const double fallback_baseline = executor.baseline_ms(task.task_id).value_or(1.0);

  for (int turn = 1; turn <= cfg.n; ++turn) {
    const Prompt prompt = build_context(task.task_text, traj.turns, cfg.context.budget,
                                        cfg.context.first_turn_example, cfg.context.templates);
    const std::uint64_t seed = turn_seed(traj.seed, static_cast<std::uint64_t>(turn));

    TurnRecord record;
    record.turn_index = turn;
    Generation generation;
    std::optional<PolicyResponse> response;
    try {
      response = policy.generate(prompt.text, seed, cfg.temperature, cfg.max_response_tokens);
    } catch (const PolicyError& e) {
      record.eval = EvalResult::failure(EvalStatus::kParseError, fallback_baseline, e.what());
      if (!e.raw_text.empty()) generation.cot_full = e.raw_text;
      generation.response_tokens = e.response_tokens;
      generation.truncated = e.truncated;
    }

    if (response) {
      record.kernel_source = response->kernel_source;
      record.cot_summary = response->cot_summary;
      generation.cot_full = response->cot_full;
      generation.response_tokens = response->response_tokens;
      generation.truncated = response->truncated;

      const GuardVerdict verdict = check_candidate(record.kernel_source, cfg.rules, cfg.guard);
      if (!verdict.accepted) {
        record.eval =
            EvalResult::failure(EvalStatus::kGuardRejected, fallback_baseline, verdict.summary());
      } else {
        try {
          record.eval = executor.evaluate(task.task_id, record.kernel_source, seed);
        } catch (const ExecutorUnavailable& e) {
          throw TrajectoryAborted{
              std::move(traj),
              fmt::format("executor unavailable at task {} trajectory {} turn {}: {}",
                          task.task_id, trajectory_index, turn, e.what())};
        }
        validate(record.eval);
      }
    }
    traj.turns.push_back(std::move(record));
    traj.generations.push_back(std::move(generation));
  }
  return traj;
}

std::size_t effective_parallelism(const RolloutConfig& cfg, const Policy& policy,
                                  const Executor& executor, std::size_t units) {
  std::size_t p = cfg.parallelism;
  if (p == 0) p = std::max(1u, std::thread::hardware_concurrency());
  if (policy.max_parallelism() > 0) p = std::min(p, policy.max_parallelism());
  if (executor.max_parallelism() > 0) p = std::min(p, executor.max_parallelism());
  return std::clamp<std::size_t>(p, 1, std::max<std::size_t>(units, 1));
}

}  // namespace

void validate(const RolloutConfig& cfg) {
  if (cfg.m < 1) throw ContractViolation(fmt::format("m must be >= 1, got {}", cfg.m));
  if (cfg.n < 1) throw ContractViolation(fmt::format("n must be >= 1, got {}", cfg.n));
  validate(cfg.aggregation);
  validate(cfg.weights);
  if (!(cfg.temperature > 0.0)) throw ContractViolation("temperature must be positive");
  if (cfg.max_response_tokens < 1) throw ContractViolation("max_response_tokens must be positive");
  if (!cfg.context.budget.counter) throw ContractViolation("prompt budget needs a token counter");
}

Trajectory run_trajectory(const RolloutTask& task, int trajectory_index, const Policy& policy,
                          Executor& executor, const RolloutConfig& cfg) {
  validate(cfg);
  try {
    return rollout_one(task, trajectory_index, policy, executor, cfg);
  } catch (TrajectoryAborted& aborted) {
    std::vector<Trajectory> partial;
    partial.push_back(std::move(aborted.partial));
    throw RolloutAborted(aborted.message, std::move(partial));
  }
}

std::vector<TrainingSample> split_trajectory(const Trajectory& traj, std::string_view task_text,
                                             const ContextSpec& context,
                                             const AggregationSpec& aggregation,
                                             const ScoreWeights& weights) {
  if (traj.turns.empty()) return {};
  std::vector<double> scores;
  scores.reserve(traj.turns.size());
  for (const auto& turn : traj.turns) scores.push_back(score_kernel(turn.eval, weights));
  const auto rewards = aggregate(scores, aggregation);

  std::vector<TrainingSample> samples;
  samples.reserve(traj.turns.size());
  std::vector<TurnRecord> history;
  for (std::size_t t = 0; t < traj.turns.size(); ++t) {
    const auto& turn = traj.turns[t];
    TrainingSample s;
    s.task_id = traj.task_id;
    s.trajectory_index = traj.trajectory_index;
    s.turn_index = turn.turn_index;
    s.context = build_context(task_text, history, context.budget, context.first_turn_example,
                              context.templates);
    s.kernel_source = turn.kernel_source;
    s.cot_summary = turn.cot_summary;
    if (t < traj.generations.size()) s.generation = traj.generations[t];
    s.eval = turn.eval;
    s.score = scores[t];
    s.aggregated_reward = rewards[t];
    samples.push_back(std::move(s));
    history.push_back(turn);
  }
  return samples;
}

StepResult run_training_step(std::span<const RolloutTask> tasks, const Policy& policy,
                             Executor& executor, const RolloutConfig& cfg) {
  validate(cfg);
  if (tasks.empty()) throw ContractViolation("run_training_step needs at least one task");
  {
    std::vector<std::string> ids;
    for (const auto& t : tasks) ids.push_back(t.task_id);
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
      throw ContractViolation("task ids must be unique within a step");
    }
  }

  const std::size_t units = tasks.size() * static_cast<std::size_t>(cfg.m);
  std::vector<std::optional<Trajectory>> results(units);
  std::vector<std::optional<TrajectoryAborted>> failures(units);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};

  auto worker = [&] {
    for (;;) {
      if (stop.load()) return;
      const std::size_t unit = next.fetch_add(1);
      if (unit >= units) return;
      const auto& task = tasks[unit / static_cast<std::size_t>(cfg.m)];
      const int index = static_cast<int>(unit % static_cast<std::size_t>(cfg.m));
      try {
        results[unit] = rollout_one(task, index, policy, executor, cfg);
      } catch (TrajectoryAborted& aborted) {
        failures[unit] = std::move(aborted);
        stop.store(true);
      }
    }
  };

  const std::size_t threads = effective_parallelism(cfg, policy, executor, units);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
  }

  std::vector<Trajectory> trajectories;
  for (auto& r : results) {
    if (r) trajectories.push_back(std::move(*r));
  }
  for (auto& f : failures) {
    if (!f) continue;
    std::vector<Trajectory> partial = std::move(trajectories);
    std::string message = f->message;
    partial.push_back(std::move(f->partial));
    std::sort(partial.begin(), partial.end(), [](const Trajectory& a, const Trajectory& b) {
      return std::tie(a.task_id, a.trajectory_index) < std::tie(b.task_id, b.trajectory_index);
    });
    std::size_t complete = 0;
    for (const auto& t : partial) complete += t.turns.size() == static_cast<std::size_t>(cfg.n);
    throw RolloutAborted(fmt::format("{} ({} of {} trajectories complete)", message, complete,
                                     units),
                         std::move(partial));
  }

  std::sort(trajectories.begin(), trajectories.end(), [](const Trajectory& a, const Trajectory& b) {
    return std::tie(a.task_id, a.trajectory_index) < std::tie(b.task_id, b.trajectory_index);
  });

  std::map<std::string, const RolloutTask*> by_id;
  for (const auto& t : tasks) by_id[t.task_id] = &t;

  StepResult result;
  std::size_t begin = 0;
  while (begin < trajectories.size()) {
    const std::string& task_id = trajectories[begin].task_id;
    std::size_t end = begin;
    std::vector<TrainingSample> group;
    while (end < trajectories.size() && trajectories[end].task_id == task_id) {
      auto samples = split_trajectory(trajectories[end], by_id.at(task_id)->task_text, cfg.context,
                                      cfg.aggregation, cfg.weights);
      std::move(samples.begin(), samples.end(), std::back_inserter(group));
      ++end;
    }
    if (group.size() >= 2) {
      std::vector<double> rewards;
      rewards.reserve(group.size());
      for (const auto& s : group) rewards.push_back(s.aggregated_reward);
      const auto adv = normalize_group(rewards, cfg.normalize);
      for (std::size_t i = 0; i < group.size(); ++i) group[i].advantage = adv[i];
    }
    std::move(group.begin(), group.end(), std::back_inserter(result.samples));
    begin = end;
  }
  result.trajectories = std::move(trajectories);

  StepStats& stats = result.stats;
  stats.samples = result.samples.size();
  if (!result.samples.empty()) {
    double reward = 0.0;
    std::size_t correct = 0;
    std::vector<std::string> cots;
    cots.reserve(result.samples.size());
    for (const auto& s : result.samples) {
      reward += s.score;
      correct += s.eval.is_correct();
      cots.push_back(s.generation.cot_full.value_or(""));
    }
    const auto n = static_cast<double>(result.samples.size());
    stats.mean_reward = reward / n;
    stats.correct_rate = static_cast<double>(correct) / n;
    stats.not_okay_ratio = not_okay_ratio(cots, cfg.okay_prefix);
    stats.clipping_ratio = clipping_ratio(result.samples);
  }
  return result;
}

double not_okay_ratio(std::span<const std::string> cots, std::string_view prefix) {
  if (cots.empty()) return 0.0;
  std::size_t bad = 0;
  for (const auto& cot : cots) {
    if (std::string_view(cot).substr(0, prefix.size()) != prefix) ++bad;
  }
  return static_cast<double>(bad) / static_cast<double>(cots.size());
}

double clipping_ratio(std::span<const TrainingSample> samples) {
  if (samples.empty()) return 0.0;
  std::size_t truncated = 0;
  for (const auto& s : samples) truncated += s.generation.truncated;
  return static_cast<double>(truncated) / static_cast<double>(samples.size());
}

}  // namespace krl
