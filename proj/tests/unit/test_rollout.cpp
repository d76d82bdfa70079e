// Copyright (c) 2026 The krl Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <map>
#include <numeric>

#include "krl/errors.hpp"
#include "krl/rollout.hpp"
#include "krl/simenv.hpp"

namespace krl {
namespace {

using simenv::Difficulty;
using simenv::ScriptKind;

RolloutConfig sim_config(int m, int n, std::size_t parallelism = 0) {
  RolloutConfig cfg;
  cfg.m = m;
  cfg.n = n;
  cfg.context.templates = simenv::prompt_templates();
  cfg.rules = default_rules({""});
  cfg.parallelism = parallelism;
  cfg.run_seed = 42;
  return cfg;
}

struct Sim {
  std::vector<simenv::SynthTask> synth;
  std::vector<RolloutTask> tasks;
  simenv::SimExecutor exec;
  explicit Sim(std::size_t count, std::uint64_t seed = 1)
      : synth(simenv::gen_tasks(seed, count, Difficulty::kMixed)),
        tasks(simenv::rollout_tasks(synth)),
        exec(synth) {}
};

TEST(Rollout, SampleCountAndZeroMeanAdvantages) {
  Sim sim(5);
  const auto policy = simenv::scripted_policy(ScriptKind::kExplorer, sim.synth);
  const auto r = run_training_step(sim.tasks, *policy, sim.exec, sim_config(2, 3));
  ASSERT_EQ(r.samples.size(), 5u * 2 * 3);
  std::map<std::string, std::vector<double>> by_task;
  for (const auto& s : r.samples) by_task[s.task_id].push_back(s.advantage);
  for (const auto& [task, adv] : by_task) {
    EXPECT_EQ(adv.size(), 6u);
    EXPECT_LT(std::abs(std::accumulate(adv.begin(), adv.end(), 0.0) / adv.size()), 1e-9) << task;
  }
}

TEST(Rollout, SortedOrder) {
  Sim sim(4);
  const auto policy = simenv::scripted_policy(ScriptKind::kExplorer, sim.synth);
  const auto r = run_training_step(sim.tasks, *policy, sim.exec, sim_config(3, 2));
  for (std::size_t i = 1; i < r.samples.size(); ++i) {
    const auto& a = r.samples[i - 1];
    const auto& b = r.samples[i];
    EXPECT_LT(std::tie(a.task_id, a.trajectory_index, a.turn_index),
              std::tie(b.task_id, b.trajectory_index, b.turn_index));
  }
}

TEST(Rollout, SingleTurnSingleTrajectory) {
  Sim sim(3);
  const auto policy = simenv::scripted_policy(ScriptKind::kGreedy, sim.synth);
  const auto r = run_training_step(sim.tasks, *policy, sim.exec, sim_config(1, 1));
  ASSERT_EQ(r.samples.size(), 3u);
  for (const auto& s : r.samples) {
    EXPECT_EQ(s.advantage, 0.0);
    EXPECT_EQ(s.aggregated_reward, s.score);
  }
}

TEST(Rollout, TrainingConfigurationRuns) {
  Sim sim(2);
  const auto policy = simenv::scripted_policy(ScriptKind::kExplorer, sim.synth);
  const auto r = run_training_step(sim.tasks, *policy, sim.exec, sim_config(16, 4));
  EXPECT_EQ(r.samples.size(), 2u * 16 * 4);
  EXPECT_EQ(r.trajectories.size(), 2u * 16);
}

bool same_samples(const std::vector<TrainingSample>& a, const std::vector<TrainingSample>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].context.text != b[i].context.text || a[i].kernel_source != b[i].kernel_source ||
        a[i].eval != b[i].eval || a[i].advantage != b[i].advantage ||
        a[i].aggregated_reward != b[i].aggregated_reward ||
        a[i].generation.cot_full != b[i].generation.cot_full) {
      return false;
    }
  }
  return true;
}

TEST(Rollout, DeterministicAcrossParallelism) {
  Sim sim(6);
  const auto policy = simenv::scripted_policy(ScriptKind::kExplorer, sim.synth);
  const auto serial = run_training_step(sim.tasks, *policy, sim.exec, sim_config(4, 3, 1));
  const auto wide = run_training_step(sim.tasks, *policy, sim.exec, sim_config(4, 3, 8));
  EXPECT_TRUE(same_samples(serial.samples, wide.samples));
}

TEST(Rollout, StepChangesSeeds) {
  Sim sim(3);
  const auto policy = simenv::scripted_policy(ScriptKind::kExplorer, sim.synth);
  auto cfg = sim_config(4, 2);
  const auto a = run_training_step(sim.tasks, *policy, sim.exec, cfg);
  cfg.step = 1;
  const auto b = run_training_step(sim.tasks, *policy, sim.exec, cfg);
  EXPECT_NE(a.trajectories[0].seed, b.trajectories[0].seed);
}

TEST(Rollout, GuardRejectionScoresZeroAndFeedsBack) {
  Sim sim(2);
  const auto policy = simenv::scripted_policy(ScriptKind::kHacker, sim.synth);
  const auto r = run_training_step(sim.tasks, *policy, sim.exec, sim_config(1, 2));
  for (const auto& s : r.samples) {
    EXPECT_EQ(s.eval.status, EvalStatus::kGuardRejected);
    EXPECT_EQ(s.score, 0.0);
    if (s.turn_index == 2) {
      EXPECT_NE(s.context.text.find("Your previous answer was incorrect. Here is the error message: no_"),
                std::string::npos);
    }
  }
  EXPECT_DOUBLE_EQ(r.stats.not_okay_ratio, 1.0);
}

// Policy scripted per turn for error-path tests.
class FlakyPolicy final : public Policy {
 public:
  std::string id() const override { return "flaky"; }
  PolicyResponse generate(const std::string& prompt, std::uint64_t, double, int max_tokens) const override {
    const bool first = prompt.find("previous attempts") == std::string::npos;
    if (first) {
      PolicyError e("no fenced code block in response");
      e.raw_text = "Okay, rambling";
      e.response_tokens = max_tokens;
      e.truncated = true;
      throw e;
    }
    return {"Okay, so", "opt: " + required_, "fixed it", 10, false};
  }
  std::string required_;
};

TEST(Rollout, PolicyErrorBecomesParseErrorTurn) {
  Sim sim(1);
  FlakyPolicy policy;
  policy.required_ = sim.synth[0].required_opt;
  const auto r = run_training_step(sim.tasks, policy, sim.exec, sim_config(2, 2));
  ASSERT_EQ(r.samples.size(), 4u);
  EXPECT_EQ(r.samples[0].eval.status, EvalStatus::kParseError);
  EXPECT_EQ(r.samples[0].score, 0.0);
  EXPECT_EQ(r.samples[0].eval.baseline_ms, sim.synth[0].baseline_ms);
  EXPECT_TRUE(r.samples[0].generation.truncated);
  EXPECT_NE(r.samples[1].context.text.find("failed to be parsed"), std::string::npos);
  EXPECT_EQ(r.samples[1].eval.status, EvalStatus::kCorrect);
  EXPECT_DOUBLE_EQ(r.stats.clipping_ratio, 0.5);
}

class DownExecutor final : public Executor {
 public:
  EvalResult evaluate(const std::string&, const std::string&, std::uint64_t) override {
    if (++calls_ > 1) throw ExecutorUnavailable("connection refused");
    return EvalResult::correct(1.0, 1.0);
  }
  std::atomic<int> calls_{0};
};

TEST(Rollout, ExecutorOutageAborts) {
  Sim sim(1);
  const auto policy = simenv::scripted_policy(ScriptKind::kStagnant, sim.synth);
  DownExecutor exec;
  try {
    run_training_step(sim.tasks, *policy, exec, sim_config(2, 3, 1));
    FAIL() << "expected RolloutAborted";
  } catch (const RolloutAborted& e) {
    EXPECT_NE(std::string(e.what()).find("connection refused"), std::string::npos);
    EXPECT_LE(e.partial().size(), 2u);
  }
}

TEST(Rollout, ConfigValidation) {
  auto cfg = sim_config(0, 1);
  EXPECT_THROW(validate(cfg), ContractViolation);
  cfg = sim_config(1, 0);
  EXPECT_THROW(validate(cfg), ContractViolation);
  cfg = sim_config(1, 1);
  cfg.aggregation.gamma = 1.3;
  EXPECT_THROW(validate(cfg), ContractViolation);
  Sim sim(1);
  const auto policy = simenv::scripted_policy(ScriptKind::kGreedy, sim.synth);
  EXPECT_THROW(run_training_step({}, *policy, sim.exec, sim_config(1, 1)), ContractViolation);
}

Trajectory handmade(const std::vector<EvalResult>& evals) {
  Trajectory t;
  t.task_id = "t";
  for (std::size_t i = 0; i < evals.size(); ++i) {
    t.turns.push_back({"opt: k" + std::to_string(i + 1), "summary " + std::to_string(i + 1), evals[i],
                       static_cast<int>(i + 1)});
    t.generations.push_back({std::string("Okay, "), 5, false});
  }
  return t;
}

TEST(SplitTrajectory, RewardsAndContexts) {
  // Scores 0, 1.3, 0.5 with the default weights.
  const auto traj = handmade({EvalResult::failure(EvalStatus::kIncorrect, 1.0, "bad"),
                              EvalResult::correct(1.0, 1.0), EvalResult::correct(1.0, 5.0)});
  ContextSpec ctx;
  ctx.templates = simenv::prompt_templates();
  const auto samples = split_trajectory(traj, "Synthetic task t\n", ctx, {AggregationMode::kSum, 0.4});
  ASSERT_EQ(samples.size(), 3u);
  EXPECT_NEAR(samples[0].aggregated_reward, 0.6, 1e-12);
  EXPECT_NEAR(samples[1].aggregated_reward, 1.5, 1e-12);
  EXPECT_NEAR(samples[2].aggregated_reward, 0.5, 1e-12);
  EXPECT_TRUE(samples[0].context.included_turns.empty());
  EXPECT_EQ(samples[2].context.included_turns, (std::vector<int>{1, 2}));
  const auto& text = samples[2].context.text;
  EXPECT_NE(text.find("opt: k1\n\nsummary 1\n\nYour previous answer was incorrect."), std::string::npos);
  EXPECT_NE(text.find("opt: k2\n\nsummary 2\n\nYour previous answer was correct"), std::string::npos);
  EXPECT_EQ(text.find("opt: k3"), std::string::npos);
}

TEST(SplitTrajectory, SingleTurn) {
  const auto traj = handmade({EvalResult::correct(2.0, 1.0)});
  const auto samples = split_trajectory(traj, "x\n", ContextSpec{}, {});
  ASSERT_EQ(samples.size(), 1u);
  EXPECT_DOUBLE_EQ(samples[0].aggregated_reward, samples[0].score);
}

TEST(Monitors, NotOkayRatio) {
  const std::vector<std::string> all{"Okay, a", "Okay, b"};
  EXPECT_EQ(not_okay_ratio(all), 0.0);
  const std::vector<std::string> half{"Okay, a", "Okay Amigos, so I need", "Okay, b", "Okay Amigos, x"};
  EXPECT_EQ(not_okay_ratio(half), 0.5);
  EXPECT_EQ(not_okay_ratio(std::vector<std::string>{}), 0.0);
  const std::vector<std::string> custom{"Hmm", "Well"};
  EXPECT_EQ(not_okay_ratio(custom, "Hmm"), 0.5);
}

TEST(Monitors, ClippingRatio) {
  std::vector<TrainingSample> s(8);
  EXPECT_EQ(clipping_ratio(s), 0.0);
  s[3].generation.truncated = true;
  EXPECT_EQ(clipping_ratio(s), 0.125);
  for (auto& x : s) x.generation.truncated = true;
  EXPECT_EQ(clipping_ratio(s), 1.0);
  EXPECT_EQ(clipping_ratio(std::vector<TrainingSample>{}), 0.0);
}

TEST(Monitors, StepResponseCapIsStepScoped) {
  Sim sim(2);
  const auto policy = simenv::scripted_policy(ScriptKind::kGreedy, sim.synth);
  auto cfg = sim_config(2, 2);
  cfg.max_response_tokens = 4;
  const auto tight = run_training_step(sim.tasks, *policy, sim.exec, cfg);
  EXPECT_EQ(tight.stats.clipping_ratio, 1.0);
  cfg.max_response_tokens = 22000;
  cfg.step = 1;
  const auto loose = run_training_step(sim.tasks, *policy, sim.exec, cfg);
  EXPECT_EQ(loose.stats.clipping_ratio, 0.0);
}

}  // namespace
}  // namespace krl
