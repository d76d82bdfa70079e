// Copyright (c) 2026 The krl Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <fstream>
#include <random>
#include <sstream>

#include "krl/credit.hpp"
#include "krl/guardrails.hpp"
#include "krl/metrics.hpp"
#include "krl/rollout.hpp"
#include "krl/simenv.hpp"

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(0.0, 3.0);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

void BM_BestAtK(benchmark::State& state) {
  const auto v = random_values(static_cast<std::size_t>(state.range(0)), 1);
  const std::size_t k = v.size() / 2;
  for (auto _ : state) benchmark::DoNotOptimize(krl::best_at_k(v, k));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_BestAtK)->RangeMultiplier(8)->Range(16, 16384)->Complexity();

void BM_PassAtK(benchmark::State& state) {
  const auto n = static_cast<std::uint64_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(krl::pass_at_k(n, n / 3, n / 2));
}
BENCHMARK(BM_PassAtK)->Arg(16)->Arg(10000);

void BM_AggregateAndNormalize(benchmark::State& state) {
  const auto turns = static_cast<std::size_t>(state.range(0));
  const krl::AggregationSpec spec{krl::AggregationMode::kSum, 0.4};
  std::vector<std::vector<double>> trajs;
  for (int i = 0; i < 16; ++i) trajs.push_back(random_values(turns, 10 + i));
  for (auto _ : state) {
    std::vector<double> group;
    for (const auto& t : trajs) {
      const auto r = krl::aggregate(t, spec);
      group.insert(group.end(), r.begin(), r.end());
    }
    benchmark::DoNotOptimize(krl::normalize_group(group));
  }
}
BENCHMARK(BM_AggregateAndNormalize)->Arg(4)->Arg(8)->Arg(32);

void BM_GuardCheck(benchmark::State& state) {
  std::ifstream in(std::string(KRL_FIXTURES_DIR) + "/clean/conv3d_turn7.py");
  std::stringstream s;
  s << in.rdbuf();
  const std::string source = s.str();
  const krl::RuleSet rules = krl::default_rules();
  for (auto _ : state) benchmark::DoNotOptimize(krl::check_candidate(source, rules));
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * source.size()));
}
BENCHMARK(BM_GuardCheck);

void BM_RolloutStep(benchmark::State& state) {
  namespace sim = krl::simenv;
  const auto synth = sim::gen_tasks(1, 8, sim::Difficulty::kMixed);
  const auto tasks = sim::rollout_tasks(synth);
  sim::SimExecutor exec(synth);
  const auto policy = sim::scripted_policy(sim::ScriptKind::kExplorer, synth);
  krl::RolloutConfig cfg;
  cfg.m = 8;
  cfg.n = 4;
  cfg.parallelism = 1;
  cfg.context.templates = sim::prompt_templates();
  cfg.rules = krl::default_rules({""});
  for (auto _ : state) {
    const auto r = krl::run_training_step(tasks, *policy, exec, cfg);
    benchmark::DoNotOptimize(r.stats.mean_reward);
    ++cfg.step;
  }
}
BENCHMARK(BM_RolloutStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
