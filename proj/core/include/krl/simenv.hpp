// Copyright (c) 2026 The krl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Deterministic synthetic kernel-optimization environment.
//
// A candidate is a set of `opt: <name>` lines. The runtime of a correct
// candidate is baseline_ms divided by the product of the speedup factors of
// the optimizations it applies. A candidate is incorrect when it misses the
// task's required optimization or applies an optimization without its
// prerequisite.

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "krl/context.hpp"
#include "krl/rollout.hpp"
#include "krl/scoring.hpp"

namespace krl::simenv {

struct SynthTask {
  std::string task_id;
  double baseline_ms = 10.0;
  // Ordered; the order is what deterministic policies walk through.
  std::vector<std::pair<std::string, double>> opt_catalog;
  std::string required_opt;
  // opt -> prerequisite opt
  std::map<std::string, std::string> prereqs;
  std::optional<std::string> forbidden_bait;

  std::optional<double> factor(std::string_view opt) const;
  // Longest prerequisite chain (number of edges).
  int chain_depth() const;

  bool operator==(const SynthTask&) const = default;
};

// Throws ContractViolation when the required opt is missing from the
// catalog, a factor is not > 1, or the prerequisite graph has a cycle.
void validate(const SynthTask& task);

nlohmann::json to_json(const SynthTask& task);
SynthTask task_from_json(const nlohmann::json& doc);
nlohmann::json tasks_to_json(const std::vector<SynthTask>& tasks);
std::vector<SynthTask> tasks_from_json(const nlohmann::json& doc);

// Parsed candidate: set semantics, duplicates ignored.
struct SynthCandidate {
  std::set<std::string> opts;
};

struct ParseOutcome {
  std::optional<SynthCandidate> candidate;
  std::string error;  // set when candidate is empty
};

ParseOutcome parse_candidate(std::string_view source);

struct Jitter {
  // Multiplicative runtime noise in [1 - amplitude, 1 + amplitude].
  double amplitude = 0.0;
  std::uint64_t seed = 0;
};

EvalResult evaluate_synth(const SynthTask& task, std::string_view source,
                          const Jitter& jitter = {});

enum class Difficulty { kEasy, kMixed, kHard };

std::string_view to_string(Difficulty difficulty);
Difficulty parse_difficulty(std::string_view name);

// Deterministic. easy: no prerequisites, small catalogs. hard: deep
// prerequisite chains. mixed: cycles through catalog sizes 2..8 and chain
// depths 0..3 so every contiguous batch spans difficulties.
std::vector<SynthTask> gen_tasks(std::uint64_t seed, std::size_t count,
                                 Difficulty difficulty);

// Text shown to the policy for a task.
std::string task_text(const SynthTask& task);
std::vector<RolloutTask> rollout_tasks(const std::vector<SynthTask>& tasks);

// Instructions and one-shot example for the synthetic grammar.
PromptTemplates prompt_templates();

class SimExecutor final : public Executor {
 public:
  explicit SimExecutor(std::vector<SynthTask> tasks, double jitter = 0.0);
  EvalResult evaluate(const std::string& task_id,
                      const std::string& kernel_source,
                      std::uint64_t seed) override;
  std::optional<double> baseline_ms(const std::string& task_id) const override;
  const SynthTask& task(const std::string& task_id) const;

 private:
  std::map<std::string, SynthTask> tasks_;
  double jitter_;
};

enum class ScriptKind { kGreedy, kExplorer, kHacker, kStagnant };

std::string_view to_string(ScriptKind kind);
ScriptKind parse_script_kind(std::string_view name);

// One prior attempt as recovered from a prompt.
struct VisibleAttempt {
  std::set<std::string> opts;
  EvalStatus status = EvalStatus::kParseError;
  std::optional<double> speedup;
  std::string message;
};

// Recovers the task id and prior attempts from a prompt built by
// build_context with task_text() and prompt_templates().
struct PromptView {
  std::string task_id;
  std::vector<VisibleAttempt> attempts;
};
PromptView read_prompt(std::string_view prompt);

// Test-double policies. Stateless: every decision is derived from the
// prompt and the seed.
//  greedy   - required opt first, then adds the next untried catalog opt each
//             turn, reverting an addition that feedback marked incorrect.
//  explorer - random subsets from the turn seed; adds prerequisites named in
//             incorrect feedback on the next turn.
//  hacker   - emits the task's forbidden bait.
//  stagnant - repeats the required-only answer every turn.
class ScriptedPolicy final : public Policy {
 public:
  ScriptedPolicy(ScriptKind kind, std::vector<SynthTask> tasks);
  std::string id() const override;
  PolicyResponse generate(const std::string& prompt, std::uint64_t seed,
                          double temperature,
                          int max_response_tokens) const override;

 private:
  ScriptKind kind_;
  std::map<std::string, SynthTask> tasks_;
};

std::unique_ptr<Policy> scripted_policy(ScriptKind kind,
                                        std::vector<SynthTask> tasks);

}  // namespace krl::simenv
