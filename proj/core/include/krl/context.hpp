// Copyright (c) 2026 The krl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Per-turn prompt construction. Prior turns contribute their kernel, the CoT
// summary and a feedback block; full chains of thought never enter the
// context. When the prompt would exceed the budget, whole turns are dropped
// starting from the earliest.

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "krl/scoring.hpp"

namespace krl {

struct TurnRecord {
  std::string kernel_source;
  std::string cot_summary;
  EvalResult eval;
  int turn_index = 1;  // 1-based
};

// Token counting scheme.
class TokenCounter {
 public:
  virtual ~TokenCounter() = default;
  virtual std::string id() const = 0;
  virtual std::size_t count(std::string_view text) const = 0;
};

// ceil(1.3 * whitespace-delimited words). No tokenizer dependency.
class WordHeuristicCounter final : public TokenCounter {
 public:
  std::string id() const override { return "words_x1.3"; }
  std::size_t count(std::string_view text) const override;
};

// Adapts an exact tokenizer supplied by the deployment.
class FunctionCounter final : public TokenCounter {
 public:
  FunctionCounter(std::string id,
                  std::function<std::size_t(std::string_view)> fn)
      : id_(std::move(id)), fn_(std::move(fn)) {}
  std::string id() const override { return id_; }
  std::size_t count(std::string_view text) const override { return fn_(text); }

 private:
  std::string id_;
  std::function<std::size_t(std::string_view)> fn_;
};

std::shared_ptr<const TokenCounter> default_token_counter();

struct PromptBudget {
  std::size_t max_tokens = 32768;
  std::shared_ptr<const TokenCounter> counter = default_token_counter();

  std::string counter_id() const { return counter->id(); }
};

// Fixed texts of the prompt. Defaults reproduce the inline-CUDA KernelBench
// setting; the simulated environment swaps in its own instruction.
struct PromptTemplates {
  std::string task_header = "You are given the following architecture:\n";
  std::string instructions;
  std::string example_header = "Here is an example:\n\n";
  std::string example;
  std::string history_header = "Here are your previous attempts: ";
  std::string restart = "Restart your reasoning process and generate new, complete code.";

  static PromptTemplates kernelbench();
};

// Template version; bump whenever any fixed text changes.
inline constexpr std::string_view kTemplateVersion = "1";

std::string feedback_block(const EvalResult& eval);

// Speedup with two decimals, as shown in feedback.
std::string format_speedup(double speedup);

struct Prompt {
  std::string text;
  std::vector<int> included_turns;
};

// Throws BudgetError when the base prompt alone exceeds the budget and
// ContractViolation when history is not sorted by turn_index.
Prompt build_context(std::string_view task_text,
                     const std::vector<TurnRecord>& history,
                     const PromptBudget& budget, bool first_turn_example,
                     const PromptTemplates& templates = PromptTemplates::kernelbench());

}  // namespace krl
