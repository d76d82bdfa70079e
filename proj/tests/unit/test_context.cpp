// Copyright (c) 2026 The krl Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "krl/context.hpp"
#include "krl/errors.hpp"

namespace krl {
namespace {

std::string read_fixture(const std::string& rel) {
  std::ifstream in(std::string(KRL_FIXTURES_DIR) + "/" + rel, std::ios::binary);
  EXPECT_TRUE(in.good()) << rel;
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

PromptBudget huge() { return PromptBudget{1u << 30, default_token_counter()}; }

TurnRecord turn(int idx, EvalResult eval, std::string kernel = "k", std::string summary = "s") {
  return TurnRecord{std::move(kernel), std::move(summary), std::move(eval), idx};
}

TEST(Feedback, Templates) {
  EXPECT_EQ(feedback_block(EvalResult::correct(1.06, 1.0)),
            "Your previous answer was correct but can be made faster. Here is the speedup you "
            "achieved relative to the baseline: 1.06");
  EXPECT_EQ(feedback_block(EvalResult::failure(EvalStatus::kCompileError, 1.0, "undefined symbol")),
            "Your previous answer failed to compile. Here is the error message: undefined symbol");
  EXPECT_EQ(feedback_block(EvalResult::failure(EvalStatus::kParseError, 1.0, "m")),
            "Your previous answer failed to be parsed due to not adhering to the desired "
            "formatting. Here is the error message: m");
  EXPECT_EQ(feedback_block(EvalResult::failure(EvalStatus::kRuntimeError, 1.0, "m")),
            "Your previous answer compiled successfully but had runtime errors. Here is the "
            "error message: m");
  EXPECT_EQ(feedback_block(EvalResult::failure(EvalStatus::kIncorrect, 1.0, "m")),
            "Your previous answer was incorrect. Here is the error message: m");
  EXPECT_EQ(feedback_block(EvalResult::failure(EvalStatus::kGuardRejected, 1.0, "no_try")),
            "Your previous answer was incorrect. Here is the error message: no_try");
}

TEST(Feedback, SpeedupFormatting) {
  EXPECT_EQ(format_speedup(1.0), "1.00");
  EXPECT_EQ(format_speedup(1.934), "1.93");
  EXPECT_EQ(format_speedup(0.605), "0.60");
  EXPECT_EQ(format_speedup(12.0), "12.00");
}

TEST(TokenCounter, WordHeuristic) {
  WordHeuristicCounter c;
  EXPECT_EQ(c.count(""), 0u);
  EXPECT_EQ(c.count("one"), 2u);          // ceil(1.3)
  EXPECT_EQ(c.count("a b c d e f g h i j"), 13u);
  EXPECT_EQ(c.count("  a\tb\n\nc  "), 4u);  // ceil(3.9)
  EXPECT_EQ(c.id(), "words_x1.3");
}

TEST(Context, GoldenFirstTurn) {
  const auto task = read_fixture("golden/layernorm_task.py");
  const auto p = build_context(task, {}, huge(), true);
  EXPECT_EQ(p.text, read_fixture("golden/kernelbench_first_turn.txt"));
  EXPECT_TRUE(p.included_turns.empty());
}

TEST(Context, GoldenHistory) {
  const auto task = read_fixture("golden/layernorm_task.py");
  const std::vector<TurnRecord> h{
      turn(1, EvalResult::failure(EvalStatus::kParseError, 2.0, "no code block found"), "kernel_a = 1",
           "Tried A."),
      turn(2, EvalResult::failure(EvalStatus::kCompileError, 2.0, "nvcc: error: expected ';'"),
           "kernel_b = 2", "Tried B."),
      turn(3, EvalResult::failure(EvalStatus::kRuntimeError, 2.0, "CUDA error: illegal memory access"),
           "kernel_c = 3", "Tried C."),
      turn(4, EvalResult::failure(EvalStatus::kIncorrect, 2.0, "max abs diff 0.5"), "kernel_d = 4",
           "Tried D."),
      turn(5, EvalResult::correct(2.468, 2.0), "kernel_e = 5", "Tried E."),
  };
  const auto p = build_context(task, h, huge(), true);
  EXPECT_EQ(p.text, read_fixture("golden/kernelbench_history.txt"));
  EXPECT_EQ(p.included_turns, (std::vector<int>{1, 2, 3, 4, 5}));
}

TEST(Context, ExampleOnlyWithoutHistory) {
  const auto tpl = PromptTemplates::kernelbench();
  const auto first = build_context("task\n", {}, huge(), true);
  EXPECT_NE(first.text.find(tpl.example_header), std::string::npos);
  const auto off = build_context("task\n", {}, huge(), false);
  EXPECT_EQ(off.text.find(tpl.example_header), std::string::npos);
  const auto later = build_context("task\n", {turn(1, EvalResult::correct(1, 1))}, huge(), true);
  EXPECT_EQ(later.text.find(tpl.example_header), std::string::npos);
  EXPECT_NE(later.text.find(tpl.restart), std::string::npos);
}

TEST(Context, DropsEarliestTurns) {
  const std::string big(400, 'x');
  std::vector<TurnRecord> h;
  for (int i = 1; i <= 3; ++i) {
    std::string kernel;
    for (int w = 0; w < 100; ++w) kernel += "w" + std::to_string(w) + " ";
    h.push_back(turn(i, EvalResult::correct(1, 1), kernel, "s"));
  }
  const auto counter = default_token_counter();
  const auto full = build_context("task\n", h, huge(), false);
  const auto two = build_context("task\n", {h[1], h[2]}, huge(), false);
  const std::size_t budget = counter->count(two.text);
  ASSERT_LT(budget, counter->count(full.text));
  const auto p = build_context("task\n", h, PromptBudget{budget, counter}, false);
  EXPECT_EQ(p.included_turns, (std::vector<int>{2, 3}));
  EXPECT_EQ(p.text, two.text);
}

TEST(Context, HugeBudgetIncludesAll) {
  std::vector<TurnRecord> h;
  for (int i = 1; i <= 6; ++i) h.push_back(turn(i, EvalResult::correct(1, 1)));
  EXPECT_EQ(build_context("t\n", h, huge(), true).included_turns.size(), 6u);
}

TEST(Context, Errors) {
  EXPECT_THROW(build_context("task\n", {}, PromptBudget{3, default_token_counter()}, true), BudgetError);
  EXPECT_THROW(build_context("task\n", {turn(2, EvalResult::correct(1, 1)), turn(1, EvalResult::correct(1, 1))},
                             huge(), true),
               ContractViolation);
}

TEST(Context, ExactCounterSlot) {
  FunctionCounter chars("chars", [](std::string_view s) { return s.size(); });
  const auto counter = std::make_shared<FunctionCounter>(chars);
  const auto base = build_context("t\n", {}, huge(), false);
  const auto p = build_context("t\n", {turn(1, EvalResult::correct(1, 1))},
                               PromptBudget{base.text.size() + 50, counter}, false);
  EXPECT_LE(p.text.size(), base.text.size() + 50);
}

// Random histories and budgets: never over budget, survivors form a suffix,
// chronological order kept, rebuilding is byte-identical.
TEST(ContextProperty, BudgetAndSuffix) {
  std::mt19937_64 rng(4242);
  const auto counter = default_token_counter();
  const auto base_tokens = counter->count(build_context("the task\n", {}, huge(), false).text);
  for (int iter = 0; iter < 1000; ++iter) {
    const int T = static_cast<int>(rng() % 9);
    std::vector<TurnRecord> h;
    for (int i = 1; i <= T; ++i) {
      std::string kernel;
      const int words = static_cast<int>(rng() % 60);
      for (int w = 0; w < words; ++w) kernel += "tok" + std::to_string(rng() % 100) + (rng() % 5 ? " " : "\n");
      EvalResult e = rng() % 2 ? EvalResult::correct(1.0 + (rng() % 100) / 10.0, 1.0)
                               : EvalResult::failure(EvalStatus::kCompileError, 1.0, "err " + std::to_string(i));
      h.push_back(turn(i, e, kernel, "summary " + std::to_string(i)));
    }
    const std::size_t budget = base_tokens + rng() % 400;
    const PromptBudget pb{budget, counter};
    const auto p = build_context("the task\n", h, pb, T > 0 && rng() % 2 == 0);
    EXPECT_LE(counter->count(p.text), budget);
    for (std::size_t i = 0; i < p.included_turns.size(); ++i) {
      EXPECT_EQ(p.included_turns[i], T - static_cast<int>(p.included_turns.size()) + 1 + static_cast<int>(i));
    }
    std::size_t last = 0;
    for (int idx : p.included_turns) {
      const auto pos = p.text.find("summary " + std::to_string(idx) + "\n");
      ASSERT_NE(pos, std::string::npos);
      EXPECT_GE(pos, last);
      last = pos;
    }
    EXPECT_EQ(build_context("the task\n", h, pb, false).text, build_context("the task\n", h, pb, false).text);
  }
}

}  // namespace
}  // namespace krl
