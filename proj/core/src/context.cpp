// Copyright (c) 2026 The krl Authors
// SPDX-License-Identifier: Apache-2.0

#include "krl/context.hpp"

#include <cctype>

#include <fmt/format.h>

#include "krl/errors.hpp"

namespace krl {
namespace {

constexpr std::string_view kKernelBenchInstructions =
    "Replace pytorch operators in the given architecture with raw CUDA kernels, optimizing for "
    "performance on NVIDIA H100 (e.g. shared memory, kernel fusion, warp primitives, "
    "vectorization,...). Use torch.utils.cpp_extension.load_inline and name your optimized "
    "output architecture ModelNew. You are not allowed to use torch.nn (except for Parameter, "
    "containers, and init). The input and output have to be on CUDA device. Your answer must be "
    "the complete new architecture (no testing code, no other code): it will be evaluated and you "
    "will be given feedback on its correctness and speedup so you can keep iterating, trying to "
    "maximize the speedup. After your answer, summarize your changes in a few sentences.";

constexpr std::string_view kKernelBenchExample = R"EX(import torch.nn as nn
from torch.utils.cpp_extension import load_inline

# Define the custom CUDA kernel for element-wise addition
elementwise_add_source = """
#include <torch/extension.h>
#include <cuda_runtime.h>

__global__ void elementwise_add_kernel(const float* a, const float* b, float* out, int size) {
    int idx = blockIdx.x * blockDim.x + threadIdx.x;
    if (idx < size) {
        out[idx] = a[idx] + b[idx];
    }
}

torch::Tensor elementwise_add_cuda(torch::Tensor a, torch::Tensor b) {
    auto size = a.numel();
    auto out = torch::zeros_like(a);

    const int block_size = 256;
    const int num_blocks = (size + block_size - 1) / block_size;

    elementwise_add_kernel<<<num_blocks, block_size>>>(a.data_ptr<float>(), b.data_ptr<float>(), out.data_ptr<float>(), size);

    return out;
}
"""

elementwise_add_cpp_source = (
    "torch::Tensor elementwise_add_cuda(torch::Tensor a, torch::Tensor b);"
)

# Compile the inline CUDA code for element-wise addition
elementwise_add = load_inline(
    name="elementwise_add",
    cpp_sources=elementwise_add_cpp_source,
    cuda_sources=elementwise_add_source,
    functions=["elementwise_add_cuda"],
    verbose=True,
    extra_cflags=[""],
    extra_ldflags=[""],
)


class ModelNew(nn.Module):
    def __init__(self) -> None:
        super().__init__()
        self.elementwise_add = elementwise_add

    def forward(self, a, b):
        return self.elementwise_add.elementwise_add_cuda(a, b)
)EX";

std::string base_prompt(std::string_view task_text, const PromptTemplates& templates,
                        bool with_example) {
  std::string text = templates.task_header;
  text += task_text;
  if (text.empty() || text.back() != '\n') text += '\n';
  text += '\n';
  text += templates.instructions;
  if (with_example) {
    text += "\n\n";
    text += templates.example_header;
    text += templates.example;
  }
  return text;
}

void append_turn(std::string& text, const TurnRecord& turn) {
  text += turn.kernel_source;
  text += "\n\n";
  text += turn.cot_summary;
  text += "\n\n";
  text += feedback_block(turn.eval);
  text += "\n\n";
}

std::string assemble(const std::string& base, const std::vector<TurnRecord>& history,
                     std::size_t first, const PromptTemplates& templates) {
  if (first >= history.size()) return base;
  std::string text = base;
  text += "\n\n";
  text += templates.history_header;
  text += "\n\n";
  for (std::size_t i = first; i < history.size(); ++i) append_turn(text, history[i]);
  text += templates.restart;
  return text;
}

}  // namespace

std::size_t WordHeuristicCounter::count(std::string_view text) const {
  std::size_t words = 0;
  bool in_word = false;
  for (unsigned char c : text) {
    const bool space = std::isspace(c) != 0;
    if (!space && !in_word) ++words;
    in_word = !space;
  }
  return (words * 13 + 9) / 10;
}

std::shared_ptr<const TokenCounter> default_token_counter() {
  static const auto counter = std::make_shared<const WordHeuristicCounter>();
  return counter;
}

PromptTemplates PromptTemplates::kernelbench() {
  PromptTemplates t;
  t.instructions = std::string(kKernelBenchInstructions);
  t.example = std::string(kKernelBenchExample);
  return t;
}

std::string format_speedup(double speedup) { return fmt::format("{:.2f}", speedup); }

std::string feedback_block(const EvalResult& eval) {
  switch (eval.status) {
    case EvalStatus::kParseError:
      return "Your previous answer failed to be parsed due to not adhering to the desired "
             "formatting. Here is the error message: " + eval.error_message;
    case EvalStatus::kCompileError:
      return "Your previous answer failed to compile. Here is the error message: " +
             eval.error_message;
    case EvalStatus::kRuntimeError:
      return "Your previous answer compiled successfully but had runtime errors. Here is the "
             "error message: " + eval.error_message;
    case EvalStatus::kGuardRejected:
    case EvalStatus::kIncorrect:
      return "Your previous answer was incorrect. Here is the error message: " +
             eval.error_message;
    case EvalStatus::kCorrect:
      return "Your previous answer was correct but can be made faster. Here is the speedup you "
             "achieved relative to the baseline: " +
             format_speedup(eval.speedup().value_or(0.0));
  }
  return {};
}

Prompt build_context(std::string_view task_text, const std::vector<TurnRecord>& history,
                     const PromptBudget& budget, bool first_turn_example,
                     const PromptTemplates& templates) {
  for (std::size_t i = 1; i < history.size(); ++i) {
    if (history[i].turn_index <= history[i - 1].turn_index) {
      throw ContractViolation("history must be sorted by strictly increasing turn_index");
    }
  }
  const TokenCounter& counter = *budget.counter;
  const std::string base = base_prompt(task_text, templates, first_turn_example && history.empty());
  const std::size_t base_tokens = counter.count(base);
  if (base_tokens > budget.max_tokens) {
    throw BudgetError(fmt::format("base prompt needs {} tokens ({}) but the budget is {}",
                                  base_tokens, counter.id(), budget.max_tokens));
  }
  for (std::size_t first = 0; first <= history.size(); ++first) {
    std::string text = assemble(base, history, first, templates);
    if (counter.count(text) <= budget.max_tokens) {
      Prompt prompt;
      prompt.text = std::move(text);
      for (std::size_t i = first; i < history.size(); ++i) {
        prompt.included_turns.push_back(history[i].turn_index);
      }
      return prompt;
    }
  }
  // Unreachable: the base prompt alone fits.
  return {base, {}};
}

}  // namespace krl
