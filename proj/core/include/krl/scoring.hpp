// Copyright (c) 2026 The krl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Kernel score: correctness indicator plus speedup ratio.

#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace krl {

// Evaluation funnel. Each later status implies every earlier check passed.
enum class EvalStatus {
  kParseError,
  kGuardRejected,
  kCompileError,
  kRuntimeError,
  kIncorrect,
  kCorrect,
};

std::string_view to_string(EvalStatus status);
// Throws ContractViolation on an unknown name.
EvalStatus parse_eval_status(std::string_view name);

struct EvalResult {
  EvalStatus status = EvalStatus::kParseError;
  // Candidate wall time; set and > 0 iff status is correct.
  std::optional<double> runtime_ms;
  double baseline_ms = 1.0;
  // Empty iff status is correct.
  std::string error_message;

  static EvalResult correct(double baseline_ms, double runtime_ms);
  static EvalResult failure(EvalStatus status, double baseline_ms,
                            std::string error_message);

  bool is_correct() const { return status == EvalStatus::kCorrect; }
  // baseline_ms / runtime_ms; nullopt unless correct.
  std::optional<double> speedup() const;

  bool operator==(const EvalResult&) const = default;
};

// Throws ContractViolation if the result breaks an EvalResult invariant.
void validate(const EvalResult& eval);

struct ScoreWeights {
  double correctness_weight = 0.3;
  double speedup_weight = 1.0;
};

void validate(const ScoreWeights& weights);

// correctness_weight * 1{correct} + speedup_weight * speedup * 1{correct}.
double score_kernel(const EvalResult& eval, const ScoreWeights& weights = {});

// True iff the kernel is correct and its speedup is at least p (inclusive).
bool fast_p(const EvalResult& eval, double p);

}  // namespace krl
