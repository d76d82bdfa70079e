// Copyright (c) 2026 The krl Authors
// SPDX-License-Identifier: Apache-2.0

#include "krl/scoring.hpp"

#include <array>
#include <cmath>

#include <fmt/format.h>

#include "krl/errors.hpp"

namespace krl {
namespace {

constexpr std::array<std::pair<EvalStatus, std::string_view>, 6> kStatusNames{{
    {EvalStatus::kParseError, "parse_error"},
    {EvalStatus::kGuardRejected, "guard_rejected"},
    {EvalStatus::kCompileError, "compile_error"},
    {EvalStatus::kRuntimeError, "runtime_error"},
    {EvalStatus::kIncorrect, "incorrect"},
    {EvalStatus::kCorrect, "correct"},
}};

}  // namespace

std::string_view to_string(EvalStatus status) {
  for (const auto& [value, name] : kStatusNames) {
    if (value == status) return name;
  }
  return "unknown";
}

EvalStatus parse_eval_status(std::string_view name) {
  for (const auto& [value, text] : kStatusNames) {
    if (text == name) return value;
  }
  throw ContractViolation(fmt::format("unknown eval status '{}'", name));
}

EvalResult EvalResult::correct(double baseline_ms, double runtime_ms) {
  EvalResult r;
  r.status = EvalStatus::kCorrect;
  r.baseline_ms = baseline_ms;
  r.runtime_ms = runtime_ms;
  validate(r);
  return r;
}

EvalResult EvalResult::failure(EvalStatus status, double baseline_ms,
                               std::string error_message) {
  EvalResult r;
  r.status = status;
  r.baseline_ms = baseline_ms;
  r.error_message = std::move(error_message);
  validate(r);
  return r;
}

std::optional<double> EvalResult::speedup() const {
  if (!is_correct() || !runtime_ms || *runtime_ms <= 0.0) return std::nullopt;
  return baseline_ms / *runtime_ms;
}

void validate(const EvalResult& eval) {
  if (!(eval.baseline_ms > 0.0) || !std::isfinite(eval.baseline_ms)) {
    throw ContractViolation(
        fmt::format("baseline_ms must be positive and finite, got {}", eval.baseline_ms));
  }
  if (eval.is_correct()) {
    if (!eval.runtime_ms || !(*eval.runtime_ms > 0.0) || !std::isfinite(*eval.runtime_ms)) {
      throw ContractViolation("correct result requires a positive finite runtime_ms");
    }
    if (!eval.error_message.empty()) {
      throw ContractViolation("correct result must not carry an error message");
    }
    const double s = eval.baseline_ms / *eval.runtime_ms;
    if (!std::isfinite(s) || s <= 0.0) {
      throw ContractViolation("speedup is not finite");
    }
  } else {
    if (eval.runtime_ms) {
      throw ContractViolation(
          fmt::format("{} result must not carry a runtime", to_string(eval.status)));
    }
    if (eval.error_message.empty()) {
      throw ContractViolation(
          fmt::format("{} result requires an error message", to_string(eval.status)));
    }
  }
}

void validate(const ScoreWeights& weights) {
  if (!(weights.correctness_weight >= 0.0) || !(weights.speedup_weight >= 0.0)) {
    throw ContractViolation("score weights must be nonnegative");
  }
}

double score_kernel(const EvalResult& eval, const ScoreWeights& weights) {
  validate(eval);
  validate(weights);
  if (!eval.is_correct()) return 0.0;
  return weights.correctness_weight + weights.speedup_weight * *eval.speedup();
}

bool fast_p(const EvalResult& eval, double p) {
  if (!(p > 0.0)) throw ContractViolation("fast_p threshold must be positive");
  const auto s = eval.speedup();
  return s && *s >= p;
}

}  // namespace krl
