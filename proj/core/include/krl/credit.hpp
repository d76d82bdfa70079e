// Copyright (c) 2026 The krl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Turn-level credit assignment and group-relative advantages.

#pragma once

#include <span>
#include <string_view>
#include <vector>

namespace krl {

enum class AggregationMode {
  kSum,      // R_t = sum_{i>=t} gamma^(i-t) r_i
  kMax,      // R_t = max_{i>=t} gamma^(i-t) r_i
  kGreedy,   // R_t = r_t
  kOutcome,  // R_t = max_i r_i
};

std::string_view to_string(AggregationMode mode);
AggregationMode parse_aggregation_mode(std::string_view name);

struct AggregationSpec {
  AggregationMode mode = AggregationMode::kSum;
  double gamma = 0.4;
};

void validate(const AggregationSpec& spec);

// One aggregated reward per turn. Throws ContractViolation on empty scores or
// gamma outside [0, 1].
std::vector<double> aggregate(std::span<const double> scores,
                              const AggregationSpec& spec);

struct NormalizeOptions {
  double epsilon = 1e-8;
  // Divide by N. Sample std (N - 1) is available for audits.
  bool population_std = true;
};

// (r_i - mean) / (std + epsilon). A zero-variance group maps to all zeros.
// Throws ContractViolation when fewer than two rewards are given.
std::vector<double> normalize_group(std::span<const double> rewards,
                                    const NormalizeOptions& options = {});

}  // namespace krl
