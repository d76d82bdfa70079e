// Copyright (c) 2026 The krl Authors
// SPDX-License-Identifier: Apache-2.0

#include "krl/credit.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "krl/errors.hpp"

namespace krl {

std::string_view to_string(AggregationMode mode) {
  switch (mode) {
    case AggregationMode::kSum: return "sum";
    case AggregationMode::kMax: return "max";
    case AggregationMode::kGreedy: return "greedy";
    case AggregationMode::kOutcome: return "outcome";
  }
  return "unknown";
}

AggregationMode parse_aggregation_mode(std::string_view name) {
  if (name == "sum") return AggregationMode::kSum;
  if (name == "max") return AggregationMode::kMax;
  if (name == "greedy") return AggregationMode::kGreedy;
  if (name == "outcome") return AggregationMode::kOutcome;
  throw ContractViolation(fmt::format("unknown aggregation mode '{}'", name));
}

void validate(const AggregationSpec& spec) {
  if (!(spec.gamma >= 0.0 && spec.gamma <= 1.0)) {
    throw ContractViolation(fmt::format("gamma must lie in [0, 1], got {}", spec.gamma));
  }
}

std::vector<double> aggregate(std::span<const double> scores, const AggregationSpec& spec) {
  validate(spec);
  if (scores.empty()) throw ContractViolation("aggregate needs at least one turn score");
  const std::size_t n = scores.size();
  std::vector<double> out(n);
  switch (spec.mode) {
    case AggregationMode::kSum: {
      // R_t = r_t + gamma * R_{t+1}
      double acc = 0.0;
      for (std::size_t t = n; t-- > 0;) {
        acc = scores[t] + spec.gamma * acc;
        out[t] = acc;
      }
      break;
    }
    case AggregationMode::kMax: {
      // R_t = max(r_t, gamma * R_{t+1})
      double acc = 0.0;
      for (std::size_t t = n; t-- > 0;) {
        acc = (t + 1 == n) ? scores[t] : std::max(scores[t], spec.gamma * acc);
        out[t] = acc;
      }
      break;
    }
    case AggregationMode::kGreedy:
      std::copy(scores.begin(), scores.end(), out.begin());
      break;
    case AggregationMode::kOutcome:
      std::fill(out.begin(), out.end(), *std::max_element(scores.begin(), scores.end()));
      break;
  }
  return out;
}

std::vector<double> normalize_group(std::span<const double> rewards,
                                    const NormalizeOptions& options) {
  const std::size_t n = rewards.size();
  if (n < 2) {
    throw ContractViolation(fmt::format("normalize_group needs at least 2 rewards, got {}", n));
  }
  std::vector<double> out(n, 0.0);
  // Identical rewards carry no signal; exact zeros avoid rounding residue.
  if (std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards[0]; })) {
    return out;
  }
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double r : rewards) ss += (r - mean) * (r - mean);
  const double denom = options.population_std ? static_cast<double>(n) : static_cast<double>(n - 1);
  const double std_dev = std::sqrt(ss / denom);
  if (std_dev == 0.0) return out;
  for (std::size_t i = 0; i < n; ++i) out[i] = (rewards[i] - mean) / (std_dev + options.epsilon);
  return out;
}

}  // namespace krl
