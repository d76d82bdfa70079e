// Copyright (c) 2026 The krl Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "krl/credit.hpp"
#include "krl/errors.hpp"

namespace krl {
namespace {

// Double-loop oracle over the definition, no recursion.
std::vector<double> brute_force(const std::vector<double>& r, AggregationMode mode, double gamma) {
  const std::size_t T = r.size();
  std::vector<double> out(T);
  for (std::size_t t = 0; t < T; ++t) {
    double acc = mode == AggregationMode::kSum ? 0.0 : -INFINITY;
    for (std::size_t i = t; i < T; ++i) {
      const double term = std::pow(gamma, static_cast<double>(i - t)) * r[i];
      switch (mode) {
        case AggregationMode::kSum: acc += term; break;
        case AggregationMode::kMax: acc = std::max(acc, term); break;
        case AggregationMode::kGreedy: acc = r[t]; break;
        case AggregationMode::kOutcome: break;
      }
    }
    if (mode == AggregationMode::kOutcome) acc = *std::max_element(r.begin(), r.end());
    out[t] = acc;
  }
  return out;
}

void expect_near_all(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "index " << i;
}

TEST(Aggregate, SumExample) {
  const std::vector<double> s{0, 1.3, 0.5};
  expect_near_all(aggregate(s, {AggregationMode::kSum, 0.4}), {0.6, 1.5, 0.5}, 1e-12);
}

TEST(Aggregate, MaxExample) {
  const std::vector<double> s{0, 1.3, 0.5};
  expect_near_all(aggregate(s, {AggregationMode::kMax, 0.4}), {0.52, 1.3, 0.5}, 1e-12);
}

TEST(Aggregate, GammaZeroIsGreedy) {
  const std::vector<double> s{0.2, 3.0, 0.0, 1.1};
  EXPECT_EQ(aggregate(s, {AggregationMode::kSum, 0.0}), s);
  EXPECT_EQ(aggregate(s, {AggregationMode::kGreedy, 0.7}), s);
}

TEST(Aggregate, OutcomeIsTrajectoryBest) {
  const std::vector<double> s{0.2, 3.0, 0.0, 1.1};
  EXPECT_EQ(aggregate(s, {AggregationMode::kOutcome, 0.4}), std::vector<double>(4, 3.0));
}

TEST(Aggregate, Errors) {
  EXPECT_THROW(aggregate(std::vector<double>{}, {}), ContractViolation);
  const std::vector<double> s{1.0};
  EXPECT_THROW(aggregate(s, {AggregationMode::kSum, 1.3}), ContractViolation);
  EXPECT_THROW(aggregate(s, {AggregationMode::kSum, -0.1}), ContractViolation);
  EXPECT_THROW(parse_aggregation_mode("mean"), ContractViolation);
}

TEST(AggregateProperty, MatchesBruteForce) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> score(0.0, 5.0), g(0.0, 1.0);
  std::uniform_int_distribution<int> len(1, 12), mode(0, 3);
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> r(static_cast<std::size_t>(len(rng)));
    for (auto& x : r) x = score(rng);
    const AggregationSpec spec{static_cast<AggregationMode>(mode(rng)), g(rng)};
    expect_near_all(aggregate(r, spec), brute_force(r, spec.mode, spec.gamma), 1e-12);
  }
}

TEST(AggregateProperty, LastTurnIsOwnScore) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> r(1 + i % 7);
    for (auto& x : r) x = u(rng);
    for (auto mode : {AggregationMode::kSum, AggregationMode::kMax}) {
      EXPECT_EQ(aggregate(r, {mode, u(rng) / 3.0}).back(), r.back());
    }
  }
}

TEST(AggregateProperty, MonotoneInFutureScores) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (int i = 0; i < 300; ++i) {
    std::vector<double> r(2 + i % 6);
    for (auto& x : r) x = u(rng);
    const double gamma = u(rng) / 3.0;
    const std::size_t j = static_cast<std::size_t>(i) % r.size();
    auto bumped = r;
    bumped[j] += 0.5;
    for (auto mode : {AggregationMode::kSum, AggregationMode::kMax}) {
      const auto a = aggregate(r, {mode, gamma});
      const auto b = aggregate(bumped, {mode, gamma});
      for (std::size_t t = 0; t <= j; ++t) EXPECT_GE(b[t], a[t]);
    }
  }
}

TEST(Normalize, Examples) {
  const std::vector<double> a{1, 2, 3};
  expect_near_all(normalize_group(a), {-1.224745, 0.0, 1.224745}, 1e-6);
  const std::vector<double> b{5, 5, 5, 5};
  EXPECT_EQ(normalize_group(b), std::vector<double>(4, 0.0));
  const std::vector<double> c{0, 1};
  expect_near_all(normalize_group(c), {-1.0, 1.0}, 1e-7);
}

TEST(Normalize, Errors) {
  EXPECT_THROW(normalize_group(std::vector<double>{1.0}), ContractViolation);
  EXPECT_THROW(normalize_group(std::vector<double>{}), ContractViolation);
}

TEST(Normalize, SampleStdOption) {
  const std::vector<double> a{1, 2, 3};
  NormalizeOptions opts;
  opts.population_std = false;
  expect_near_all(normalize_group(a, opts), {-1.0, 0.0, 1.0}, 1e-7);
}

TEST(NormalizeProperty, ZeroMeanUnitStd) {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  NormalizeOptions no_eps;
  no_eps.epsilon = 0.0;
  for (int i = 0; i < 500; ++i) {
    std::vector<double> r(2 + i % 64);
    for (auto& x : r) x = u(rng);
    const auto adv = normalize_group(r, no_eps);
    const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / adv.size();
    double var = 0.0;
    for (double a : adv) var += (a - mean) * (a - mean);
    EXPECT_LT(std::abs(mean), 1e-9);
    EXPECT_NEAR(std::sqrt(var / adv.size()), 1.0, 1e-9);
  }
}

TEST(NormalizeProperty, ShiftInvariant) {
  std::mt19937_64 rng(78);
  std::uniform_real_distribution<double> u(0.0, 4.0);
  for (int i = 0; i < 300; ++i) {
    std::vector<double> r(2 + i % 16);
    for (auto& x : r) x = u(rng);
    auto shifted = r;
    for (auto& x : shifted) x += 17.25;
    expect_near_all(normalize_group(r), normalize_group(shifted), 1e-9);
  }
}

TEST(CreditFlow, IncorrectFirstTurnLeadingToFastKernelIsRewarded) {
  const AggregationSpec spec{AggregationMode::kSum, 0.4};
  const auto a = aggregate(std::vector<double>{0, 0, 0}, spec);
  const auto b = aggregate(std::vector<double>{0, 1.3, 2.0}, spec);
  std::vector<double> group(a);
  group.insert(group.end(), b.begin(), b.end());
  const auto adv = normalize_group(group);
  EXPECT_GT(adv[3], 0.0);
  for (int i = 0; i < 3; ++i) EXPECT_LT(adv[i], 0.0);
}

}  // namespace
}  // namespace krl
