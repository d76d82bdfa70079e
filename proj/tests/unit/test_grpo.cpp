// Copyright (c) 2026 The krl Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "krl/errors.hpp"
#include "krl/grpo.hpp"

namespace krl {
namespace {

// Self-contained objective used as the finite-difference oracle. Shares no
// code with the library beyond ToyPolicy's storage.
double oracle_logp(const std::vector<double>& logits, std::size_t V, std::size_t pos, int y) {
  double mx = -INFINITY;
  for (std::size_t v = 0; v < V; ++v) mx = std::max(mx, logits[pos * V + v]);
  double z = 0.0;
  for (std::size_t v = 0; v < V; ++v) z += std::exp(logits[pos * V + v] - mx);
  return logits[pos * V + static_cast<std::size_t>(y)] - mx - std::log(z);
}

double oracle_objective(const std::vector<double>& logits, const ToyPolicy& old_p,
                        const ToyPolicy& ref_p, const std::vector<ToySample>& samples,
                        const GrpoConfig& cfg) {
  const std::size_t V = old_p.vocab_size();
  const std::vector<double> old_l(old_p.logits().begin(), old_p.logits().end());
  const std::vector<double> ref_l(ref_p.logits().begin(), ref_p.logits().end());
  double total = 0.0;
  for (const auto& s : samples) {
    double sur = 0.0, kl = 0.0;
    for (std::size_t t = 0; t < s.tokens.size(); ++t) {
      const double ln = oracle_logp(logits, V, t, s.tokens[t]);
      const double lo = oracle_logp(old_l, V, t, s.tokens[t]);
      const double lr = oracle_logp(ref_l, V, t, s.tokens[t]);
      const double rho = std::exp(ln - lo);
      const double clipped = std::clamp(rho, 1.0 - cfg.eps_low, 1.0 + cfg.eps_high);
      sur += std::min(rho * s.advantage, clipped * s.advantage);
      kl += std::exp(lr - ln) - (lr - ln) - 1.0;
    }
    const double w = cfg.norm_mode == LengthNorm::kPerSequence
                         ? 1.0 / static_cast<double>(s.tokens.size())
                         : 1.0 / cfg.norm_constant;
    total += w * sur - cfg.beta * w * kl;
  }
  return total / static_cast<double>(samples.size());
}

TEST(TokenTerm, Examples) {
  const GrpoConfig cfg;
  EXPECT_NEAR(token_term(std::log(1.5), 0.0, 1.0, cfg), 1.28, 1e-12);
  EXPECT_NEAR(token_term(std::log(0.5), 0.0, -1.0, cfg), -0.8, 1e-12);
  for (double adv : {-3.0, -0.5, 0.0, 0.25, 4.0}) {
    EXPECT_DOUBLE_EQ(token_term(-0.7, -0.7, adv, cfg), adv);
  }
}

TEST(TokenTerm, SymmetricBandIsPpoClip) {
  GrpoConfig cfg;
  cfg.eps_low = cfg.eps_high = 0.2;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> lr(-1.0, 1.0), adv(-2.0, 2.0);
  for (int i = 0; i < 1000; ++i) {
    const double l = lr(rng), a = adv(rng);
    const double rho = std::exp(l);
    const double ppo = std::min(rho * a, std::clamp(rho, 0.8, 1.2) * a);
    EXPECT_NEAR(token_term(l, 0.0, a, cfg), ppo, 1e-12);
  }
}

TEST(TokenTerm, GradientMatchesFiniteDifferenceAwayFromKinks) {
  const GrpoConfig cfg;
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> lr(-0.6, 0.6), adv(-2.0, 2.0);
  const double h = 1e-6;
  for (int i = 0; i < 1000; ++i) {
    const double l = lr(rng), a = adv(rng);
    if (std::abs(l - std::log(0.8)) < 1e-3 || std::abs(l - std::log(1.28)) < 1e-3) continue;
    const double fd = (token_term(l + h, 0.0, a, cfg) - token_term(l - h, 0.0, a, cfg)) / (2 * h);
    EXPECT_NEAR(token_term_grad(l, 0.0, a, cfg), fd, 1e-6);
  }
}

TEST(KlEstimate, Examples) {
  EXPECT_EQ(kl_estimate(-1.3, -1.3), 0.0);
  EXPECT_NEAR(kl_estimate(0.0, std::log(2.0)), 2.0 - std::log(2.0) - 1.0, 1e-12);
  EXPECT_NEAR(kl_estimate(0.0, -std::log(2.0)), 0.5 + std::log(2.0) - 1.0, 1e-12);
  EXPECT_NEAR(kl_estimate(0.0, std::log(2.0)), 0.306853, 1e-6);
  EXPECT_NEAR(kl_estimate(0.0, -std::log(2.0)), 0.193147, 1e-6);
}

TEST(KlEstimate, NonnegativeAndGradient) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-3.0, 0.0);
  for (int i = 0; i < 1000; ++i) {
    const double n = u(rng), r = u(rng);
    EXPECT_GE(kl_estimate(n, r), 0.0);
    const double h = 1e-6;
    const double fd = (kl_estimate(n + h, r) - kl_estimate(n - h, r)) / (2 * h);
    EXPECT_NEAR(kl_estimate_grad(n, r), fd, 1e-6);
  }
}

SampleLogProbs uniform_sample(std::size_t len, double adv) {
  SampleLogProbs s;
  s.logp_new.assign(len, -1.0);
  s.logp_old.assign(len, -1.0);
  s.logp_ref.assign(len, -1.0);
  s.advantage = adv;
  return s;
}

TEST(BatchObjective, SingleSampleRatioOne) {
  const std::vector<SampleLogProbs> batch{uniform_sample(5, 2.0)};
  EXPECT_DOUBLE_EQ(batch_objective(batch, {}).objective, 2.0);
}

TEST(BatchObjective, LengthNormalizations) {
  // Token terms sum to 4 over 2 tokens and to 2 over 1 token.
  const std::vector<SampleLogProbs> batch{uniform_sample(2, 2.0), uniform_sample(1, 2.0)};
  GrpoConfig cfg;
  EXPECT_DOUBLE_EQ(batch_objective(batch, cfg).objective, 2.0);
  cfg.norm_mode = LengthNorm::kConstant;
  cfg.norm_constant = 2;
  EXPECT_DOUBLE_EQ(batch_objective(batch, cfg).objective, 1.5);
}

TEST(BatchObjective, Errors) {
  EXPECT_THROW(batch_objective(std::vector<SampleLogProbs>{}, {}), ContractViolation);
  auto bad = uniform_sample(2, 1.0);
  bad.logp_old.pop_back();
  EXPECT_THROW(batch_objective(std::vector<SampleLogProbs>{bad}, {}), ContractViolation);
  auto positive = uniform_sample(2, 1.0);
  positive.logp_new[0] = 0.1;
  EXPECT_THROW(batch_objective(std::vector<SampleLogProbs>{positive}, {}), ContractViolation);
}

std::vector<SampleLogProbs> random_batch(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> lp(-4.0, -0.01), adv(-2.0, 2.0);
  std::uniform_int_distribution<int> len(1, 9), count(1, 6);
  std::vector<SampleLogProbs> batch(static_cast<std::size_t>(count(rng)));
  for (auto& s : batch) {
    const auto n = static_cast<std::size_t>(len(rng));
    for (std::size_t t = 0; t < n; ++t) {
      s.logp_new.push_back(lp(rng));
      s.logp_old.push_back(lp(rng));
      s.logp_ref.push_back(lp(rng));
    }
    s.advantage = adv(rng);
  }
  return batch;
}

TEST(BatchObjectiveProperty, PermutationInvariant) {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 200; ++i) {
    auto batch = random_batch(rng);
    GrpoConfig cfg;
    cfg.beta = 0.01;
    const double a = batch_objective(batch, cfg).objective;
    std::shuffle(batch.begin(), batch.end(), rng);
    EXPECT_NEAR(batch_objective(batch, cfg).objective, a, 1e-12);
  }
}

TEST(BatchObjectiveProperty, BetaZeroDropsKlExactly) {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 200; ++i) {
    const auto batch = random_batch(rng);
    const auto r = batch_objective(batch, GrpoConfig{});
    double manual = 0.0;
    for (const auto& s : r.per_sample) {
      EXPECT_EQ(s.value, s.surrogate);
      manual += s.surrogate;
    }
    EXPECT_EQ(r.objective, manual / static_cast<double>(r.per_sample.size()));
  }
}

TEST(BatchObjectiveProperty, BitwiseReproducible) {
  std::mt19937_64 rng(14);
  const auto batch = random_batch(rng);
  GrpoConfig cfg;
  cfg.beta = 0.05;
  const double a = batch_objective(batch, cfg).objective;
  for (int i = 0; i < 10; ++i) EXPECT_EQ(batch_objective(batch, cfg).objective, a);
}

TEST(ClipGradNorm, Examples) {
  auto g = clip_grad_norm(std::vector<double>{3.0, 4.0}, 0.05);
  EXPECT_NEAR(g[0], 0.03, 1e-15);
  EXPECT_NEAR(g[1], 0.04, 1e-15);
  EXPECT_EQ(clip_grad_norm(std::vector<double>{0.01, 0.0}, 0.05), (std::vector<double>{0.01, 0.0}));
  EXPECT_EQ(clip_grad_norm(std::vector<double>{0.0, 0.0, 0.0}, 0.05), std::vector<double>(3, 0.0));
}

TEST(ClipGradNorm, BoundAndDirection) {
  std::mt19937_64 rng(15);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int i = 0; i < 500; ++i) {
    std::vector<double> g(1 + i % 20);
    for (auto& x : g) x = n(rng);
    const auto c = clip_grad_norm(g, 0.05);
    double norm = 0.0, dot = 0.0, gn = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) {
      norm += c[j] * c[j];
      dot += c[j] * g[j];
      gn += g[j] * g[j];
    }
    EXPECT_LE(std::sqrt(norm), 0.05 + 1e-12);
    if (gn > 0) EXPECT_NEAR(dot / std::sqrt(norm * gn), 1.0, 1e-12);
  }
}

struct Problem {
  ToyPolicy policy, old_policy, ref_policy;
  std::vector<ToySample> samples;
};

Problem random_problem(std::uint64_t seed, double old_spread, double ref_spread) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> len(1, 6), vocab(2, 8), count(1, 5);
  const auto L = static_cast<std::size_t>(len(rng));
  const auto V = static_cast<std::size_t>(vocab(rng));
  Problem p{ToyPolicy::random(L, V, seed), ToyPolicy(L, V), ToyPolicy(L, V), {}};
  p.old_policy = p.policy;
  p.ref_policy = p.policy;
  std::uniform_real_distribution<double> o(-old_spread, old_spread), r(-ref_spread, ref_spread);
  for (double& x : p.old_policy.logits()) x += o(rng);
  for (double& x : p.ref_policy.logits()) x += r(rng);
  std::uniform_int_distribution<int> tok(0, static_cast<int>(V) - 1);
  std::uniform_real_distribution<double> adv(-2.0, 2.0);
  const int n = count(rng);
  for (int i = 0; i < n; ++i) {
    ToySample s;
    for (std::size_t t = 0; t < L; ++t) s.tokens.push_back(tok(rng));
    s.advantage = adv(rng);
    p.samples.push_back(s);
  }
  return p;
}

TEST(ToyPolicy, SoftmaxSumsToOne) {
  const auto p = ToyPolicy::random(4, 7, 1, 3.0);
  for (std::size_t t = 0; t < 4; ++t) {
    const auto probs = p.softmax(t);
    EXPECT_NEAR(std::accumulate(probs.begin(), probs.end(), 0.0), 1.0, 1e-12);
    for (std::size_t v = 0; v < 7; ++v) EXPECT_NEAR(std::log(probs[v]), p.log_prob(t, v), 1e-12);
  }
}

TEST(ToyObjective, MatchesOracle) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto p = random_problem(seed, 0.5, 0.3);
    GrpoConfig cfg;
    cfg.beta = seed % 2 ? 0.01 : 0.0;
    const std::vector<double> logits(p.policy.logits().begin(), p.policy.logits().end());
    EXPECT_NEAR(toy_objective(p.policy, p.old_policy, p.ref_policy, p.samples, cfg),
                oracle_objective(logits, p.old_policy, p.ref_policy, p.samples, cfg), 1e-12);
  }
}

// Independent central differences on the oracle objective.
TEST(ToyGradient, MatchesOracleFiniteDifferences) {
  int checked = 0;
  for (std::uint64_t seed = 100; seed < 160; ++seed) {
    const auto p = random_problem(seed, seed % 2 ? 0.6 : 0.05, 0.3);
    GrpoConfig cfg;
    cfg.beta = (seed / 2) % 2 ? 0.01 : 0.0;
    cfg.norm_mode = (seed / 4) % 2 ? LengthNorm::kConstant : LengthNorm::kPerSequence;
    cfg.norm_constant = 8;
    // Skip problems with a ratio within 1e-3 (log space) of a clip boundary.
    bool near_kink = false;
    for (const auto& s : p.samples) {
      const auto ln = p.policy.sequence_log_probs(s.tokens);
      const auto lo = p.old_policy.sequence_log_probs(s.tokens);
      for (std::size_t t = 0; t < ln.size(); ++t) {
        const double d = ln[t] - lo[t];
        near_kink |= std::abs(d - std::log(0.8)) < 1e-3 || std::abs(d - std::log(1.28)) < 1e-3;
      }
    }
    if (near_kink) continue;
    ++checked;
    const auto grad = toy_objective_grad(p.policy, p.old_policy, p.ref_policy, p.samples, cfg);
    std::vector<double> logits(p.policy.logits().begin(), p.policy.logits().end());
    const double h = 1e-5;
    for (std::size_t i = 0; i < logits.size(); ++i) {
      const double keep = logits[i];
      logits[i] = keep + h;
      const double up = oracle_objective(logits, p.old_policy, p.ref_policy, p.samples, cfg);
      logits[i] = keep - h;
      const double down = oracle_objective(logits, p.old_policy, p.ref_policy, p.samples, cfg);
      logits[i] = keep;
      const double fd = (up - down) / (2 * h);
      const double rel = std::abs(grad[i] - fd) / std::max({std::abs(grad[i]), std::abs(fd), 1e-6});
      EXPECT_LT(rel, 1e-4) << "seed " << seed << " logit " << i;
    }
  }
  EXPECT_GT(checked, 40);
}

TEST(GradCheck, SeedSevenPasses) {
  const auto p = random_problem(7, 0.0, 0.0);
  const auto r = grad_check(p.policy, p.samples, GrpoConfig{});
  EXPECT_LT(r.max_rel_error, 1e-4);
  EXPECT_EQ(r.parameters, p.policy.logits().size());
}

TEST(GradCheck, KlGradientWithDistinctReference) {
  auto p = random_problem(21, 0.0, 0.5);
  GrpoConfig cfg;
  cfg.beta = 0.01;
  for (auto& s : p.samples) s.advantage = 0.0;
  const auto r = grad_check(p.policy, p.old_policy, p.ref_policy, p.samples, cfg);
  EXPECT_GT(r.analytic_norm, 0.0);
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(GradCheck, ZeroAdvantageGivesExactlyZeroGradient) {
  auto p = random_problem(3, 0.0, 0.0);
  for (auto& s : p.samples) s.advantage = 0.0;
  const auto g = toy_objective_grad(p.policy, p.policy, p.policy, p.samples, GrpoConfig{});
  for (double x : g) EXPECT_EQ(x, 0.0);
  EXPECT_EQ(grad_check(p.policy, p.samples, GrpoConfig{}).analytic_norm, 0.0);
}

// Inside the clip band the gradient is the plain importance-weighted policy
// gradient: sum_t w * rho_t * A * d log pi(y_t).
TEST(ToyGradient, UnclippedRegionIsPolicyGradient) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto p = random_problem(seed + 500, 0.02, 0.0);
    const GrpoConfig cfg;
    const auto grad = toy_objective_grad(p.policy, p.old_policy, p.ref_policy, p.samples, cfg);
    const std::size_t V = p.policy.vocab_size();
    std::vector<double> pg(grad.size(), 0.0);
    for (const auto& s : p.samples) {
      const double w = 1.0 / static_cast<double>(s.tokens.size());
      for (std::size_t t = 0; t < s.tokens.size(); ++t) {
        const auto y = static_cast<std::size_t>(s.tokens[t]);
        const double rho = std::exp(p.policy.log_prob(t, y) - p.old_policy.log_prob(t, y));
        ASSERT_GT(rho, 0.8);
        ASSERT_LT(rho, 1.28);
        const auto probs = p.policy.softmax(t);
        for (std::size_t v = 0; v < V; ++v) {
          pg[t * V + v] += w * rho * s.advantage * ((v == y ? 1.0 : 0.0) - probs[v]);
        }
      }
    }
    for (auto& x : pg) x /= static_cast<double>(p.samples.size());
    for (std::size_t i = 0; i < grad.size(); ++i) EXPECT_NEAR(grad[i], pg[i], 1e-12);
  }
}

// On-policy step, then an off-policy step with logp_old held fixed: the
// gradient stays exact and each clipped ascent step improves the objective.
TEST(ToyGradient, OffPolicySecondStep) {
  auto p = random_problem(42, 0.0, 0.0);
  const ToyPolicy old_policy = p.policy;
  GrpoConfig cfg;
  cfg.max_grad_norm = 0.05;
  for (int step = 0; step < 2; ++step) {
    const double before = toy_objective(p.policy, old_policy, p.ref_policy, p.samples, cfg);
    auto g = toy_objective_grad(p.policy, old_policy, p.ref_policy, p.samples, cfg);
    clip_grad_norm(std::span<double>(g), cfg.max_grad_norm);
    auto logits = p.policy.logits();
    for (std::size_t i = 0; i < g.size(); ++i) logits[i] += g[i];
    EXPECT_GT(toy_objective(p.policy, old_policy, p.ref_policy, p.samples, cfg), before);
    EXPECT_LT(grad_check(p.policy, old_policy, p.ref_policy, p.samples, cfg).max_rel_error, 1e-4);
  }
}

TEST(GrpoConfig, Validation) {
  EXPECT_NO_THROW(validate(GrpoConfig{}));
  GrpoConfig c;
  c.eps_low = 0.3;
  c.eps_high = 0.2;
  EXPECT_THROW(validate(c), ContractViolation);
  c = {};
  c.eps_high = 1.0;
  EXPECT_THROW(validate(c), ContractViolation);
  c = {};
  c.beta = -1e-3;
  EXPECT_THROW(validate(c), ContractViolation);
  EXPECT_EQ(to_json(GrpoConfig{})["kl_estimator"], std::string(kKlEstimator));
}

}  // namespace
}  // namespace krl
