// Copyright (c) 2026 The krl Authors
// SPDX-License-Identifier: Apache-2.0
//
// GRPO clipped surrogate objective with asymmetric ("clip-higher") ratio
// bounds, an optional per-token KL penalty, and two length normalizations.
//
// Summation order is fixed (samples in order, then tokens in order), so the
// results are bitwise reproducible.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace krl {

enum class LengthNorm {
  kPerSequence,  // weight 1/|o_i|
  kConstant,     // weight 1/norm_constant
};

std::string_view to_string(LengthNorm mode);
LengthNorm parse_length_norm(std::string_view name);

struct GrpoConfig {
  double eps_low = 0.2;
  double eps_high = 0.28;
  double beta = 0.0;
  LengthNorm norm_mode = LengthNorm::kPerSequence;
  // Defaults to the maximum response length.
  int norm_constant = 16384;
  double max_grad_norm = 0.05;
  double temperature = 0.9;
};

// Throws ContractViolation unless 0 < eps_low <= eps_high < 1, beta >= 0 and
// the remaining fields are positive.
void validate(const GrpoConfig& cfg);

nlohmann::json to_json(const GrpoConfig& cfg);

// Name of the per-token KL estimator (recorded alongside configs).
inline constexpr std::string_view kKlEstimator =
    "k3: exp(ref-new) - (ref-new) - 1";

// min(rho * adv, clip(rho, 1 - eps_low, 1 + eps_high) * adv),
// rho = exp(logp_new - logp_old).
double token_term(double logp_new, double logp_old, double adv,
                  const GrpoConfig& cfg);

// d token_term / d logp_new. Zero where the clipped branch is selected.
double token_term_grad(double logp_new, double logp_old, double adv,
                       const GrpoConfig& cfg);

// Nonnegative per-token KL estimate of KL(new || ref).
double kl_estimate(double logp_new, double logp_ref);
double kl_estimate_grad(double logp_new, double logp_ref);

struct SampleLogProbs {
  std::vector<double> logp_new;
  std::vector<double> logp_old;
  std::vector<double> logp_ref;
  double advantage = 0.0;
};

struct SampleObjective {
  double surrogate = 0.0;  // weighted sum of token terms
  double kl = 0.0;         // weighted sum of token KL estimates
  double value = 0.0;      // surrogate - beta * kl
  double clipped_fraction = 0.0;
};

struct BatchObjective {
  double objective = 0.0;  // mean of per_sample[i].value
  std::vector<SampleObjective> per_sample;
};

// Throws ContractViolation on an empty batch or malformed samples.
BatchObjective batch_objective(std::span<const SampleLogProbs> samples,
                               const GrpoConfig& cfg);

// Scales grads so that their L2 norm is at most max_norm. Returns the norm
// before clipping.
double clip_grad_norm(std::span<double> grads, double max_norm);
std::vector<double> clip_grad_norm(std::vector<double> grads, double max_norm);

// Position-wise categorical policy: token t is drawn from softmax(logits[t]).
// Small stand-in for a language model when checking gradients.
class ToyPolicy {
 public:
  ToyPolicy(std::size_t seq_len, std::size_t vocab_size);
  // Logits drawn uniformly from [-scale, scale].
  static ToyPolicy random(std::size_t seq_len, std::size_t vocab_size,
                          std::uint64_t seed, double scale = 1.0);

  std::size_t seq_len() const { return seq_len_; }
  std::size_t vocab_size() const { return vocab_size_; }

  double& logit(std::size_t position, std::size_t symbol);
  double logit(std::size_t position, std::size_t symbol) const;
  std::span<double> logits() { return logits_; }
  std::span<const double> logits() const { return logits_; }

  double log_prob(std::size_t position, std::size_t symbol) const;
  std::vector<double> softmax(std::size_t position) const;
  std::vector<double> sequence_log_probs(std::span<const int> tokens) const;

 private:
  std::size_t seq_len_;
  std::size_t vocab_size_;
  std::vector<double> logits_;  // row-major [position][symbol]
};

struct ToySample {
  std::vector<int> tokens;
  double advantage = 0.0;
};

// Objective of `samples` under `policy`, with old/ref log-probs taken from the
// frozen policies.
double toy_objective(const ToyPolicy& policy, const ToyPolicy& old_policy,
                     const ToyPolicy& ref_policy,
                     std::span<const ToySample> samples, const GrpoConfig& cfg);

// Analytic gradient of toy_objective with respect to every logit of `policy`
// (same layout as ToyPolicy::logits()).
std::vector<double> toy_objective_grad(const ToyPolicy& policy,
                                       const ToyPolicy& old_policy,
                                       const ToyPolicy& ref_policy,
                                       std::span<const ToySample> samples,
                                       const GrpoConfig& cfg);

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  double analytic_norm = 0.0;
  std::size_t parameters = 0;
};

// Denominator floor of the relative error |a - n| / max(|a|, |n|, floor).
inline constexpr double kGradCheckFloor = 1e-6;

// Compares the analytic gradient with central finite differences of step h.
// Throws std::runtime_error on a non-finite gradient.
GradCheckReport grad_check(const ToyPolicy& policy, const ToyPolicy& old_policy,
                           const ToyPolicy& ref_policy,
                           std::span<const ToySample> samples,
                           const GrpoConfig& cfg, double h = 1e-5);

// Old and reference policies are frozen copies of `policy`.
GradCheckReport grad_check(const ToyPolicy& policy,
                           std::span<const ToySample> samples,
                           const GrpoConfig& cfg, double h = 1e-5);

}  // namespace krl
