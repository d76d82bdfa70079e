// Copyright (c) 2026 The krl Authors
// SPDX-License-Identifier: Apache-2.0

#include "krl/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "krl/errors.hpp"
#include "krl/seed.hpp"

namespace krl {

std::string_view to_string(LengthNorm mode) {
  return mode == LengthNorm::kPerSequence ? "per_sequence" : "constant";
}

LengthNorm parse_length_norm(std::string_view name) {
  if (name == "per_sequence") return LengthNorm::kPerSequence;
  if (name == "constant") return LengthNorm::kConstant;
  throw ContractViolation(fmt::format("unknown length normalization '{}'", name));
}

void validate(const GrpoConfig& cfg) {
  if (!(cfg.eps_low > 0.0 && cfg.eps_low <= cfg.eps_high && cfg.eps_high < 1.0)) {
    throw ContractViolation(fmt::format(
        "clip range needs 0 < eps_low <= eps_high < 1, got {} / {}", cfg.eps_low, cfg.eps_high));
  }
  if (!(cfg.beta >= 0.0)) throw ContractViolation("beta must be nonnegative");
  if (cfg.norm_constant <= 0) throw ContractViolation("norm_constant must be positive");
  if (!(cfg.max_grad_norm > 0.0)) throw ContractViolation("max_grad_norm must be positive");
  if (!(cfg.temperature > 0.0)) throw ContractViolation("temperature must be positive");
}

nlohmann::json to_json(const GrpoConfig& cfg) {
  return {{"eps_low", cfg.eps_low},
          {"eps_high", cfg.eps_high},
          {"beta", cfg.beta},
          {"kl_estimator", std::string(kKlEstimator)},
          {"norm_mode", std::string(to_string(cfg.norm_mode))},
          {"norm_constant", cfg.norm_constant},
          {"max_grad_norm", cfg.max_grad_norm},
          {"temperature", cfg.temperature}};
}

double token_term(double logp_new, double logp_old, double adv, const GrpoConfig& cfg) {
  const double ratio = std::exp(logp_new - logp_old);
  const double clipped = std::clamp(ratio, 1.0 - cfg.eps_low, 1.0 + cfg.eps_high);
  return std::min(ratio * adv, clipped * adv);
}

double token_term_grad(double logp_new, double logp_old, double adv, const GrpoConfig& cfg) {
  const double ratio = std::exp(logp_new - logp_old);
  const double clipped = std::clamp(ratio, 1.0 - cfg.eps_low, 1.0 + cfg.eps_high);
  return ratio * adv <= clipped * adv ? ratio * adv : 0.0;
}

double kl_estimate(double logp_new, double logp_ref) {
  const double d = logp_ref - logp_new;
  return std::exp(d) - d - 1.0;
}

double kl_estimate_grad(double logp_new, double logp_ref) {
  return 1.0 - std::exp(logp_ref - logp_new);
}

namespace {

double sample_weight(std::size_t length, const GrpoConfig& cfg) {
  return cfg.norm_mode == LengthNorm::kPerSequence
             ? 1.0 / static_cast<double>(length)
             : 1.0 / static_cast<double>(cfg.norm_constant);
}

}  // namespace

BatchObjective batch_objective(std::span<const SampleLogProbs> samples, const GrpoConfig& cfg) {
  validate(cfg);
  if (samples.empty()) throw ContractViolation("batch_objective needs a nonempty batch");
  BatchObjective out;
  out.per_sample.reserve(samples.size());
  double total = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const std::size_t len = s.logp_new.size();
    if (len == 0 || s.logp_old.size() != len || s.logp_ref.size() != len) {
      throw ContractViolation(fmt::format("sample {} has mismatched or empty log-prob lists", i));
    }
    double surrogate = 0.0;
    double kl = 0.0;
    std::size_t clipped = 0;
    for (std::size_t t = 0; t < len; ++t) {
      if (s.logp_new[t] > 0.0 || s.logp_old[t] > 0.0 || s.logp_ref[t] > 0.0) {
        throw ContractViolation(fmt::format("sample {} token {} has a positive log-prob", i, t));
      }
      surrogate += token_term(s.logp_new[t], s.logp_old[t], s.advantage, cfg);
      if (cfg.beta != 0.0) kl += kl_estimate(s.logp_new[t], s.logp_ref[t]);
      const double ratio = std::exp(s.logp_new[t] - s.logp_old[t]);
      if (ratio < 1.0 - cfg.eps_low || ratio > 1.0 + cfg.eps_high) ++clipped;
    }
    const double w = sample_weight(len, cfg);
    SampleObjective so;
    so.surrogate = w * surrogate;
    so.kl = w * kl;
    so.value = cfg.beta != 0.0 ? so.surrogate - cfg.beta * so.kl : so.surrogate;
    so.clipped_fraction = static_cast<double>(clipped) / static_cast<double>(len);
    total += so.value;
    out.per_sample.push_back(so);
  }
  out.objective = total / static_cast<double>(samples.size());
  return out;
}

double clip_grad_norm(std::span<double> grads, double max_norm) {
  double ss = 0.0;
  for (double g : grads) ss += g * g;
  const double norm = std::sqrt(ss);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (double& g : grads) g *= scale;
  }
  return norm;
}

std::vector<double> clip_grad_norm(std::vector<double> grads, double max_norm) {
  clip_grad_norm(std::span<double>(grads), max_norm);
  return grads;
}

ToyPolicy::ToyPolicy(std::size_t seq_len, std::size_t vocab_size)
    : seq_len_(seq_len), vocab_size_(vocab_size), logits_(seq_len * vocab_size, 0.0) {
  if (seq_len == 0 || vocab_size == 0) {
    throw ContractViolation("toy policy needs positive seq_len and vocab_size");
  }
}

ToyPolicy ToyPolicy::random(std::size_t seq_len, std::size_t vocab_size, std::uint64_t seed,
                            double scale) {
  ToyPolicy p(seq_len, vocab_size);
  SeededRng rng(seed);
  for (double& z : p.logits_) z = rng.uniform(-scale, scale);
  return p;
}

double& ToyPolicy::logit(std::size_t position, std::size_t symbol) {
  return logits_[position * vocab_size_ + symbol];
}

double ToyPolicy::logit(std::size_t position, std::size_t symbol) const {
  return logits_[position * vocab_size_ + symbol];
}

std::vector<double> ToyPolicy::softmax(std::size_t position) const {
  std::vector<double> p(vocab_size_);
  double mx = logit(position, 0);
  for (std::size_t v = 1; v < vocab_size_; ++v) mx = std::max(mx, logit(position, v));
  double z = 0.0;
  for (std::size_t v = 0; v < vocab_size_; ++v) {
    p[v] = std::exp(logit(position, v) - mx);
    z += p[v];
  }
  for (double& x : p) x /= z;
  return p;
}

double ToyPolicy::log_prob(std::size_t position, std::size_t symbol) const {
  double mx = logit(position, 0);
  for (std::size_t v = 1; v < vocab_size_; ++v) mx = std::max(mx, logit(position, v));
  double z = 0.0;
  for (std::size_t v = 0; v < vocab_size_; ++v) z += std::exp(logit(position, v) - mx);
  return logit(position, symbol) - mx - std::log(z);
}

std::vector<double> ToyPolicy::sequence_log_probs(std::span<const int> tokens) const {
  if (tokens.size() > seq_len_) throw ContractViolation("sequence longer than the toy policy");
  std::vector<double> out(tokens.size());
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const int y = tokens[t];
    if (y < 0 || static_cast<std::size_t>(y) >= vocab_size_) {
      throw ContractViolation(fmt::format("token {} outside the vocabulary", y));
    }
    out[t] = log_prob(t, static_cast<std::size_t>(y));
  }
  return out;
}

namespace {

std::vector<SampleLogProbs> toy_log_probs(const ToyPolicy& policy, const ToyPolicy& old_policy,
                                          const ToyPolicy& ref_policy,
                                          std::span<const ToySample> samples) {
  std::vector<SampleLogProbs> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    out.push_back({policy.sequence_log_probs(s.tokens), old_policy.sequence_log_probs(s.tokens),
                   ref_policy.sequence_log_probs(s.tokens), s.advantage});
  }
  return out;
}

}  // namespace

double toy_objective(const ToyPolicy& policy, const ToyPolicy& old_policy,
                     const ToyPolicy& ref_policy, std::span<const ToySample> samples,
                     const GrpoConfig& cfg) {
  const auto batch = toy_log_probs(policy, old_policy, ref_policy, samples);
  return batch_objective(batch, cfg).objective;
}

std::vector<double> toy_objective_grad(const ToyPolicy& policy, const ToyPolicy& old_policy,
                                       const ToyPolicy& ref_policy,
                                       std::span<const ToySample> samples,
                                       const GrpoConfig& cfg) {
  validate(cfg);
  if (samples.empty()) throw ContractViolation("gradient needs a nonempty batch");
  const auto batch = toy_log_probs(policy, old_policy, ref_policy, samples);
  const std::size_t vocab = policy.vocab_size();
  std::vector<double> grad(policy.logits().size(), 0.0);
  const double inv_g = 1.0 / static_cast<double>(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = batch[i];
    const double w = sample_weight(s.logp_new.size(), cfg) * inv_g;
    for (std::size_t t = 0; t < s.logp_new.size(); ++t) {
      // d(objective)/d(logp_new[t])
      double d = token_term_grad(s.logp_new[t], s.logp_old[t], s.advantage, cfg);
      if (cfg.beta != 0.0) d -= cfg.beta * kl_estimate_grad(s.logp_new[t], s.logp_ref[t]);
      d *= w;
      if (d == 0.0) continue;
      const auto probs = policy.softmax(t);
      const auto y = static_cast<std::size_t>(samples[i].tokens[t]);
      for (std::size_t v = 0; v < vocab; ++v) {
        grad[t * vocab + v] += d * ((v == y ? 1.0 : 0.0) - probs[v]);
      }
    }
  }
  return grad;
}

GradCheckReport grad_check(const ToyPolicy& policy, const ToyPolicy& old_policy,
                           const ToyPolicy& ref_policy, std::span<const ToySample> samples,
                           const GrpoConfig& cfg, double h) {
  const auto analytic = toy_objective_grad(policy, old_policy, ref_policy, samples, cfg);
  GradCheckReport report;
  report.parameters = analytic.size();
  ToyPolicy probe = policy;
  double norm_sq = 0.0;
  for (std::size_t k = 0; k < analytic.size(); ++k) {
    const double a = analytic[k];
    if (!std::isfinite(a)) {
      throw std::runtime_error(fmt::format("non-finite analytic gradient at parameter {}", k));
    }
    norm_sq += a * a;
    const double saved = probe.logits()[k];
    probe.logits()[k] = saved + h;
    const double plus = toy_objective(probe, old_policy, ref_policy, samples, cfg);
    probe.logits()[k] = saved - h;
    const double minus = toy_objective(probe, old_policy, ref_policy, samples, cfg);
    probe.logits()[k] = saved;
    const double numeric = (plus - minus) / (2.0 * h);
    if (!std::isfinite(numeric)) {
      throw std::runtime_error(fmt::format("non-finite numeric gradient at parameter {}", k));
    }
    const double abs_err = std::abs(a - numeric);
    const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), kGradCheckFloor});
    report.max_abs_error = std::max(report.max_abs_error, abs_err);
    report.max_rel_error = std::max(report.max_rel_error, rel);
  }
  report.analytic_norm = std::sqrt(norm_sq);
  return report;
}

GradCheckReport grad_check(const ToyPolicy& policy, std::span<const ToySample> samples,
                           const GrpoConfig& cfg, double h) {
  return grad_check(policy, policy, policy, samples, cfg, h);
}

}  // namespace krl
