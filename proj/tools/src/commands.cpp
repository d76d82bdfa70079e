// Copyright (c) 2026 The krl Authors
// SPDX-License-Identifier: Apache-2.0

#include "krl_cli/commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ostream.h>
#include <nlohmann/json.hpp>

#include "krl/errors.hpp"
#include "krl/guardrails.hpp"
#include "krl/metrics.hpp"
#include "krl/rollout.hpp"
#include "krl/seed.hpp"
#include "krl/store.hpp"
#include "krl_cli/run_config.hpp"

namespace krl::cli {
namespace {

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError(fmt::format("cannot write '{}'", path.string()));
  out << content;
}

void emit_report(const Report& report, const std::optional<std::filesystem::path>& csv,
                 const std::optional<std::filesystem::path>& json, std::ostream& out) {
  report.write_text(out);
  if (csv) {
    std::ostringstream s;
    report.write_csv(s);
    write_file(*csv, s.str());
  }
  if (json) write_file(*json, report.to_json().dump(2) + "\n");
}

TaskTrajectories load_step(const std::filesystem::path& runs_dir, const std::string& run_id,
                           std::optional<std::uint64_t> step) {
  const RunStore store = RunStore::open(runs_dir, run_id);
  if (!step) step = store.last_step();
  if (!step) throw ShortfallError("", fmt::format("run '{}' has no stored turns", run_id));
  ScanFilter filter;
  filter.step = step;
  const auto rows = store.scan(filter);
  if (rows.empty()) {
    throw ShortfallError("", fmt::format("run '{}' has no turns at step {}", run_id, *step));
  }
  return group_trajectories(rows);
}

// Runs `body` and maps the error taxonomy onto exit codes.
template <typename Body>
int guarded(std::ostream& err, Body body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    fmt::print(err, "config error: {}\n", e.what());
    return kExitConfig;
  } catch (const ContractViolation& e) {
    fmt::print(err, "invalid argument: {}\n", e.what());
    return kExitConfig;
  } catch (const ShortfallError& e) {
    if (e.task_id().empty()) {
      fmt::print(err, "data shortfall: {}\n", e.what());
    } else {
      fmt::print(err, "data shortfall in task '{}': {}\n", e.task_id(), e.what());
    }
    return kExitShortfall;
  } catch (const NotFoundError& e) {
    fmt::print(err, "not found: {}\n", e.what());
    return kExitShortfall;
  } catch (const RolloutAborted& e) {
    fmt::print(err, "rollout aborted: {} ({} trajectories finished)\n", e.what(),
               e.partial().size());
    return kExitFailure;
  } catch (const std::exception& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitFailure;
  }
}

// Distance of log(rho) from the nearest clip boundary.
double boundary_margin(double log_ratio, const GrpoConfig& cfg) {
  return std::min(std::abs(log_ratio - std::log1p(-cfg.eps_low)),
                  std::abs(log_ratio - std::log1p(cfg.eps_high)));
}

}  // namespace

int cmd_rollout(const RolloutOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    RunConfig cfg = load_run_config(options.config_path);
    if (options.run_id) cfg.run_id = *options.run_id;
    if (options.runs_dir) cfg.runs_dir = *options.runs_dir;
    if (options.parallelism) cfg.parallelism = *options.parallelism;
    // Overrides are plumbing, not experiment settings; keep them out of the
    // comparison on resume but record them.
    nlohmann::json snapshot = cfg.snapshot;
    snapshot["run_id"] = cfg.run_id;
    snapshot["runs_dir"] = cfg.runs_dir.string();
    snapshot["parallelism"] = cfg.parallelism;

    RunSetup setup = build_run_setup(cfg);

    std::uint64_t first_step = 0;
    std::optional<RunStore> store;
    if (options.resume) {
      store.emplace(RunStore::open(cfg.runs_dir, cfg.run_id));
      nlohmann::json stored = store->record().config;
      nlohmann::json current = snapshot;
      for (auto* doc : {&stored, &current}) {
        doc->erase("runs_dir");
        doc->erase("parallelism");
      }
      if (stored != current) {
        throw ConfigError(fmt::format("run '{}' was created with a different config", cfg.run_id));
      }
      if (const auto last = store->last_step()) first_step = *last + 1;
    } else {
      if (std::filesystem::exists(cfg.runs_dir / cfg.run_id)) {
        throw ConfigError(fmt::format("run '{}' already exists in '{}'; pass --resume to continue it",
                                      cfg.run_id, cfg.runs_dir.string()));
      }
      RunRecord record;
      record.run_id = cfg.run_id;
      record.config = snapshot;
      record.seed = cfg.seed;
      store.emplace(RunStore::create(cfg.runs_dir, std::move(record)));
    }

    fmt::print(out, "run {} ({} tasks, m={}, n={}, policy {})\n", cfg.run_id, setup.tasks.size(),
               cfg.m, cfg.n, setup.policy->id());
    for (std::uint64_t step = first_step; step < first_step + options.steps; ++step) {
      const RolloutConfig rc = rollout_config(cfg, setup.context, step);
      const StepResult result = run_training_step(setup.tasks, *setup.policy, *setup.executor, rc);
      for (const auto& sample : result.samples) {
        store->append_turn(make_turn_row(cfg.run_id, step, sample));
        if (cfg.store_cot) store->append_cot(step, sample);
      }
      store->append_stats(result.stats, step);
      const StepStats& s = result.stats;
      fmt::print(out,
                 "step {:>4}  samples {:>5}  mean_reward {:.4f}  correct_rate {:.4f}  "
                 "not_okay_ratio {:.4f}  clipping_ratio {:.4f}\n",
                 step, s.samples, s.mean_reward, s.correct_rate, s.not_okay_ratio,
                 s.clipping_ratio);
      out.flush();
    }
    return kExitOk;
  });
}

int cmd_eval(const EvalOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (options.k == 0) throw ConfigError("--k must be positive");
    if (options.turns == 0) throw ConfigError("--turns must be positive");
    const TaskTrajectories data = load_step(options.runs_dir, options.run_id, options.step);
    EvalTableOptions table;
    table.k = options.k;
    table.turns = options.turns;
    table.thresholds = options.thresholds;
    Report report = eval_table(data, table);
    report.title = fmt::format("{} ({} tasks)", options.run_id, data.size());
    emit_report(report, options.csv_path, options.json_path, out);
    return kExitOk;
  });
}

int cmd_scaling(const ScalingOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    std::vector<ScalingConfig> configs;
    for (const auto& text : options.configs) configs.push_back(parse_scaling_config(text));
    const TaskTrajectories data = load_step(options.runs_dir, options.run_id, options.step);
    Report report = scaling_report(data, configs, options.budget);
    report.title = fmt::format("{} (budget {})", options.run_id, options.budget);
    emit_report(report, options.csv_path, options.json_path, out);
    return kExitOk;
  });
}

GradcheckCase make_gradcheck_case(std::uint64_t seed, std::size_t trial, bool zero_advantages) {
  const bool clip_active = trial % 2 == 1;
  GrpoConfig cfg;
  cfg.beta = zero_advantages ? 0.0 : ((trial / 2) % 2 == 1 ? 0.01 : 0.0);
  cfg.norm_mode = (trial / 4) % 2 == 1 ? LengthNorm::kConstant : LengthNorm::kPerSequence;
  cfg.norm_constant = 8;

  for (std::uint64_t attempt = 0;; ++attempt) {
    SeededRng rng(hash_combine(hash_combine(seed, trial), attempt));
    const std::size_t seq_len = 1 + rng.below(6);
    const std::size_t vocab = 2 + rng.below(7);
    GradcheckCase c{ToyPolicy::random(seq_len, vocab, rng.next()),
                    ToyPolicy(seq_len, vocab), ToyPolicy(seq_len, vocab), {}, cfg, clip_active};
    const double spread = clip_active ? 0.6 : 0.03;
    c.old_policy = c.policy;
    c.ref_policy = c.policy;
    for (double& v : c.old_policy.logits()) v += rng.uniform(-spread, spread);
    for (double& v : c.ref_policy.logits()) v += rng.uniform(-0.3, 0.3);

    const std::size_t count = 2 + rng.below(4);
    bool ok = true;
    bool any_clipped = false;
    for (std::size_t i = 0; i < count && ok; ++i) {
      ToySample s;
      for (std::size_t t = 0; t < seq_len; ++t) s.tokens.push_back(static_cast<int>(rng.below(vocab)));
      s.advantage = zero_advantages ? 0.0 : rng.uniform(-2.0, 2.0);
      const auto lp_new = c.policy.sequence_log_probs(s.tokens);
      const auto lp_old = c.old_policy.sequence_log_probs(s.tokens);
      for (std::size_t t = 0; t < seq_len; ++t) {
        const double log_ratio = lp_new[t] - lp_old[t];
        if (boundary_margin(log_ratio, cfg) < 1e-3) ok = false;
        const bool outside =
            log_ratio < std::log1p(-cfg.eps_low) || log_ratio > std::log1p(cfg.eps_high);
        if (!clip_active && outside) ok = false;
        if (outside && std::abs(s.advantage) > 1e-3 &&
            token_term_grad(lp_new[t], lp_old[t], s.advantage, cfg) == 0.0) {
          any_clipped = true;
        }
      }
      c.samples.push_back(std::move(s));
    }
    if (!ok) continue;
    if (clip_active && !any_clipped && !zero_advantages) continue;
    return c;
  }
}

int cmd_gradcheck(const GradcheckOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (options.trials == 0) {
      fmt::print(err, "warning: 0 trials requested; nothing was checked\n");
      fmt::print(out, "gradcheck: 0 trials, pass (vacuous)\n");
      return kExitOk;
    }
    if (!(options.h > 0.0)) throw ConfigError("--step-size must be positive");
    double worst = 0.0;
    double worst_abs = 0.0;
    double max_norm = 0.0;
    std::size_t failures = 0;
    for (std::size_t trial = 0; trial < options.trials; ++trial) {
      const GradcheckCase c = make_gradcheck_case(options.seed, trial, options.zero_advantages);
      const GradCheckReport r = grad_check(c.policy, c.old_policy, c.ref_policy, c.samples,
                                           c.cfg, options.h);
      worst = std::max(worst, r.max_rel_error);
      worst_abs = std::max(worst_abs, r.max_abs_error);
      max_norm = std::max(max_norm, r.analytic_norm);
      if (r.max_rel_error >= options.tolerance) {
        ++failures;
        fmt::print(err, "trial {}: max_rel_error {:.3e} (beta {}, clip {})\n", trial,
                   r.max_rel_error, c.cfg.beta, c.clip_active ? "active" : "inactive");
      }
    }
    fmt::print(out, "gradcheck: seed {} trials {} h {:g}\n", options.seed, options.trials, options.h);
    fmt::print(out, "  max_rel_error {:.3e}  max_abs_error {:.3e}  max_grad_norm {:.6g}\n", worst,
               worst_abs, max_norm);
    if (options.zero_advantages) {
      fmt::print(out, "  gradient {} with zero advantages\n",
                 max_norm == 0.0 ? "exactly 0" : "NONZERO");
      if (max_norm != 0.0) return kExitCheck;
    }
    fmt::print(out, "  {} ({} of {} trials at or above {:g})\n", failures == 0 ? "pass" : "FAIL",
               failures, options.trials, options.tolerance);
    return failures == 0 ? kExitOk : kExitCheck;
  });
}

int cmd_guard_lint(const GuardLintOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    std::ifstream in(options.file, std::ios::binary);
    if (!in) throw ConfigError(fmt::format("cannot read '{}'", options.file.string()));
    const std::string source{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};

    RuleSet rules;
    if (options.rules_path) {
      std::ifstream rf(*options.rules_path);
      if (!rf) throw ConfigError(fmt::format("cannot read '{}'", options.rules_path->string()));
      try {
        rules = RuleSet::from_json(nlohmann::json::parse(rf));
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError(fmt::format("rules: {}", e.what()));
      }
    } else {
      rules = default_rules({options.entry_class});
    }

    const GuardVerdict verdict = check_candidate(source, rules, {options.strict});
    if (verdict.accepted) {
      fmt::print(out, "{}: accepted\n", options.file.string());
      return kExitOk;
    }
    fmt::print(out, "{}: rejected ({})\n", options.file.string(), verdict.summary());
    for (const auto& v : verdict.violations) {
      const auto begin = source.begin() + static_cast<std::ptrdiff_t>(v.span.begin);
      const auto line = 1 + std::count(source.begin(), begin, '\n');
      std::size_t col = v.span.begin + 1;
      if (v.span.begin > 0) {
        const auto nl = source.rfind('\n', v.span.begin - 1);
        if (nl != std::string::npos) col = v.span.begin - nl;
      }
      const std::string match = source.substr(v.span.begin, v.span.end - v.span.begin);
      fmt::print(out, "  {}:{}:{}: {}{}\n", options.file.string(), line, col, v.rule_id,
                 match.empty() ? std::string() : fmt::format(" '{}'", match));
    }
    return kExitCheck;
  });
}

}  // namespace krl::cli
