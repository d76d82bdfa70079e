// Copyright (c) 2026 The krl Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include <CLI11.hpp>

#include "krl_cli/commands.hpp"

namespace {

template <typename T>
void assign_if_set(const CLI::Option* opt, const T& value, std::optional<T>& target) {
  if (opt->count() > 0) target = value;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace krl::cli;

  CLI::App app{"Multi-turn RL rollouts, evaluation reports and checks for kernel optimization"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every command");

  RolloutOptions rollout;
  std::string rollout_run_id;
  std::string rollout_runs_dir;
  std::size_t rollout_parallelism = 0;
  auto* rollout_cmd = app.add_subcommand("rollout", "Run training-step rollouts and persist them");
  rollout_cmd->add_option("config", rollout.config_path, "Run config JSON")->required()->check(CLI::ExistingFile);
  rollout_cmd->add_option("--steps", rollout.steps, "Number of steps to run")->capture_default_str();
  auto* run_id_opt = rollout_cmd->add_option("--run-id", rollout_run_id, "Override the config's run_id");
  auto* runs_dir_opt = rollout_cmd->add_option("--runs-dir", rollout_runs_dir, "Override the config's runs_dir");
  auto* par_opt = rollout_cmd->add_option("--parallelism", rollout_parallelism,
                                          "Cap on concurrent trajectories (0 = hardware)");
  rollout_cmd->add_flag("--resume", rollout.resume, "Continue an existing run after its last step");

  EvalOptions eval;
  std::uint64_t eval_step = 0;
  std::string eval_csv;
  std::string eval_json;
  auto* eval_cmd = app.add_subcommand("eval", "Correctness, performance and fast_p with best@k / avg@k");
  eval_cmd->add_option("run_id", eval.run_id, "Run to report on")->required();
  eval_cmd->add_option("--runs-dir", eval.runs_dir, "Directory holding runs")->capture_default_str();
  eval_cmd->add_option("--k", eval.k, "Trajectories per task")->capture_default_str();
  eval_cmd->add_option("--turns", eval.turns, "Turns per trajectory")->capture_default_str();
  eval_cmd->add_option("--thresholds", eval.thresholds, "fast_p thresholds")
      ->delimiter(',')
      ->capture_default_str();
  auto* eval_step_opt = eval_cmd->add_option("--step", eval_step, "Step to read (default: last)");
  auto* eval_csv_opt = eval_cmd->add_option("--csv", eval_csv, "Also write CSV here");
  auto* eval_json_opt = eval_cmd->add_option("--json", eval_json, "Also write JSON here");

  ScalingOptions scaling;
  std::uint64_t scaling_step = 0;
  std::string scaling_csv;
  std::string scaling_json;
  auto* scaling_cmd = app.add_subcommand("scaling", "Trajectories-vs-turns comparison at a fixed budget");
  scaling_cmd->add_option("run_id", scaling.run_id, "Run to report on")->required();
  scaling_cmd->add_option("--runs-dir", scaling.runs_dir, "Directory holding runs")->capture_default_str();
  scaling_cmd->add_option("--budget", scaling.budget, "Trajectories x turns per task")->capture_default_str();
  scaling_cmd->add_option("--configs", scaling.configs, "Configs as TRAJxTURNS")
      ->delimiter(',')
      ->capture_default_str();
  auto* scaling_step_opt = scaling_cmd->add_option("--step", scaling_step, "Step to read (default: last)");
  auto* scaling_csv_opt = scaling_cmd->add_option("--csv", scaling_csv, "Also write CSV here");
  auto* scaling_json_opt = scaling_cmd->add_option("--json", scaling_json, "Also write JSON here");

  GradcheckOptions gradcheck;
  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "Finite-difference check of the GRPO gradient");
  gradcheck_cmd->add_option("--seed", gradcheck.seed, "Seed for the random toy policies")->capture_default_str();
  gradcheck_cmd->add_option("--trials", gradcheck.trials, "Number of random problems")->capture_default_str();
  gradcheck_cmd->add_option("--step-size", gradcheck.h, "Central difference step")->capture_default_str();
  gradcheck_cmd->add_option("--tolerance", gradcheck.tolerance, "Max relative error")->capture_default_str();
  gradcheck_cmd->add_flag("--zero-advantages", gradcheck.zero_advantages,
                          "Zero every advantage and require a zero gradient");

  GuardLintOptions lint;
  std::string lint_rules;
  auto* lint_cmd = app.add_subcommand("guard-lint", "Run the reward-hacking guardrails on a file");
  lint_cmd->add_option("file", lint.file, "Candidate source")->required();
  auto* lint_rules_opt = lint_cmd->add_option("--rules", lint_rules, "Rule set JSON (default rules if absent)");
  lint_cmd->add_option("--entry-class", lint.entry_class, "Class the candidate must define ('' to skip)")
      ->capture_default_str();
  lint_cmd->add_flag("--strict", lint.strict, "Ban the empty-class token outright");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  if (rollout_cmd->parsed()) {
    if (run_id_opt->count() > 0) rollout.run_id = rollout_run_id;
    if (runs_dir_opt->count() > 0) rollout.runs_dir = std::filesystem::path(rollout_runs_dir);
    assign_if_set(par_opt, rollout_parallelism, rollout.parallelism);
    return cmd_rollout(rollout, std::cout, std::cerr);
  }
  if (eval_cmd->parsed()) {
    assign_if_set(eval_step_opt, eval_step, eval.step);
    if (eval_csv_opt->count() > 0) eval.csv_path = eval_csv;
    if (eval_json_opt->count() > 0) eval.json_path = eval_json;
    return cmd_eval(eval, std::cout, std::cerr);
  }
  if (scaling_cmd->parsed()) {
    assign_if_set(scaling_step_opt, scaling_step, scaling.step);
    if (scaling_csv_opt->count() > 0) scaling.csv_path = scaling_csv;
    if (scaling_json_opt->count() > 0) scaling.json_path = scaling_json;
    return cmd_scaling(scaling, std::cout, std::cerr);
  }
  if (gradcheck_cmd->parsed()) return cmd_gradcheck(gradcheck, std::cout, std::cerr);
  if (lint_cmd->parsed()) {
    if (lint_rules_opt->count() > 0) lint.rules_path = std::filesystem::path(lint_rules);
    return cmd_guard_lint(lint, std::cout, std::cerr);
  }
  return kExitConfig;
}
