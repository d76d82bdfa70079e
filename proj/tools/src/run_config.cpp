// Copyright (c) 2026 The krl Authors
// SPDX-License-Identifier: Apache-2.0

#include "krl_cli/run_config.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <fmt/format.h>

#include "krl/errors.hpp"
#include "krl/guardrails.hpp"
#include "krl/http_policy.hpp"

namespace krl::cli {
namespace {

using nlohmann::json;

// Reads one JSON object, remembering which keys were consumed so that
// anything left over can be reported as unknown.
class Fields {
 public:
  Fields(const json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
    if (!doc_.is_object()) fail("", "must be an object");
  }

  [[noreturn]] void fail(std::string_view key, std::string_view what) const {
    throw ConfigError(fmt::format("{}: {}", name(key), what));
  }

  std::string name(std::string_view key) const {
    if (path_.empty()) return std::string(key);
    if (key.empty()) return path_;
    return fmt::format("{}.{}", path_, key);
  }

  const json* find(const std::string& key) {
    seen_.insert(key);
    const auto it = doc_.find(key);
    return it == doc_.end() ? nullptr : &*it;
  }

  double real(const std::string& key, double fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_number()) fail(key, "must be a number");
    return v->get<double>();
  }

  std::int64_t integer(const std::string& key, std::int64_t fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_number_integer()) fail(key, "must be an integer");
    return v->get<std::int64_t>();
  }

  std::uint64_t unsigned_integer(const std::string& key, std::uint64_t fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (v->is_number_unsigned()) return v->get<std::uint64_t>();
    if (v->is_number_integer() && v->get<std::int64_t>() >= 0) return v->get<std::uint64_t>();
    fail(key, "must be a nonnegative integer");
  }

  int positive(const std::string& key, int fallback) {
    const std::int64_t v = integer(key, fallback);
    if (v <= 0 || v > 1'000'000'000) fail(key, fmt::format("must be a positive integer, got {}", v));
    return static_cast<int>(v);
  }

  bool boolean(const std::string& key, bool fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_boolean()) fail(key, "must be true or false");
    return v->get<bool>();
  }

  std::string text(const std::string& key, std::string fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_string()) fail(key, "must be a string");
    return v->get<std::string>();
  }

  std::optional<Fields> object(const std::string& key) {
    const json* v = find(key);
    if (!v) return std::nullopt;
    return Fields(*v, name(key));
  }

  // Applies a parser that throws ContractViolation and rewrites the error.
  template <typename Parse>
  auto parsed(const std::string& key, std::string fallback, Parse parse) {
    const std::string raw = text(key, std::move(fallback));
    try {
      return parse(raw);
    } catch (const ContractViolation& e) {
      fail(key, e.what());
    }
  }

  void finish() const {
    for (const auto& [key, _] : doc_.items()) {
      if (!seen_.count(key)) fail(key, "unknown key");
    }
  }

 private:
  const json& doc_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename Fn>
void check(Fields& f, const std::string& key, Fn fn) {
  try {
    fn();
  } catch (const ContractViolation& e) {
    f.fail(key, e.what());
  }
}

void parse_grpo(Fields& f, RunConfig& cfg) {
  GrpoConfig& g = cfg.grpo;
  g.eps_low = f.real("eps_low", g.eps_low);
  g.eps_high = f.real("eps_high", g.eps_high);
  g.beta = f.real("beta", g.beta);
  g.norm_mode = f.parsed("norm_mode", std::string(to_string(g.norm_mode)),
                         [](const std::string& s) { return parse_length_norm(s); });
  g.max_grad_norm = f.real("max_grad_norm", g.max_grad_norm);
  g.temperature = f.real("temperature", g.temperature);
  cfg.max_response_tokens = f.positive("max_response_tokens", cfg.max_response_tokens);
  g.norm_constant = f.positive("norm_constant", cfg.max_response_tokens);
  if (const json* sched = f.find("max_response_tokens_schedule")) {
    if (!sched->is_array()) f.fail("max_response_tokens_schedule", "must be an array");
    std::uint64_t prev = 0;
    for (std::size_t i = 0; i < sched->size(); ++i) {
      Fields e((*sched)[i], f.name(fmt::format("max_response_tokens_schedule[{}]", i)));
      if (!e.find("at_step") || !e.find("value")) e.fail("", "needs at_step and value");
      ScheduleEntry entry{e.unsigned_integer("at_step", 0), e.positive("value", 1)};
      e.finish();
      if (i > 0 && entry.at_step <= prev) e.fail("at_step", "must be strictly increasing");
      prev = entry.at_step;
      cfg.max_response_tokens_schedule.push_back(entry);
    }
  }
  f.finish();
  try {
    validate(g);
  } catch (const ContractViolation& e) {
    f.fail("", e.what());
  }
}

void parse_policy(Fields& f, PolicySpec& p) {
  const std::string kind = f.text("kind", "scripted");
  if (kind == "scripted") {
    p.kind = PolicySpec::Kind::kScripted;
    p.script = f.parsed("script", "greedy",
                        [](const std::string& s) { return simenv::parse_script_kind(s); });
  } else if (kind == "external") {
    p.kind = PolicySpec::Kind::kExternal;
    p.endpoint = f.text("endpoint", "");
    p.max_parallelism = static_cast<std::size_t>(f.unsigned_integer("max_parallelism", 0));
  } else {
    f.fail("kind", fmt::format("expected scripted or external, got '{}'", kind));
  }
  f.finish();
}

void parse_executor(Fields& f, ExecutorSpec& x) {
  const std::string kind = f.text("kind", "simenv");
  if (kind == "simenv") {
    x.kind = ExecutorSpec::Kind::kSimenv;
    x.jitter = f.real("jitter", 0.0);
    if (x.jitter < 0.0 || x.jitter >= 1.0) f.fail("jitter", "must be in [0, 1)");
  } else if (kind == "worker") {
    x.kind = ExecutorSpec::Kind::kWorker;
    const json* cmd = f.find("command");
    if (!cmd || !cmd->is_array() || cmd->empty()) {
      f.fail("command", "must be a nonempty array of strings");
    }
    for (const auto& arg : *cmd) {
      if (!arg.is_string()) f.fail("command", "must be a nonempty array of strings");
      x.worker.command.push_back(arg.get<std::string>());
    }
    x.worker.trials = f.positive("trials", x.worker.trials);
    x.worker.timing_iters = f.positive("timing_iters", x.worker.timing_iters);
    x.worker.timeout_s = f.real("timeout_s", x.worker.timeout_s);
    x.worker.rtol = f.real("rtol", x.worker.rtol);
    x.worker.atol = f.real("atol", x.worker.atol);
    if (x.worker.timeout_s <= 0.0) f.fail("timeout_s", "must be positive");
    if (x.worker.rtol < 0.0) f.fail("rtol", "must be nonnegative");
    if (x.worker.atol < 0.0) f.fail("atol", "must be nonnegative");
  } else {
    f.fail("kind", fmt::format("expected simenv or worker, got '{}'", kind));
  }
  f.finish();
}

void parse_tasks(Fields& f, TaskSource& t) {
  const std::string source = f.text("source", "simenv");
  if (source == "simenv") {
    t.kind = TaskSource::Kind::kSimenv;
    t.seed = f.unsigned_integer("seed", t.seed);
    t.count = static_cast<std::size_t>(f.positive("count", static_cast<int>(t.count)));
    t.difficulty = f.parsed("difficulty", "mixed",
                            [](const std::string& s) { return simenv::parse_difficulty(s); });
  } else if (source == "file") {
    t.kind = TaskSource::Kind::kFile;
    t.path = f.text("path", "");
    if (t.path.empty()) f.fail("path", "is required for file task sources");
  } else {
    f.fail("source", fmt::format("expected simenv or file, got '{}'", source));
  }
  f.finish();
}

json schedule_json(const std::vector<ScheduleEntry>& schedule) {
  json out = json::array();
  for (const auto& e : schedule) out.push_back({{"at_step", e.at_step}, {"value", e.value}});
  return out;
}

json snapshot_of(const RunConfig& c) {
  json policy;
  if (c.policy.kind == PolicySpec::Kind::kScripted) {
    policy = {{"kind", "scripted"}, {"script", std::string(simenv::to_string(c.policy.script))}};
  } else {
    // The token is never written to disk.
    policy = {{"kind", "external"},
              {"endpoint", c.policy.endpoint},
              {"max_parallelism", c.policy.max_parallelism}};
  }
  json executor;
  if (c.executor.kind == ExecutorSpec::Kind::kSimenv) {
    executor = {{"kind", "simenv"}, {"jitter", c.executor.jitter}};
  } else {
    const auto& w = c.executor.worker;
    executor = {{"kind", "worker"},      {"command", w.command}, {"trials", w.trials},
                {"timing_iters", w.timing_iters}, {"timeout_s", w.timeout_s},
                {"rtol", w.rtol},        {"atol", w.atol}};
  }
  json tasks;
  if (c.tasks.kind == TaskSource::Kind::kSimenv) {
    tasks = {{"source", "simenv"},
             {"seed", c.tasks.seed},
             {"count", c.tasks.count},
             {"difficulty", std::string(simenv::to_string(c.tasks.difficulty))}};
  } else {
    tasks = {{"source", "file"}, {"path", c.tasks.path.string()}};
  }
  json grpo = to_json(c.grpo);
  grpo["max_response_tokens"] = c.max_response_tokens;
  grpo["max_response_tokens_schedule"] = schedule_json(c.max_response_tokens_schedule);
  return {{"run_id", c.run_id},
          {"runs_dir", c.runs_dir.string()},
          {"seed", c.seed},
          {"m", c.m},
          {"n", c.n},
          {"gamma", c.aggregation.gamma},
          {"agg_mode", std::string(to_string(c.aggregation.mode))},
          {"score",
           {{"correctness_weight", c.weights.correctness_weight},
            {"speedup_weight", c.weights.speedup_weight}}},
          {"grpo", grpo},
          {"budget_tokens", c.budget_tokens},
          {"first_turn_example", c.first_turn_example},
          {"policy", policy},
          {"executor", executor},
          {"tasks", tasks},
          {"parallelism", c.parallelism},
          {"store_cot", c.store_cot}};
}

json read_json_file(const std::filesystem::path& path, std::string_view what) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("{}: cannot open '{}'", what, path.string()));
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("{}: '{}' is not valid JSON: {}", what, path.string(), e.what()));
  }
}

std::map<std::string, WorkerTask> worker_tasks(const json& doc, std::vector<RolloutTask>& out) {
  if (!doc.is_object() || !doc.contains("tasks") || !doc["tasks"].is_array()) {
    throw ConfigError("tasks.path: expected {\"tasks\": [...]}");
  }
  std::map<std::string, WorkerTask> tasks;
  for (std::size_t i = 0; i < doc["tasks"].size(); ++i) {
    Fields f(doc["tasks"][i], fmt::format("tasks[{}]", i));
    const std::string id = f.text("task_id", "");
    if (id.empty()) f.fail("task_id", "is required");
    WorkerTask w;
    w.reference_source = f.text("reference_source", "");
    if (w.reference_source.empty()) f.fail("reference_source", "is required");
    w.entry_class = f.text("entry_class", w.entry_class);
    w.reference_class = f.text("reference_class", w.reference_class);
    const std::string text = f.text("task_text", w.reference_source);
    f.finish();
    if (!tasks.emplace(id, w).second) f.fail("task_id", fmt::format("duplicate id '{}'", id));
    out.push_back({id, text});
  }
  return tasks;
}

}  // namespace

int RunConfig::max_response_tokens_at(std::uint64_t step) const {
  int value = max_response_tokens;
  for (const auto& e : max_response_tokens_schedule) {
    if (e.at_step <= step) value = e.value;
  }
  return value;
}

RunConfig parse_run_config(const json& doc) {
  RunConfig cfg;
  Fields f(doc, "");
  cfg.seed = f.unsigned_integer("seed", 0);
  cfg.run_id = f.text("run_id", fmt::format("run-{}", cfg.seed));
  if (cfg.run_id.empty() || cfg.run_id.find('/') != std::string::npos || cfg.run_id[0] == '.') {
    f.fail("run_id", "must be a plain directory name");
  }
  cfg.runs_dir = f.text("runs_dir", "runs");
  cfg.m = f.positive("m", cfg.m);
  cfg.n = f.positive("n", cfg.n);
  cfg.aggregation.gamma = f.real("gamma", cfg.aggregation.gamma);
  cfg.aggregation.mode = f.parsed("agg_mode", "sum",
                                  [](const std::string& s) { return parse_aggregation_mode(s); });
  check(f, "gamma", [&] { validate(cfg.aggregation); });
  if (auto score = f.object("score")) {
    cfg.weights.correctness_weight =
        score->real("correctness_weight", cfg.weights.correctness_weight);
    cfg.weights.speedup_weight = score->real("speedup_weight", cfg.weights.speedup_weight);
    score->finish();
    check(f, "score", [&] { validate(cfg.weights); });
  }
  if (auto grpo = f.object("grpo")) {
    parse_grpo(*grpo, cfg);
  } else {
    cfg.grpo.norm_constant = cfg.max_response_tokens;
  }
  const std::int64_t budget = f.integer("budget_tokens", static_cast<std::int64_t>(cfg.budget_tokens));
  if (budget <= 0) f.fail("budget_tokens", "must be positive");
  cfg.budget_tokens = static_cast<std::size_t>(budget);
  cfg.first_turn_example = f.boolean("first_turn_example", cfg.first_turn_example);
  if (auto p = f.object("policy")) parse_policy(*p, cfg.policy);
  if (auto x = f.object("executor")) parse_executor(*x, cfg.executor);
  if (auto t = f.object("tasks")) parse_tasks(*t, cfg.tasks);
  cfg.parallelism = static_cast<std::size_t>(f.unsigned_integer("parallelism", 0));
  cfg.store_cot = f.boolean("store_cot", false);
  f.finish();

  if (cfg.policy.kind == PolicySpec::Kind::kScripted &&
      cfg.executor.kind != ExecutorSpec::Kind::kSimenv) {
    throw ConfigError("policy.kind: scripted policies only work with the simenv executor");
  }
  if (cfg.executor.kind == ExecutorSpec::Kind::kWorker && cfg.tasks.kind != TaskSource::Kind::kFile) {
    throw ConfigError("tasks.source: the worker executor needs a task file");
  }
  cfg.snapshot = snapshot_of(cfg);
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return parse_run_config(read_json_file(path, "config"));
}

RunSetup build_run_setup(const RunConfig& cfg) {
  RunSetup setup;
  setup.context.budget.max_tokens = cfg.budget_tokens;
  setup.context.first_turn_example = cfg.first_turn_example;

  if (cfg.executor.kind == ExecutorSpec::Kind::kSimenv) {
    std::vector<simenv::SynthTask> synth;
    if (cfg.tasks.kind == TaskSource::Kind::kSimenv) {
      synth = simenv::gen_tasks(cfg.tasks.seed, cfg.tasks.count, cfg.tasks.difficulty);
    } else {
      try {
        synth = simenv::tasks_from_json(read_json_file(cfg.tasks.path, "tasks.path"));
      } catch (const ContractViolation& e) {
        throw ConfigError(fmt::format("tasks.path: {}", e.what()));
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError(fmt::format("tasks.path: {}", e.what()));
      }
    }
    setup.tasks = simenv::rollout_tasks(synth);
    setup.context.templates = simenv::prompt_templates();
    if (cfg.policy.kind == PolicySpec::Kind::kScripted) {
      setup.policy = simenv::scripted_policy(cfg.policy.script, synth);
    }
    setup.executor = std::make_unique<simenv::SimExecutor>(std::move(synth), cfg.executor.jitter);
  } else {
    auto tasks = worker_tasks(read_json_file(cfg.tasks.path, "tasks.path"), setup.tasks);
    setup.executor = std::make_unique<WorkerExecutor>(cfg.executor.worker, std::move(tasks));
  }

  if (cfg.policy.kind == PolicySpec::Kind::kExternal) {
    HttpPolicyOptions options = http_policy_options_from_env().value_or(HttpPolicyOptions{});
    if (!cfg.policy.endpoint.empty()) options.endpoint = cfg.policy.endpoint;
    if (options.endpoint.empty()) {
      throw ConfigError(fmt::format("policy.endpoint: not set and {} is empty", kPolicyEndpointEnv));
    }
    options.max_parallelism = cfg.policy.max_parallelism;
    try {
      setup.policy = std::make_unique<HttpPolicy>(std::move(options));
    } catch (const ContractViolation& e) {
      throw ConfigError(fmt::format("policy.endpoint: {}", e.what()));
    }
  }
  if (setup.tasks.empty()) throw ConfigError("tasks: no tasks to roll out");
  return setup;
}

RolloutConfig rollout_config(const RunConfig& cfg, const ContextSpec& context,
                             std::uint64_t step) {
  RolloutConfig rc;
  rc.m = cfg.m;
  rc.n = cfg.n;
  rc.aggregation = cfg.aggregation;
  rc.weights = cfg.weights;
  rc.context = context;
  rc.temperature = cfg.grpo.temperature;
  rc.max_response_tokens = cfg.max_response_tokens_at(step);
  rc.run_seed = cfg.seed;
  rc.step = step;
  DefaultRuleOptions rules;
  // Synthetic candidates define no classes.
  if (cfg.executor.kind == ExecutorSpec::Kind::kSimenv) rules.entry_class.clear();
  rc.rules = default_rules(rules);
  rc.parallelism = cfg.parallelism;
  return rc;
}

}  // namespace krl::cli
