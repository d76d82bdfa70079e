// Copyright (c) 2026 The krl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Executor that talks to an out-of-process evaluation worker over
// newline-delimited JSON on the worker's stdin/stdout.
//
// Request:  {"id","op":"evaluate","reference_source","candidate_source",
//            "entry_class","reference_class","trials","timing_iters",
//            "timeout_s","seed","rtol","atol"}
// Response: {"id","status","error_message","runtime_ms","baseline_ms"}

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "krl/rollout.hpp"
#include "krl/scoring.hpp"

namespace krl {

struct EvalRequest {
  std::string id;
  std::string reference_source;
  std::string candidate_source;
  std::string entry_class = "ModelNew";
  std::string reference_class = "Model";
  int trials = 5;
  int timing_iters = 20;
  double timeout_s = 60.0;
  std::int64_t seed = 0;
  double rtol = 1e-4;
  double atol = 1e-4;
};

struct EvalResponse {
  std::string id;
  EvalStatus status = EvalStatus::kRuntimeError;
  std::string error_message;
  std::optional<double> runtime_ms;
  std::optional<double> baseline_ms;
};

// Single-line JSON in the fixed key order above.
std::string encode_request(const EvalRequest& request);
nlohmann::json to_json(const EvalRequest& request);
// Throws ContractViolation on a malformed response line.
EvalResponse decode_response(std::string_view line);
std::string encode_response(const EvalResponse& response);

// Converts a wire response into an EvalResult. A correct response without
// both timings becomes a runtime error.
EvalResult to_eval_result(const EvalResponse& response,
                          double fallback_baseline_ms = 1.0);

// Bidirectional pipe to a child process. Not copyable.
class ChildProcess {
 public:
  explicit ChildProcess(const std::vector<std::string>& argv);
  ~ChildProcess();
  ChildProcess(const ChildProcess&) = delete;
  ChildProcess& operator=(const ChildProcess&) = delete;

  // Throws ExecutorUnavailable when the child is gone.
  void write_line(std::string_view line);
  // nullopt on end of stream; throws ExecutorUnavailable after timeout_ms.
  std::optional<std::string> read_line(int timeout_ms = -1);
  bool alive();

 private:
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
};

struct WorkerTask {
  std::string reference_source;
  std::string entry_class = "ModelNew";
  std::string reference_class = "Model";
};

struct WorkerExecutorOptions {
  std::vector<std::string> command;
  int trials = 5;
  int timing_iters = 20;
  double timeout_s = 60.0;
  double rtol = 1e-4;
  double atol = 1e-4;
};

// Serializes requests through one worker process and restarts it once if it
// dies mid-request.
class WorkerExecutor final : public Executor {
 public:
  WorkerExecutor(WorkerExecutorOptions options,
                 std::map<std::string, WorkerTask> tasks);
  ~WorkerExecutor() override;

  EvalResult evaluate(const std::string& task_id,
                      const std::string& kernel_source,
                      std::uint64_t seed) override;
  std::size_t max_parallelism() const override { return 1; }

 private:
  EvalResponse round_trip(const EvalRequest& request);

  WorkerExecutorOptions options_;
  std::map<std::string, WorkerTask> tasks_;
  std::mutex mutex_;
  std::unique_ptr<ChildProcess> child_;
  std::uint64_t next_id_ = 0;
};

}  // namespace krl
