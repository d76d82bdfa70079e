// Copyright (c) 2026 The krl Authors
// SPDX-License-Identifier: Apache-2.0

#include "krl/worker_executor.hpp"

#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include <fmt/format.h>

#include "krl/errors.hpp"

namespace krl {

nlohmann::json to_json(const EvalRequest& r) {
  return nlohmann::json::parse(encode_request(r));
}

std::string encode_request(const EvalRequest& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["op"] = "evaluate";
  j["reference_source"] = r.reference_source;
  j["candidate_source"] = r.candidate_source;
  j["entry_class"] = r.entry_class;
  j["reference_class"] = r.reference_class;
  j["trials"] = r.trials;
  j["timing_iters"] = r.timing_iters;
  j["timeout_s"] = r.timeout_s;
  j["seed"] = r.seed;
  j["rtol"] = r.rtol;
  j["atol"] = r.atol;
  return j.dump();
}

std::string encode_response(const EvalResponse& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["status"] = std::string(to_string(r.status));
  j["error_message"] = r.error_message;
  j["runtime_ms"] = r.runtime_ms ? nlohmann::ordered_json(*r.runtime_ms) : nlohmann::ordered_json();
  j["baseline_ms"] = r.baseline_ms ? nlohmann::ordered_json(*r.baseline_ms) : nlohmann::ordered_json();
  return j.dump();
}

EvalResponse decode_response(std::string_view line) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ContractViolation(fmt::format("worker response is not JSON: {}", e.what()));
  }
  if (!doc.is_object()) throw ContractViolation("worker response is not an object");
  EvalResponse r;
  try {
    r.id = doc.at("id").is_null() ? std::string() : doc.at("id").get<std::string>();
    r.status = parse_eval_status(doc.at("status").get<std::string>());
    if (doc.contains("error_message") && !doc["error_message"].is_null()) {
      r.error_message = doc["error_message"].get<std::string>();
    }
    if (doc.contains("runtime_ms") && !doc["runtime_ms"].is_null()) {
      r.runtime_ms = doc["runtime_ms"].get<double>();
    }
    if (doc.contains("baseline_ms") && !doc["baseline_ms"].is_null()) {
      r.baseline_ms = doc["baseline_ms"].get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ContractViolation(fmt::format("malformed worker response: {}", e.what()));
  }
  return r;
}

EvalResult to_eval_result(const EvalResponse& r, double fallback_baseline_ms) {
  const double baseline =
      r.baseline_ms && *r.baseline_ms > 0.0 ? *r.baseline_ms : fallback_baseline_ms;
  if (r.status == EvalStatus::kCorrect) {
    if (r.runtime_ms && *r.runtime_ms > 0.0 && r.baseline_ms && *r.baseline_ms > 0.0) {
      return EvalResult::correct(*r.baseline_ms, *r.runtime_ms);
    }
    return EvalResult::failure(EvalStatus::kRuntimeError, baseline,
                               "worker reported a correct result without timings");
  }
  std::string message = r.error_message;
  if (message.empty()) message = std::string(to_string(r.status));
  return EvalResult::failure(r.status, baseline, std::move(message));
}

ChildProcess::ChildProcess(const std::vector<std::string>& argv) {
  if (argv.empty()) throw ConfigError("worker command is empty");
  int sv[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sv) != 0) {
    throw ExecutorUnavailable(fmt::format("socketpair failed: {}", std::strerror(errno)));
  }
  const pid_t pid = ::fork();
  if (pid < 0) {
    ::close(sv[0]);
    ::close(sv[1]);
    throw ExecutorUnavailable(fmt::format("fork failed: {}", std::strerror(errno)));
  }
  if (pid == 0) {
    ::dup2(sv[1], STDIN_FILENO);
    ::dup2(sv[1], STDOUT_FILENO);
    std::vector<char*> args;
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);
    ::execvp(args[0], args.data());
    _exit(127);
  }
  ::close(sv[1]);
  pid_ = pid;
  to_child_ = sv[0];
  from_child_ = sv[0];
}

ChildProcess::~ChildProcess() {
  if (to_child_ >= 0) {
    ::shutdown(to_child_, SHUT_RDWR);
    ::close(to_child_);
  }
  if (pid_ > 0) {
    int status = 0;
    // Give the worker a moment to exit on end-of-input before killing it.
    for (int i = 0; i < 50; ++i) {
      if (::waitpid(pid_, &status, WNOHANG) == pid_) return;
      ::usleep(10000);
    }
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, &status, 0);
  }
}

bool ChildProcess::alive() {
  if (pid_ <= 0) return false;
  int status = 0;
  if (::waitpid(pid_, &status, WNOHANG) == pid_) {
    pid_ = -1;
    return false;
  }
  return true;
}

void ChildProcess::write_line(std::string_view line) {
  std::string buf(line);
  buf += '\n';
  std::string_view rest = buf;
  while (!rest.empty()) {
    const ssize_t n = ::send(to_child_, rest.data(), rest.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw ExecutorUnavailable(fmt::format("worker write failed: {}", std::strerror(errno)));
    }
    rest.remove_prefix(static_cast<std::size_t>(n));
  }
}

std::optional<std::string> ChildProcess::read_line(int timeout_ms) {
  for (;;) {
    const auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    pollfd pfd{from_child_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, timeout_ms);
    if (ready == 0) throw ExecutorUnavailable("worker did not answer in time");
    if (ready < 0) {
      if (errno == EINTR) continue;
      throw ExecutorUnavailable(fmt::format("poll failed: {}", std::strerror(errno)));
    }
    char chunk[4096];
    const ssize_t n = ::recv(from_child_, chunk, sizeof chunk, 0);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw ExecutorUnavailable(fmt::format("worker read failed: {}", std::strerror(errno)));
    }
    if (n == 0) return std::nullopt;
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

WorkerExecutor::WorkerExecutor(WorkerExecutorOptions options,
                               std::map<std::string, WorkerTask> tasks)
    : options_(std::move(options)), tasks_(std::move(tasks)) {
  if (options_.command.empty()) throw ConfigError("worker executor needs a command");
}

WorkerExecutor::~WorkerExecutor() = default;

EvalResponse WorkerExecutor::round_trip(const EvalRequest& request) {
  const std::string line = encode_request(request);
  // Generous host-side deadline; the worker enforces timeout_s per candidate.
  const int deadline_ms = static_cast<int>((2.0 * options_.timeout_s + 30.0) * 1000.0);
  std::string last_error;
  for (int attempt = 0; attempt < 2; ++attempt) {
    try {
      if (!child_ || !child_->alive()) child_ = std::make_unique<ChildProcess>(options_.command);
      child_->write_line(line);
      const auto reply = child_->read_line(deadline_ms);
      if (!reply) throw ExecutorUnavailable("worker closed its output");
      EvalResponse response = decode_response(*reply);
      if (response.id != request.id) {
        throw ExecutorUnavailable(
            fmt::format("worker answered id '{}' to request '{}'", response.id, request.id));
      }
      return response;
    } catch (const ExecutorUnavailable& e) {
      last_error = e.what();
      child_.reset();
    } catch (const ContractViolation& e) {
      last_error = e.what();
      child_.reset();
    }
  }
  throw ExecutorUnavailable(fmt::format("evaluation worker unavailable: {}", last_error));
}

EvalResult WorkerExecutor::evaluate(const std::string& task_id, const std::string& kernel_source,
                                    std::uint64_t seed) {
  const auto it = tasks_.find(task_id);
  if (it == tasks_.end()) throw NotFoundError(fmt::format("worker has no task '{}'", task_id));
  std::lock_guard lock(mutex_);
  EvalRequest request;
  request.id = fmt::format("req-{}", next_id_++);
  request.reference_source = it->second.reference_source;
  request.candidate_source = kernel_source;
  request.entry_class = it->second.entry_class;
  request.reference_class = it->second.reference_class;
  request.trials = options_.trials;
  request.timing_iters = options_.timing_iters;
  request.timeout_s = options_.timeout_s;
  request.seed = static_cast<std::int64_t>(seed & 0x7fffffffffffffffULL);
  request.rtol = options_.rtol;
  request.atol = options_.atol;
  return to_eval_result(round_trip(request));
}

}  // namespace krl
