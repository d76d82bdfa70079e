// Copyright (c) 2026 The krl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace krl {

// A caller broke a documented precondition.
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// The base prompt does not fit in the configured token budget.
class BudgetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConflictError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotFoundError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Not enough stored trajectories/turns to compute a requested report.
class ShortfallError : public std::runtime_error {
 public:
  ShortfallError(std::string task_id, const std::string& what)
      : std::runtime_error(what), task_id_(std::move(task_id)) {}
  const std::string& task_id() const noexcept { return task_id_; }

 private:
  std::string task_id_;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The executor could not be reached; a rollout step cannot continue.
class ExecutorUnavailable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The policy produced no usable response for a turn. When a raw response
// exists, its length and truncation state are kept for the monitors.
class PolicyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;

  std::string raw_text;
  int response_tokens = 0;
  bool truncated = false;
};

}  // namespace krl
