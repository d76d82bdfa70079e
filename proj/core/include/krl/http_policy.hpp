// Copyright (c) 2026 The krl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Policy backed by an external completion endpoint.
//
// POST <endpoint> with
//   {"prompt": ..., "temperature": ..., "max_tokens": ..., "seed": ...}
// and an optional "Authorization: Bearer <token>" header. The reply must
// carry "text"; "completion_tokens" and "finish_reason" are used when
// present.

#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "krl/context.hpp"
#include "krl/rollout.hpp"

namespace krl {

struct HttpPolicyOptions {
  std::string endpoint;  // http://host:port/path
  std::string token;
  std::chrono::seconds timeout{600};
  std::size_t max_parallelism = 0;
};

inline constexpr const char* kPolicyEndpointEnv = "POLICY_ENDPOINT";
inline constexpr const char* kPolicyTokenEnv = "POLICY_TOKEN";

// Reads POLICY_ENDPOINT / POLICY_TOKEN; nullopt when no endpoint is set.
std::optional<HttpPolicyOptions> http_policy_options_from_env();

class HttpPolicy final : public Policy {
 public:
  explicit HttpPolicy(HttpPolicyOptions options);
  std::string id() const override;
  PolicyResponse generate(const std::string& prompt, std::uint64_t seed,
                          double temperature,
                          int max_response_tokens) const override;
  std::size_t max_parallelism() const override {
    return options_.max_parallelism;
  }

 private:
  HttpPolicyOptions options_;
  std::string scheme_host_port_;
  std::string path_;
};

}  // namespace krl
