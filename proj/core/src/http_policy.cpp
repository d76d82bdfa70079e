// Copyright (c) 2026 The krl Authors
// SPDX-License-Identifier: Apache-2.0

#include "krl/http_policy.hpp"

#include <algorithm>
#include <cstdlib>

#include <fmt/format.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "krl/errors.hpp"
#include "krl/response_format.hpp"

namespace krl {
namespace {

struct Completion {
  std::string text;
  std::optional<long long> completion_tokens;
  std::string finish_reason;
};

// Accepts {"text", "completion_tokens", "finish_reason"} and the
// {"choices": [{"text", "finish_reason"}], "usage": {...}} shape.
Completion read_completion(const nlohmann::json& doc) {
  Completion c;
  if (doc.contains("text")) {
    c.text = doc["text"].get<std::string>();
    if (doc.contains("completion_tokens")) c.completion_tokens = doc["completion_tokens"].get<long long>();
    c.finish_reason = doc.value("finish_reason", "");
    return c;
  }
  if (doc.contains("choices") && doc["choices"].is_array() && !doc["choices"].empty()) {
    const auto& choice = doc["choices"][0];
    if (choice.contains("text")) {
      c.text = choice["text"].get<std::string>();
    } else if (choice.contains("message")) {
      c.text = choice["message"].at("content").get<std::string>();
    } else {
      throw PolicyError("completion choice has no text");
    }
    if (choice.contains("finish_reason") && choice["finish_reason"].is_string()) {
      c.finish_reason = choice["finish_reason"].get<std::string>();
    }
    if (doc.contains("usage") && doc["usage"].contains("completion_tokens")) {
      c.completion_tokens = doc["usage"]["completion_tokens"].get<long long>();
    }
    return c;
  }
  throw PolicyError("completion response has no text");
}

}  // namespace

std::optional<HttpPolicyOptions> http_policy_options_from_env() {
  const char* endpoint = std::getenv(kPolicyEndpointEnv);
  if (endpoint == nullptr || *endpoint == '\0') return std::nullopt;
  HttpPolicyOptions options;
  options.endpoint = endpoint;
  if (const char* token = std::getenv(kPolicyTokenEnv)) options.token = token;
  return options;
}

HttpPolicy::HttpPolicy(HttpPolicyOptions options) : options_(std::move(options)) {
  const std::string& url = options_.endpoint;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw ConfigError(fmt::format("policy endpoint '{}' needs a scheme", url));
  }
  const std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http") {
    throw ConfigError(fmt::format("policy endpoint scheme '{}' is not supported (http only)", scheme));
  }
  const auto path_begin = url.find('/', scheme_end + 3);
  scheme_host_port_ = url.substr(0, path_begin);
  path_ = path_begin == std::string::npos ? "/" : url.substr(path_begin);
}

std::string HttpPolicy::id() const { return fmt::format("http:{}{}", scheme_host_port_, path_); }

PolicyResponse HttpPolicy::generate(const std::string& prompt, std::uint64_t seed,
                                    double temperature, int max_response_tokens) const {
  httplib::Client client(scheme_host_port_);
  const auto timeout = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout).count();
  client.set_read_timeout(timeout, 0);
  client.set_write_timeout(timeout, 0);
  httplib::Headers headers;
  if (!options_.token.empty()) headers.emplace("Authorization", "Bearer " + options_.token);

  const nlohmann::json body{{"prompt", prompt},
                            {"temperature", temperature},
                            {"max_tokens", max_response_tokens},
                            {"seed", seed}};
  const auto res = client.Post(path_, headers, body.dump(), "application/json");
  if (!res) {
    throw PolicyError(fmt::format("policy request failed: {}", httplib::to_string(res.error())));
  }
  if (res->status != 200) {
    throw PolicyError(fmt::format("policy endpoint returned HTTP {}", res->status));
  }
  Completion completion;
  try {
    completion = read_completion(nlohmann::json::parse(res->body));
  } catch (const nlohmann::json::exception& e) {
    throw PolicyError(fmt::format("policy endpoint returned malformed JSON: {}", e.what()));
  }

  const long long tokens = completion.completion_tokens.value_or(
      static_cast<long long>(WordHeuristicCounter{}.count(completion.text)));
  const bool truncated = completion.finish_reason == "length" || tokens >= max_response_tokens;
  const int counted =
      truncated ? max_response_tokens : static_cast<int>(std::min<long long>(tokens, max_response_tokens));

  ParsedResponse parsed;
  try {
    parsed = parse_response(completion.text);
  } catch (PolicyError& e) {
    e.raw_text = completion.text;
    e.response_tokens = counted;
    e.truncated = truncated;
    throw;
  }
  PolicyResponse out;
  out.cot_full = std::move(parsed.cot_full);
  out.kernel_source = std::move(parsed.kernel_source);
  out.cot_summary = std::move(parsed.cot_summary);
  out.response_tokens = counted;
  out.truncated = truncated;
  return out;
}

}  // namespace krl
