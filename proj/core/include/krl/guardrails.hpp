// Copyright (c) 2026 The krl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Static rejection of candidate programs that obtain reward without solving
// the task: calling back into the reference framework, try/except fallbacks,
// and empty subclasses of the reference model.
//
// Matching rules:
//  - Full-line comments (first non-blank character '#') are skipped by every
//    pattern rule. Trailing comments and string literals are scanned.
//  - forbidden_substring matches raw text. An occurrence is exempt when one
//    of the rule's allowlist entries matches at the same offset; the longest
//    allowlist entry wins.
//  - forbidden_token matches whole identifier tokens ([A-Za-z0-9_]+).
//  - empty_class_body flags a class whose body is exactly the pattern token
//    (normally `pass`). In strict mode it degrades to a forbidden_token rule.
//  - required_marker requires a `class <pattern>` definition.

#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace krl {

enum class GuardRuleKind {
  kForbiddenSubstring,
  kForbiddenToken,
  kEmptyClassBody,
  kRequiredMarker,
};

std::string_view to_string(GuardRuleKind kind);
GuardRuleKind parse_guard_rule_kind(std::string_view name);

struct GuardRule {
  std::string rule_id;
  GuardRuleKind kind = GuardRuleKind::kForbiddenSubstring;
  std::string pattern;
  std::vector<std::string> allowlist;

  bool operator==(const GuardRule&) const = default;
};

// Byte range [begin, end) in the candidate source.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool operator==(const Span&) const = default;
};

struct Violation {
  std::string rule_id;
  Span span;
  bool operator==(const Violation&) const = default;
};

struct GuardVerdict {
  bool accepted = true;
  std::vector<Violation> violations;

  // Distinct violated rule ids in first-seen order, comma separated.
  std::string summary() const;
};

class RuleSet {
 public:
  RuleSet() = default;
  // Throws ContractViolation on duplicate ids or empty patterns.
  explicit RuleSet(std::vector<GuardRule> rules);

  void add(GuardRule rule);
  // Returns false if no rule has that id.
  bool remove(std::string_view rule_id);

  const std::vector<GuardRule>& rules() const { return rules_; }
  bool empty() const { return rules_.empty(); }

  nlohmann::json to_json() const;
  static RuleSet from_json(const nlohmann::json& doc);

 private:
  std::vector<GuardRule> rules_;
};

struct DefaultRuleOptions {
  // Name the candidate must define; empty drops the required_marker rule.
  std::string entry_class = "ModelNew";
};

// Rule ids used by default_rules().
inline constexpr std::string_view kRuleTorchNn = "no_torch_nn";
inline constexpr std::string_view kRuleTorchFunctional = "no_torch_functional";
inline constexpr std::string_view kRuleTry = "no_try";
inline constexpr std::string_view kRuleExcept = "no_except";
inline constexpr std::string_view kRulePassClass = "no_pass_only_class";
inline constexpr std::string_view kRuleEntryClass = "entry_class";

RuleSet default_rules(const DefaultRuleOptions& options = {});

struct GuardOptions {
  // Turn empty_class_body rules into a blanket ban of the token.
  bool strict = false;
};

GuardVerdict check_candidate(std::string_view source, const RuleSet& rules,
                             const GuardOptions& options = {});

}  // namespace krl
