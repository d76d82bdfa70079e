// Copyright (c) 2026 The krl Authors
// SPDX-License-Identifier: Apache-2.0

#include "krl/guardrails.hpp"

#include <algorithm>
#include <array>
#include <optional>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "krl/errors.hpp"

namespace krl {
namespace {

constexpr std::array<std::pair<GuardRuleKind, std::string_view>, 4> kKindNames{{
    {GuardRuleKind::kForbiddenSubstring, "forbidden_substring"},
    {GuardRuleKind::kForbiddenToken, "forbidden_token"},
    {GuardRuleKind::kEmptyClassBody, "empty_class_body"},
    {GuardRuleKind::kRequiredMarker, "required_marker"},
}};

bool is_word(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
         (c >= '0' && c <= '9') || c == '_';
}

bool is_blank(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v'; }

struct Line {
  std::size_t begin = 0;  // offset of first byte
  std::string_view text;  // without the trailing newline
  std::size_t indent = 0;
  bool blank = false;
  bool comment = false;
};

std::vector<Line> split_lines(std::string_view source) {
  std::vector<Line> lines;
  std::size_t pos = 0;
  while (pos <= source.size()) {
    std::size_t end = source.find('\n', pos);
    if (end == std::string_view::npos) end = source.size();
    Line line;
    line.begin = pos;
    line.text = source.substr(pos, end - pos);
    while (line.indent < line.text.size() && is_blank(line.text[line.indent])) ++line.indent;
    line.blank = line.indent == line.text.size();
    line.comment = !line.blank && line.text[line.indent] == '#';
    lines.push_back(line);
    if (end == source.size()) break;
    pos = end + 1;
  }
  return lines;
}

struct Token {
  std::size_t offset = 0;  // absolute
  std::string_view text;
};

std::vector<Token> tokenize(std::string_view text, std::size_t base) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!is_word(text[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && is_word(text[j])) ++j;
    tokens.push_back({base + i, text.substr(i, j - i)});
    i = j;
  }
  return tokens;
}

// Length of the longest allowlist entry matching at `offset`, if any.
bool allowlisted(std::string_view source, std::size_t offset,
                 const std::vector<std::string>& allowlist) {
  const std::string_view rest = source.substr(offset);
  std::size_t best = 0;
  for (const auto& entry : allowlist) {
    if (!entry.empty() && rest.substr(0, entry.size()) == entry) {
      best = std::max(best, entry.size());
    }
  }
  return best > 0;
}

// Drops a trailing `# ...` comment.
std::string_view strip_trailing_comment(std::string_view text) {
  const auto hash = text.find('#');
  return hash == std::string_view::npos ? text : text.substr(0, hash);
}

std::string_view trim(std::string_view text) {
  std::size_t b = 0;
  while (b < text.size() && is_blank(text[b])) ++b;
  std::size_t e = text.size();
  while (e > b && is_blank(text[e - 1])) --e;
  return text.substr(b, e - b);
}

void match_substring(std::string_view source, const std::vector<Line>& lines,
                     const GuardRule& rule, std::vector<Violation>& out) {
  for (const auto& line : lines) {
    if (line.comment) continue;
    std::size_t pos = line.text.find(rule.pattern);
    while (pos != std::string_view::npos) {
      const std::size_t abs = line.begin + pos;
      if (!allowlisted(source, abs, rule.allowlist)) {
        out.push_back({rule.rule_id, {abs, abs + rule.pattern.size()}});
      }
      pos = line.text.find(rule.pattern, pos + 1);
    }
  }
}

void match_token(std::string_view source, const std::vector<Line>& lines,
                 const GuardRule& rule, std::vector<Violation>& out) {
  for (const auto& line : lines) {
    if (line.comment) continue;
    for (const auto& tok : tokenize(line.text, line.begin)) {
      if (tok.text == rule.pattern && !allowlisted(source, tok.offset, rule.allowlist)) {
        out.push_back({rule.rule_id, {tok.offset, tok.offset + tok.text.size()}});
      }
    }
  }
}

struct ClassHeader {
  std::size_t line = 0;
  std::string_view name;
  // Text after the colon on the header line, comment stripped.
  std::string_view inline_body;
  std::size_t inline_body_offset = 0;
};

std::optional<ClassHeader> class_header(const std::vector<Line>& lines, std::size_t index) {
  const Line& line = lines[index];
  if (line.blank || line.comment) return std::nullopt;
  const std::string_view body = line.text.substr(line.indent);
  if (body.substr(0, 5) != "class" || body.size() < 6 || !is_blank(body[5])) return std::nullopt;
  std::size_t i = 5;
  while (i < body.size() && is_blank(body[i])) ++i;
  std::size_t j = i;
  while (j < body.size() && is_word(body[j])) ++j;
  if (j == i) return std::nullopt;
  ClassHeader header;
  header.line = index;
  header.name = body.substr(i, j - i);
  // Skip a balanced base-class list.
  int depth = 0;
  std::size_t k = j;
  for (; k < body.size(); ++k) {
    const char c = body[k];
    if (c == '(') ++depth;
    if (c == ')') --depth;
    if (c == ':' && depth == 0) break;
    if (c == '#') return std::nullopt;
  }
  if (k >= body.size()) return std::nullopt;
  const std::string_view after = strip_trailing_comment(body.substr(k + 1));
  header.inline_body = trim(after);
  if (!header.inline_body.empty()) {
    header.inline_body_offset =
        line.begin + line.indent + k + 1 + static_cast<std::size_t>(after.find(header.inline_body));
  }
  return header;
}

void match_empty_class(const std::vector<Line>& lines, const GuardRule& rule,
                       std::vector<Violation>& out) {
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto header = class_header(lines, i);
    if (!header) continue;
    if (!header->inline_body.empty()) {
      if (header->inline_body == rule.pattern) {
        out.push_back({rule.rule_id,
                       {header->inline_body_offset, header->inline_body_offset + rule.pattern.size()}});
      }
      continue;
    }
    const std::size_t indent = lines[i].indent;
    std::vector<std::pair<std::size_t, std::string_view>> body;  // (offset, trimmed text)
    for (std::size_t j = i + 1; j < lines.size(); ++j) {
      const Line& line = lines[j];
      if (line.blank || line.comment) continue;
      if (line.indent <= indent) break;
      const std::string_view text = trim(strip_trailing_comment(line.text.substr(line.indent)));
      if (!text.empty()) body.emplace_back(line.begin + line.indent, text);
    }
    if (body.size() == 1 && body.front().second == rule.pattern) {
      const std::size_t at = body.front().first;
      out.push_back({rule.rule_id, {at, at + rule.pattern.size()}});
    }
  }
}

bool has_class_definition(const std::vector<Line>& lines, std::string_view name) {
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto header = class_header(lines, i);
    if (header && header->name == name) return true;
  }
  return false;
}

}  // namespace

std::string_view to_string(GuardRuleKind kind) {
  for (const auto& [value, name] : kKindNames) {
    if (value == kind) return name;
  }
  return "unknown";
}

GuardRuleKind parse_guard_rule_kind(std::string_view name) {
  for (const auto& [value, text] : kKindNames) {
    if (text == name) return value;
  }
  throw ContractViolation(fmt::format("unknown guard rule kind '{}'", name));
}

std::string GuardVerdict::summary() const {
  std::vector<std::string_view> ids;
  for (const auto& v : violations) {
    if (std::find(ids.begin(), ids.end(), v.rule_id) == ids.end()) ids.push_back(v.rule_id);
  }
  return fmt::format("{}", fmt::join(ids, ", "));
}

RuleSet::RuleSet(std::vector<GuardRule> rules) {
  for (auto& rule : rules) add(std::move(rule));
}

void RuleSet::add(GuardRule rule) {
  if (rule.rule_id.empty()) throw ContractViolation("guard rule id must be nonempty");
  if (rule.pattern.empty()) {
    throw ContractViolation(fmt::format("guard rule '{}' has an empty pattern", rule.rule_id));
  }
  for (const auto& existing : rules_) {
    if (existing.rule_id == rule.rule_id) {
      throw ContractViolation(fmt::format("duplicate guard rule id '{}'", rule.rule_id));
    }
  }
  rules_.push_back(std::move(rule));
}

bool RuleSet::remove(std::string_view rule_id) {
  const auto it = std::find_if(rules_.begin(), rules_.end(),
                               [&](const GuardRule& r) { return r.rule_id == rule_id; });
  if (it == rules_.end()) return false;
  rules_.erase(it);
  return true;
}

nlohmann::json RuleSet::to_json() const {
  nlohmann::json rules = nlohmann::json::array();
  for (const auto& rule : rules_) {
    rules.push_back({{"rule_id", rule.rule_id},
                     {"kind", std::string(to_string(rule.kind))},
                     {"pattern", rule.pattern},
                     {"allowlist", rule.allowlist}});
  }
  return {{"rules", rules}};
}

RuleSet RuleSet::from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("rules") || !doc["rules"].is_array()) {
    throw ContractViolation("rule set document needs a \"rules\" array");
  }
  RuleSet set;
  for (const auto& item : doc["rules"]) {
    GuardRule rule;
    try {
      rule.rule_id = item.at("rule_id").get<std::string>();
      rule.kind = parse_guard_rule_kind(item.at("kind").get<std::string>());
      rule.pattern = item.at("pattern").get<std::string>();
      if (item.contains("allowlist")) {
        rule.allowlist = item["allowlist"].get<std::vector<std::string>>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw ContractViolation(fmt::format("malformed guard rule: {}", e.what()));
    }
    set.add(std::move(rule));
  }
  return set;
}

RuleSet default_rules(const DefaultRuleOptions& options) {
  RuleSet set;
  set.add({std::string(kRuleTorchNn), GuardRuleKind::kForbiddenSubstring, "torch.nn.",
           {"torch.nn.Parameter", "torch.nn.init", "torch.nn.Module"}});
  set.add({std::string(kRuleTorchFunctional), GuardRuleKind::kForbiddenSubstring,
           "torch.nn.functional", {}});
  set.add({std::string(kRuleTry), GuardRuleKind::kForbiddenToken, "try", {}});
  set.add({std::string(kRuleExcept), GuardRuleKind::kForbiddenToken, "except", {}});
  set.add({std::string(kRulePassClass), GuardRuleKind::kEmptyClassBody, "pass", {}});
  if (!options.entry_class.empty()) {
    set.add({std::string(kRuleEntryClass), GuardRuleKind::kRequiredMarker, options.entry_class, {}});
  }
  return set;
}

GuardVerdict check_candidate(std::string_view source, const RuleSet& rules,
                             const GuardOptions& options) {
  const auto lines = split_lines(source);
  GuardVerdict verdict;
  for (const auto& rule : rules.rules()) {
    switch (rule.kind) {
      case GuardRuleKind::kForbiddenSubstring:
        match_substring(source, lines, rule, verdict.violations);
        break;
      case GuardRuleKind::kForbiddenToken:
        match_token(source, lines, rule, verdict.violations);
        break;
      case GuardRuleKind::kEmptyClassBody:
        if (options.strict) {
          match_token(source, lines, rule, verdict.violations);
        } else {
          match_empty_class(lines, rule, verdict.violations);
        }
        break;
      case GuardRuleKind::kRequiredMarker:
        if (!has_class_definition(lines, rule.pattern)) {
          verdict.violations.push_back({rule.rule_id, {0, 0}});
        }
        break;
    }
  }
  verdict.accepted = verdict.violations.empty();
  return verdict;
}

}  // namespace krl
