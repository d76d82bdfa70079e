// Copyright (c) 2026 The krl Authors
// SPDX-License-Identifier: Apache-2.0

#include "krl/response_format.hpp"

#include <cctype>
#include <vector>

#include "krl/errors.hpp"

namespace krl {
namespace {

std::string trim_copy(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

struct FenceLine {
  std::size_t begin;  // first byte of the line
  std::size_t end;    // one past the newline (or end of text)
};

}  // namespace

ParsedResponse parse_response(std::string_view text) {
  std::vector<FenceLine> fences;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    const std::size_t next = eol == std::string_view::npos ? text.size() : eol + 1;
    std::size_t i = pos;
    while (i < text.size() && (text[i] == ' ' || text[i] == '\t')) ++i;
    if (text.substr(i, 3) == "```") fences.push_back({pos, next});
    pos = next;
  }
  if (fences.size() < 2) throw PolicyError("response has no complete fenced code block");
  // Fences pair up in order; take the last complete pair.
  const std::size_t pairs = fences.size() / 2;
  const FenceLine& open = fences[2 * (pairs - 1)];
  const FenceLine& close = fences[2 * (pairs - 1) + 1];

  ParsedResponse out;
  out.cot_full = trim_copy(text.substr(0, open.begin));
  std::string_view kernel = text.substr(open.end, close.begin - open.end);
  if (!kernel.empty() && kernel.back() == '\n') kernel.remove_suffix(1);
  out.kernel_source = std::string(kernel);
  out.cot_summary = trim_copy(text.substr(close.end));
  if (trim_copy(out.kernel_source).empty()) throw PolicyError("fenced code block is empty");
  return out;
}

}  // namespace krl
