// Copyright (c) 2026 The krl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Splits a raw model response into chain of thought, kernel and summary:
// the kernel is the last fenced code block, the summary is the prose after
// it, and everything before it is the chain of thought.

#pragma once

#include <string>
#include <string_view>

namespace krl {

struct ParsedResponse {
  std::string cot_full;
  std::string kernel_source;
  std::string cot_summary;
};

// Throws PolicyError when the response has no complete fenced block.
ParsedResponse parse_response(std::string_view text);

}  // namespace krl
