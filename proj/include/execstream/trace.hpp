#pragma once

#include <string>
#include <string_view>

#include "execstream/model.hpp"

namespace execstream {

/// Parses the line-oriented trace format:
///
///   # comment
///   <executable> <block_index> [<think_time_us>]
///
/// All events must name the same executable. Throws ParseError naming the
/// offending line.
Trace parse_trace(std::string_view text);

/// Canonical text form; parse_trace(format_trace(t)) == t.
std::string format_trace(const Trace& trace);

Trace load_trace_file(const std::string& path);

}  // namespace execstream
