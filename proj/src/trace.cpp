#include "execstream/trace.hpp"

#include <charconv>
#include <fstream>
#include <limits>
#include <sstream>
#include <vector>

#include "execstream/errors.hpp"

namespace execstream {
namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    if (i > start) fields.push_back(line.substr(start, i - start));
  }
  return fields;
}

template <typename T>
T parse_number(std::string_view field, std::size_t line_no, const char* what) {
  if (!field.empty() && field.front() == '-') {
    throw ParseError(line_no, std::string("negative ") + what + " '" + std::string(field) + "'");
  }
  T value{};
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw ParseError(line_no, std::string("invalid ") + what + " '" + std::string(field) + "'");
  }
  return value;
}

}  // namespace

Trace parse_trace(std::string_view text) {
  Trace trace;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;

    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    auto fields = split_fields(line);
    if (fields.empty()) continue;
    if (fields.size() < 2 || fields.size() > 3) {
      throw ParseError(line_no, "expected '<executable> <block_index> [<think_time_us>]'");
    }
    if (trace.events.empty()) {
      trace.executable = std::string(fields[0]);
    } else if (fields[0] != trace.executable) {
      throw ParseError(line_no, "executable '" + std::string(fields[0]) +
                                    "' differs from '" + trace.executable + "'");
    }
    TraceEvent ev;
    ev.block = parse_number<BlockIndex>(fields[1], line_no, "block index");
    if (fields.size() == 3) {
      auto think = parse_number<std::uint64_t>(fields[2], line_no, "think time");
      if (think > static_cast<std::uint64_t>(std::numeric_limits<Micros>::max())) {
        throw ParseError(line_no, "think time out of range");
      }
      ev.think_time = static_cast<Micros>(think);
    }
    trace.events.push_back(ev);
    if (end == text.size()) break;
  }
  if (trace.events.empty()) throw ParseError(0, "empty trace");
  return trace;
}

std::string format_trace(const Trace& trace) {
  std::string out;
  for (const auto& ev : trace.events) {
    out += trace.executable;
    out += ' ';
    out += std::to_string(ev.block);
    out += ' ';
    out += std::to_string(ev.think_time);
    out += '\n';
  }
  return out;
}

Trace load_trace_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(0, "cannot open trace file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_trace(buf.str());
}

}  // namespace execstream
