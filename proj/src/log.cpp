#include "execstream/log.hpp"

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <memory>

#include "execstream/errors.hpp"

namespace execstream::log {

namespace {

std::shared_ptr<spdlog::logger> make_logger() {
  auto logger = spdlog::stderr_logger_mt("execstream");
  logger->set_pattern("%Y-%m-%dT%H:%M:%S.%eZ %l %v", spdlog::pattern_time_type::utc);
  logger->set_level(spdlog::level::info);
  logger->flush_on(spdlog::level::debug);
  return logger;
}

spdlog::logger& logger() {
  static auto instance = make_logger();
  return *instance;
}

spdlog::level::level_enum to_spd(Level level) {
  switch (level) {
    case Level::debug:
      return spdlog::level::debug;
    case Level::info:
      return spdlog::level::info;
    case Level::warn:
      return spdlog::level::warn;
    case Level::error:
      return spdlog::level::err;
    case Level::off:
      break;
  }
  return spdlog::level::off;
}

bool needs_quotes(std::string_view v) {
  if (v.empty()) return true;
  for (char c : v) {
    if (c == ' ' || c == '"' || c == '=' || c == '\t' || c == '\n') return true;
  }
  return false;
}

}  // namespace

Level parse_level(std::string_view text) {
  if (text == "debug") return Level::debug;
  if (text == "info") return Level::info;
  if (text == "warn") return Level::warn;
  if (text == "error") return Level::error;
  if (text == "off") return Level::off;
  throw ConfigError("unknown log level '" + std::string(text) + "'");
}

void set_level(Level level) { logger().set_level(to_spd(level)); }

std::string format_fields(std::string_view component, std::string_view message, std::initializer_list<Field> fields) {
  std::string line;
  line.append(component).append(" ").append(message);
  for (const auto& [key, value] : fields) {
    line.append(" ").append(key).append("=");
    if (!needs_quotes(value)) {
      line.append(value);
      continue;
    }
    line.push_back('"');
    for (char c : value) {
      if (c == '"' || c == '\\') line.push_back('\\');
      line.push_back(c == '\n' ? ' ' : c);
    }
    line.push_back('"');
  }
  return line;
}

void write(Level level, std::string_view component, std::string_view message, std::initializer_list<Field> fields) {
  auto& l = logger();
  auto lvl = to_spd(level);
  if (!l.should_log(lvl)) return;
  l.log(lvl, format_fields(component, message, fields));
}

}  // namespace execstream::log
