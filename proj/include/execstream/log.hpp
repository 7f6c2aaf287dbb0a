#pragma once

// Structured log lines on stderr: `ts level component message key=value ...`.

#include <initializer_list>
#include <string>
#include <string_view>
#include <utility>

namespace execstream::log {

enum class Level { debug, info, warn, error, off };

Level parse_level(std::string_view text);
void set_level(Level level);

using Field = std::pair<std::string_view, std::string>;

/// `message` and keys must not contain spaces; values are quoted when needed.
void write(Level level, std::string_view component, std::string_view message, std::initializer_list<Field> fields = {});

inline void debug(std::string_view c, std::string_view m, std::initializer_list<Field> f = {}) { write(Level::debug, c, m, f); }
inline void info(std::string_view c, std::string_view m, std::initializer_list<Field> f = {}) { write(Level::info, c, m, f); }
inline void warn(std::string_view c, std::string_view m, std::initializer_list<Field> f = {}) { write(Level::warn, c, m, f); }
inline void error(std::string_view c, std::string_view m, std::initializer_list<Field> f = {}) { write(Level::error, c, m, f); }

/// Renders the part after the timestamp and level; exposed for tests.
std::string format_fields(std::string_view component, std::string_view message, std::initializer_list<Field> fields);

}  // namespace execstream::log
