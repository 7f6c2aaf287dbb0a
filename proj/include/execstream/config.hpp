#pragma once

// key=value configuration shared by every subcommand. Files are read first,
// then `--set key=value` overrides; unknown keys are rejected.

#include <string>
#include <string_view>
#include <vector>

#include "execstream/latency.hpp"
#include "execstream/log.hpp"
#include "execstream/runtime.hpp"
#include "execstream/server.hpp"

namespace execstream {

struct Settings {
  std::string server_addr = "127.0.0.1:7411";
  std::string listen_addr = "127.0.0.1:7411";
  ServerConfig server;
  ClientConfig client;
  LatencyModel latency;
  std::size_t readahead_window_max = 32;
  std::size_t loss_replications = 2000;
  log::Level log_level = log::Level::info;
};

/// Every recognised key, in documentation order.
const std::vector<std::string_view>& config_keys();

/// Applies one key. Throws ConfigError on an unknown key or a bad value.
void apply_setting(Settings& settings, std::string_view key, std::string_view value);

/// Applies every `key=value` line of `text`; `#` starts a comment line.
void apply_config_text(Settings& settings, std::string_view text, std::string_view source = "<config>");

void apply_config_file(Settings& settings, const std::string& path);

/// Applies a `key=value` override as given on the command line.
void apply_override(Settings& settings, std::string_view assignment);

}  // namespace execstream
