#include "execstream/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "execstream/errors.hpp"
#include "execstream/net.hpp"

namespace execstream {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

[[noreturn]] void bad(std::string_view key, std::string_view value) {
  throw ConfigError("invalid value for " + std::string(key) + ": '" + std::string(value) + "'");
}

template <typename T>
T integer(std::string_view key, std::string_view value, T min = 0) {
  T out{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size() || out < min) bad(key, value);
  return out;
}

double real(std::string_view key, std::string_view value) {
  std::string s(value);
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v) || v < 0) bad(key, value);
  return v;
}

bool boolean(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  bad(key, value);
}

std::vector<std::string> split_names(std::string_view value) {
  std::vector<std::string> out;
  while (!value.empty()) {
    auto comma = value.find(',');
    auto item = trim(value.substr(0, comma));
    if (!item.empty()) out.emplace_back(item);
    if (comma == std::string_view::npos) break;
    value.remove_prefix(comma + 1);
  }
  return out;
}

}  // namespace

const std::vector<std::string_view>& config_keys() {
  static const std::vector<std::string_view> keys = {
      "server_addr",        "listen_addr",         "block_size",         "pool_capacity",
      "cache_pages",        "workers",             "ring_capacity",      "redirect_names",
      "clock",              "token_seed",         "send_end_marker",          "prefetch_strategy",  "variance_threshold",
      "prefetch_window",    "variance_estimator",  "memcache_capacity",  "seg_max",
      "match_checkpoints",  "first_segment_matches", "construction_window", "session_idle_timeout",
      "lat.preset",         "lat.net_rtt",         "lat.net_per_block",  "lat.disk_read",
      "lat.mem_read",       "lat.loss_rate",       "lat.retransmit_penalty", "lat.seed",
      "readahead_window_max", "loss_replications", "log_level",
  };
  return keys;
}

void apply_setting(Settings& s, std::string_view key, std::string_view value) {
  value = trim(value);
  if (key == "server_addr") {
    parse_endpoint(value);
    s.server_addr = std::string(value);
  } else if (key == "listen_addr") {
    parse_endpoint(value);
    s.listen_addr = std::string(value);
  } else if (key == "block_size") {
    auto bs = integer<std::uint32_t>(key, value, 1);
    s.server.block_size = bs;
    s.client.block_size = bs;
  } else if (key == "pool_capacity") {
    s.client.pool_capacity = integer<std::size_t>(key, value, 1);
  } else if (key == "cache_pages") {
    s.client.cache_pages = integer<std::size_t>(key, value, 1);
  } else if (key == "workers") {
    s.client.workers = integer<std::size_t>(key, value, 1);
  } else if (key == "ring_capacity") {
    s.client.ring_capacity = integer<std::size_t>(key, value, 1);
  } else if (key == "redirect_names") {
    s.client.redirect_names = split_names(value);
  } else if (key == "clock") {
    if (value == "virtual") {
      s.client.clock = ClockMode::virtual_clock;
    } else if (value == "wall") {
      s.client.clock = ClockMode::wall;
    } else {
      bad(key, value);
    }
  } else if (key == "send_end_marker") {
    s.client.send_end_marker = boolean(key, value);
  } else if (key == "token_seed") {
    s.client.token_seed = integer<std::uint64_t>(key, value);
  } else if (key == "prefetch_strategy") {
    s.server.provider.strategy = parse_strategy(value);
  } else if (key == "variance_threshold") {
    s.server.provider.variance_threshold = real(key, value);
  } else if (key == "prefetch_window") {
    s.server.provider.prefetch_window = integer<std::size_t>(key, value);
  } else if (key == "variance_estimator") {
    if (value == "mean") {
      s.server.provider.estimator = VarianceEstimator::mean;
    } else if (value == "sum") {
      s.server.provider.estimator = VarianceEstimator::sum;
    } else {
      bad(key, value);
    }
  } else if (key == "memcache_capacity") {
    s.server.provider.memcache_capacity = integer<std::size_t>(key, value);
  } else if (key == "seg_max") {
    auto v = integer<unsigned>(key, value, 2);
    if (v > 0xffff) bad(key, value);
    s.server.predictor.seg_max = static_cast<std::uint16_t>(v);
  } else if (key == "match_checkpoints") {
    if (value == "figure") {
      s.server.predictor.checkpoints = CheckpointMode::figure;
    } else if (value == "prose") {
      s.server.predictor.checkpoints = CheckpointMode::prose;
    } else {
      bad(key, value);
    }
  } else if (key == "first_segment_matches") {
    auto v = integer<int>(key, value, 2);
    if (v > 3) bad(key, value);
    s.server.predictor.first_segment_matches = v;
  } else if (key == "construction_window") {
    s.server.predictor.construction_window = integer<Micros>(key, value, 1);
  } else if (key == "session_idle_timeout") {
    s.server.predictor.session_idle_timeout = integer<Micros>(key, value, 1);
  } else if (key == "lat.preset") {
    auto seed = s.latency.seed;
    auto loss = s.latency.loss_rate;
    if (value == "wired") {
      s.latency = LatencyModel{};
    } else if (value == "wifi") {
      s.latency = LatencyModel::wifi();
    } else {
      bad(key, value);
    }
    s.latency.seed = seed;
    s.latency.loss_rate = loss;
  } else if (key == "lat.net_rtt") {
    s.latency.net_rtt_us = real(key, value);
  } else if (key == "lat.net_per_block") {
    s.latency.net_per_block_us = real(key, value);
  } else if (key == "lat.disk_read") {
    s.latency.disk_read_us = real(key, value);
  } else if (key == "lat.mem_read") {
    s.latency.mem_read_us = real(key, value);
  } else if (key == "lat.loss_rate") {
    auto v = real(key, value);
    if (v > 1) bad(key, value);
    s.latency.loss_rate = v;
  } else if (key == "lat.retransmit_penalty") {
    s.latency.retransmit_penalty_us = real(key, value);
  } else if (key == "lat.seed") {
    s.latency.seed = integer<std::uint64_t>(key, value);
  } else if (key == "readahead_window_max") {
    s.readahead_window_max = integer<std::size_t>(key, value, 4);
  } else if (key == "loss_replications") {
    s.loss_replications = integer<std::size_t>(key, value, 1);
  } else if (key == "log_level") {
    s.log_level = log::parse_level(value);
  } else {
    throw ConfigError("unknown config key '" + std::string(key) + "'");
  }
  s.client.latency = s.latency;
}

void apply_config_text(Settings& settings, std::string_view text, std::string_view source) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    auto nl = text.find('\n');
    auto line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(std::string(source) + ":" + std::to_string(line_no) + ": expected key=value");
    }
    try {
      apply_setting(settings, trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(std::string(source) + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void apply_config_file(Settings& settings, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  apply_config_text(settings, ss.str(), path);
}

void apply_override(Settings& settings, std::string_view assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("override must be key=value, got '" + std::string(assignment) + "'");
  }
  apply_setting(settings, trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

}  // namespace execstream
