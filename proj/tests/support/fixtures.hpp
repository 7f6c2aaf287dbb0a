#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "execstream/model.hpp"
#include "execstream/server.hpp"

namespace fixtures {

using namespace execstream;

// Action of the worked example: (1,3,8,9) then (11,12,14,15) with SEG_MAX 4.
inline Action fig4_action() {
  return Action{"app", ActionKind::workload, 0, {Segment{{1, 3, 8, 9}}, Segment{{11, 12, 14, 15}}}};
}

inline ActionStore fig4_store() {
  ActionStore s;
  s.seg_max = 4;
  s.put(fig4_action());
  return s;
}

inline ServerConfig sim_server(std::uint16_t seg_max = kDefaultSegMax, Strategy strategy = Strategy::nv_async) {
  ServerConfig c;
  c.predictor.seg_max = seg_max;
  c.provider.strategy = strategy;
  c.provider.background_prefetch = false;
  c.drain_after_response = true;
  return c;
}

inline Trace make_trace(std::string exe, std::vector<BlockIndex> blocks, Micros think = 0) {
  Trace t;
  t.executable = std::move(exe);
  for (auto b : blocks) t.events.push_back({b, think});
  return t;
}

inline std::vector<std::uint8_t> from_hex(const std::string& text) {
  std::vector<std::uint8_t> out;
  int hi = -1;
  for (char c : text) {
    int v;
    if (c >= '0' && c <= '9') {
      v = c - '0';
    } else if (c >= 'a' && c <= 'f') {
      v = c - 'a' + 10;
    } else if (c >= 'A' && c <= 'F') {
      v = c - 'A' + 10;
    } else {
      continue;  // separators, spaces, newlines
    }
    if (hi < 0) {
      hi = v;
    } else {
      out.push_back(static_cast<std::uint8_t>(hi * 16 + v));
      hi = -1;
    }
  }
  if (hi >= 0) throw std::runtime_error("odd number of hex digits");
  return out;
}

// Golden files keep comments after '#'.
inline std::vector<std::uint8_t> golden(const std::string& name) {
  std::ifstream in(std::string(EXECSTREAM_GOLDEN_DIR) + "/" + name);
  if (!in) throw std::runtime_error("missing golden file " + name);
  std::string line, hex;
  while (std::getline(in, line)) hex += line.substr(0, line.find('#')) + "\n";
  return from_hex(hex);
}

}  // namespace fixtures
