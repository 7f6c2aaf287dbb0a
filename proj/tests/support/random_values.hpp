#pragma once

#include <random>

#include "execstream/action_store.hpp"
#include "execstream/wire.hpp"

namespace randomgen {

using namespace execstream;
using namespace execstream::wire;

inline RequestFrame random_request(std::mt19937_64& rng) {
  RequestFrame f;
  for (auto& b : f.token.bytes) b = static_cast<std::uint8_t>(rng());
  std::size_t len = rng() % 8 == 0 ? kMaxNameBytes : 1 + rng() % 40;
  for (std::size_t i = 0; i < len; ++i) f.executable.push_back(static_cast<char>(1 + rng() % 255));
  f.block = static_cast<BlockIndex>(rng());
  f.type = rng() % 4 == 0 ? RequestType::end_run : RequestType::fetch;
  return f;
}

inline ResponseFrame random_response(std::mt19937_64& rng, std::size_t block_size) {
  ResponseFrame f;
  auto pick = rng() % 10;
  if (pick == 0) {
    f.status = Status::unknown_executable;
    return f;
  }
  if (pick == 1) {
    f.status = Status::out_of_range;
    return f;
  }
  std::size_t count = rng() % 50;
  for (std::size_t i = 0; i < count; ++i) {
    BlockPayload p;
    p.index = static_cast<BlockIndex>(rng());
    p.data.resize(block_size);
    for (auto& b : p.data) b = static_cast<std::uint8_t>(rng());
    f.blocks.push_back(std::move(p));
  }
  return f;
}

inline ActionStore random_store(std::mt19937_64& rng) {
  ActionStore s;
  s.seg_max = static_cast<std::uint16_t>(2 + rng() % 64);
  std::size_t exes = rng() % 4;
  for (std::size_t e = 0; e < exes; ++e) {
    std::string name = "exe_" + std::to_string(rng() % 1000);
    if (rng() % 5 == 0) name = std::string(1 + rng() % 255, static_cast<char>('a' + rng() % 26));
    std::size_t n = 1 + rng() % 5;
    for (std::size_t i = 0; i < n; ++i) {
      Action a;
      a.executable = name;
      a.kind = static_cast<ActionKind>(rng() % 3);
      a.id = static_cast<ActionId>(rng() % 100000);
      std::vector<BlockIndex> blocks(1 + rng() % 150);
      for (auto& b : blocks) b = static_cast<BlockIndex>(rng());
      a.segments = segment_split(blocks, s.seg_max);
      s.put(std::move(a));
    }
  }
  return s;
}

}  // namespace randomgen
