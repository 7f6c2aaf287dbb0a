#pragma once

// Random stores and request streams shared by the oracle tests.

#include <random>
#include <vector>

#include "execstream/model.hpp"
#include "reference_predictor.hpp"

namespace streams {

using namespace execstream;

struct Request {
  Token token;
  BlockIndex block;
  Micros now;
  bool end_run = false;
};

struct Case {
  std::size_t seg_max;
  bool prose;
  bool three;
  std::vector<reference::StoredAction> actions;
  std::vector<Request> requests;
};

inline ActionStore to_store(const Case& c, const std::string& exe) {
  ActionStore s;
  s.seg_max = static_cast<std::uint16_t>(c.seg_max);
  for (const auto& a : c.actions) {
    Action act;
    act.executable = exe;
    act.id = a.id;
    for (const auto& seg : a.segments) act.segments.push_back(Segment{seg});
    s.put(std::move(act));
  }
  return s;
}

// Streams mix faithful replays of stored actions, divergence partway through,
// random blocks, and clock jumps across the construction and idle windows.
inline Case random_case(std::mt19937_64& rng) {
  Case c;
  c.seg_max = 2 + rng() % 9;
  c.prose = rng() % 4 == 0;
  c.three = rng() % 4 == 0;
  const BlockIndex universe = 8 + static_cast<BlockIndex>(rng() % 40);
  std::size_t n_actions = rng() % 5;
  std::uint32_t id = static_cast<std::uint32_t>(rng() % 3);
  for (std::size_t i = 0; i < n_actions; ++i) {
    reference::StoredAction a;
    a.id = id;
    id += 1 + static_cast<std::uint32_t>(rng() % 3);
    std::size_t len = 1 + rng() % (3 * c.seg_max + 2);
    std::vector<BlockIndex> flat(len);
    for (auto& b : flat) b = static_cast<BlockIndex>(rng() % universe);
    for (std::size_t k = 0; k < flat.size(); k += c.seg_max) {
      a.segments.emplace_back(flat.begin() + k, flat.begin() + std::min(flat.size(), k + c.seg_max));
    }
    c.actions.push_back(std::move(a));
  }

  std::vector<Token> tokens;
  std::size_t n_tokens = 1 + rng() % 3;
  for (std::size_t i = 0; i < n_tokens; ++i) tokens.push_back(Token::from_seed(rng()));
  Micros now = 0;
  std::size_t n_req = 20 + rng() % 120;
  while (c.requests.size() < n_req) {
    const auto& tok = tokens[rng() % tokens.size()];
    auto step = [&] {
      auto r = rng() % 20;
      if (r == 0) return Micros{4'000'000};
      if (r == 1) return Micros{11'000'000};
      return static_cast<Micros>(rng() % 400'000);
    };
    auto mode = rng() % 6;
    if (mode <= 2 && !c.actions.empty()) {
      // Requests a client with a perfect cache would send for this action.
      const auto& a = c.actions[rng() % c.actions.size()];
      std::vector<BlockIndex> flat;
      for (const auto& s : a.segments) flat.insert(flat.end(), s.begin(), s.end());
      std::size_t stop = mode == 0 ? flat.size() : 1 + rng() % flat.size();
      for (std::size_t i = 0; i < stop; ++i) {
        now += step();
        c.requests.push_back({tok, flat[i], now});
      }
    } else if (mode == 3) {
      now += step();
      c.requests.push_back({tok, 0, now, true});
    } else {
      std::size_t k = 1 + rng() % 6;
      for (std::size_t i = 0; i < k; ++i) {
        now += step();
        c.requests.push_back({tok, static_cast<BlockIndex>(rng() % universe), now});
      }
    }
  }
  return c;
}

}  // namespace streams
