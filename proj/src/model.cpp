#include "execstream/model.hpp"

#include <algorithm>
#include <unordered_set>

#include "execstream/errors.hpp"

namespace execstream {

std::string Token::hex() const {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(32);
  for (auto b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xf]);
  }
  return out;
}

Token Token::from_seed(std::uint64_t seed) {
  // splitmix64, two draws
  Token t;
  for (int half = 0; half < 2; ++half) {
    seed += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = seed;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z ^= z >> 31;
    for (int i = 0; i < 8; ++i) t.bytes[half * 8 + i] = static_cast<std::uint8_t>(z >> (8 * i));
  }
  return t;
}

std::string_view to_string(ActionKind kind) {
  switch (kind) {
    case ActionKind::startup:
      return "startup";
    case ActionKind::exit:
      return "exit";
    case ActionKind::workload:
      return "workload";
  }
  return "unknown";
}

std::vector<BlockIndex> Action::flatten() const {
  std::vector<BlockIndex> out;
  out.reserve(block_count());
  for (const auto& seg : segments) out.insert(out.end(), seg.blocks.begin(), seg.blocks.end());
  return out;
}

std::size_t Action::block_count() const {
  std::size_t n = 0;
  for (const auto& seg : segments) n += seg.size();
  return n;
}

std::vector<BlockIndex> Trace::blocks() const {
  std::vector<BlockIndex> out;
  out.reserve(events.size());
  for (const auto& e : events) out.push_back(e.block);
  return out;
}

std::size_t Trace::distinct_blocks() const {
  std::unordered_set<BlockIndex> seen;
  for (const auto& e : events) seen.insert(e.block);
  return seen.size();
}

std::size_t ActionStore::action_count() const {
  std::size_t n = 0;
  for (const auto& [_, list] : actions) n += list.size();
  return n;
}

void ActionStore::put(Action action) {
  auto& list = actions[action.executable];
  auto it = std::lower_bound(list.begin(), list.end(), action.id,
                             [](const Action& a, ActionId id) { return a.id < id; });
  if (it != list.end() && it->id == action.id) {
    *it = std::move(action);
  } else {
    list.insert(it, std::move(action));
  }
}

const std::vector<Action>* ActionStore::find(std::string_view executable) const {
  auto it = actions.find(executable);
  return it == actions.end() ? nullptr : &it->second;
}

const Action* ActionStore::find(std::string_view executable, ActionId id) const {
  const auto* list = find(executable);
  if (list == nullptr) return nullptr;
  for (const auto& a : *list) {
    if (a.id == id) return &a;
  }
  return nullptr;
}

std::vector<Segment> segment_split(std::span<const BlockIndex> blocks, std::size_t seg_max) {
  if (seg_max < 2) throw ValidationError("seg_max must be at least 2");
  if (blocks.empty()) throw ValidationError("no blocks");
  std::vector<Segment> out;
  out.reserve((blocks.size() + seg_max - 1) / seg_max);
  for (std::size_t pos = 0; pos < blocks.size(); pos += seg_max) {
    auto n = std::min(seg_max, blocks.size() - pos);
    out.push_back(Segment{{blocks.begin() + static_cast<std::ptrdiff_t>(pos),
                           blocks.begin() + static_cast<std::ptrdiff_t>(pos + n)}});
  }
  return out;
}

}  // namespace execstream
