#pragma once

// Domain types shared by the server, the client runtime and the simulator.

#include <array>
#include <compare>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace execstream {

/// Index of a fixed-size block within an executable image.
using BlockIndex = std::uint32_t;
using ActionId = std::uint32_t;

/// Microseconds on a virtual or wall clock.
using Micros = std::int64_t;

inline constexpr std::uint32_t kDefaultBlockSize = 4096;
inline constexpr std::uint16_t kDefaultSegMax = 32;

/// Opaque 16-byte identifier of one executing action instance.
struct Token {
  std::array<std::uint8_t, 16> bytes{};

  auto operator<=>(const Token&) const = default;
  std::string hex() const;
  static Token from_seed(std::uint64_t seed);
};

struct Segment {
  std::vector<BlockIndex> blocks;

  std::size_t size() const { return blocks.size(); }
  BlockIndex front() const { return blocks.front(); }
  bool operator==(const Segment&) const = default;
};

enum class ActionKind : std::uint8_t { startup = 0, exit = 1, workload = 2 };

std::string_view to_string(ActionKind kind);

struct Action {
  std::string executable;
  ActionKind kind = ActionKind::workload;
  ActionId id = 0;
  std::vector<Segment> segments;

  /// Concatenation of all segments, i.e. the recorded block stream.
  std::vector<BlockIndex> flatten() const;
  std::size_t block_count() const;
  bool operator==(const Action&) const = default;
};

struct TraceEvent {
  BlockIndex block = 0;
  Micros think_time = 0;
  bool operator==(const TraceEvent&) const = default;
};

struct Trace {
  std::string executable;
  std::vector<TraceEvent> events;

  std::vector<BlockIndex> blocks() const;
  std::size_t distinct_blocks() const;
  bool operator==(const Trace&) const = default;
};

/// All known actions, keyed by executable name, each list ordered by id.
struct ActionStore {
  static constexpr std::uint16_t kFormatVersion = 1;

  std::uint16_t format_version = kFormatVersion;
  std::uint16_t seg_max = kDefaultSegMax;
  std::map<std::string, std::vector<Action>, std::less<>> actions;

  std::size_t action_count() const;
  /// Inserts keeping per-executable id order. Replaces an action with the same id.
  void put(Action action);
  const std::vector<Action>* find(std::string_view executable) const;
  const Action* find(std::string_view executable, ActionId id) const;
  bool operator==(const ActionStore&) const = default;
};

/// Greedy left-to-right chunking into segments of `seg_max` blocks; only the
/// last segment may be shorter. Throws ValidationError on empty input or
/// seg_max < 2.
std::vector<Segment> segment_split(std::span<const BlockIndex> blocks, std::size_t seg_max);

}  // namespace execstream
