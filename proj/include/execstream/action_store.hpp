#pragma once

// Persistent action store.
//
// Layout (big-endian):
//   "SSAS" | version u16 | seg_max u16
//   repeated until end of stream:
//     name_len u16 | name | kind u8 | id u32 | segment_count u32
//     repeated segment_count times: length u16 | length x u32 block index
//
// Actions are written sorted by executable name, then id, so the encoding of a
// given store is unique.

#include <iosfwd>
#include <span>
#include <string>

#include "execstream/bytes.hpp"
#include "execstream/model.hpp"

namespace execstream {

inline constexpr std::uint8_t kStoreMagic[4] = {'S', 'S', 'A', 'S'};

Bytes encode_actions(const ActionStore& store);
/// Throws StoreError carrying the byte offset of the failure.
ActionStore decode_actions(std::span<const std::uint8_t> bytes);

std::size_t save_actions(const ActionStore& store, std::ostream& sink);
ActionStore load_actions(std::istream& source);

ActionStore load_actions_file(const std::string& path);
/// Writes to `<path>.tmp`, flushes it to disk, then renames over `path`.
void save_actions_file_atomic(const ActionStore& store, const std::string& path);

}  // namespace execstream
