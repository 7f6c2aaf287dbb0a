#include "execstream/action_store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

#include "execstream/errors.hpp"

namespace execstream {

Bytes encode_actions(const ActionStore& store) {
  Bytes out;
  ByteWriter w(out);
  w.raw(std::span<const std::uint8_t>(kStoreMagic));
  w.u16(store.format_version);
  if (store.seg_max < 2) throw ValidationError("seg_max must be at least 2");
  w.u16(store.seg_max);
  for (const auto& [name, list] : store.actions) {
    std::vector<const Action*> ordered;
    for (const auto& a : list) ordered.push_back(&a);
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const Action* a, const Action* b) { return a->id < b->id; });
    for (const Action* ap : ordered) {
      const Action& action = *ap;
      if (action.executable.empty() || action.executable.size() > 0xffff) {
        throw ValidationError("action executable name length out of range");
      }
      if (action.executable != name) throw ValidationError("action filed under the wrong executable");
      if (action.segments.empty()) throw ValidationError("action without segments");
      w.u16(static_cast<std::uint16_t>(action.executable.size()));
      w.raw(action.executable);
      w.u8(static_cast<std::uint8_t>(action.kind));
      w.u32(action.id);
      w.u32(static_cast<std::uint32_t>(action.segments.size()));
      for (const auto& seg : action.segments) {
        if (seg.blocks.empty() || seg.blocks.size() > store.seg_max) {
          throw ValidationError("segment length out of range");
        }
        w.u16(static_cast<std::uint16_t>(seg.blocks.size()));
        for (auto b : seg.blocks) w.u32(b);
      }
    }
  }
  return out;
}

ActionStore decode_actions(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  ActionStore store;
  std::size_t at = 0;
  try {
    auto magic = r.raw(4);
    if (std::memcmp(magic.data(), kStoreMagic, 4) != 0) throw StoreError(0, "bad magic");
    at = r.offset();
    store.format_version = r.u16();
    if (store.format_version != ActionStore::kFormatVersion) {
      throw StoreError(at, "unsupported store version " + std::to_string(store.format_version));
    }
    at = r.offset();
    store.seg_max = r.u16();
    if (store.seg_max < 2) throw StoreError(at, "invalid seg_max " + std::to_string(store.seg_max));

    while (!r.empty()) {
      at = r.offset();
      Action action;
      auto name_len = r.u16();
      if (name_len == 0) throw StoreError(at, "empty executable name");
      action.executable = r.str(name_len);
      at = r.offset();
      auto kind = r.u8();
      if (kind > 2) throw StoreError(at, "unknown action kind " + std::to_string(kind));
      action.kind = static_cast<ActionKind>(kind);
      action.id = r.u32();
      at = r.offset();
      auto seg_count = r.u32();
      if (seg_count == 0) throw StoreError(at, "action without segments");
      for (std::uint32_t s = 0; s < seg_count; ++s) {
        at = r.offset();
        auto len = r.u16();
        if (len == 0 || len > store.seg_max) {
          throw StoreError(at, "segment length " + std::to_string(len) + " outside 1.." +
                                   std::to_string(store.seg_max));
        }
        Segment seg;
        seg.blocks.reserve(len);
        for (std::uint16_t i = 0; i < len; ++i) seg.blocks.push_back(r.u32());
        action.segments.push_back(std::move(seg));
      }
      if (store.find(action.executable, action.id) != nullptr) {
        throw StoreError(at, "duplicate action id " + std::to_string(action.id));
      }
      store.put(std::move(action));
    }
  } catch (const TruncatedError&) {
    throw StoreError(r.offset(), "truncated store");
  }
  return store;
}

std::size_t save_actions(const ActionStore& store, std::ostream& sink) {
  auto bytes = encode_actions(store);
  sink.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!sink) throw std::runtime_error("failed writing action store");
  return bytes.size();
}

ActionStore load_actions(std::istream& source) {
  Bytes bytes{std::istreambuf_iterator<char>(source), std::istreambuf_iterator<char>()};
  return decode_actions(bytes);
}

ActionStore load_actions_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open action store '" + path + "'");
  return load_actions(in);
}

void save_actions_file_atomic(const ActionStore& store, const std::string& path) {
  auto bytes = encode_actions(store);
  auto tmp = path + ".tmp";
  int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) throw std::runtime_error("cannot create '" + tmp + "': " + std::strerror(errno));
  std::size_t done = 0;
  while (done < bytes.size()) {
    auto n = ::write(fd, bytes.data() + done, bytes.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      ::close(fd);
      throw std::runtime_error("write to '" + tmp + "' failed: " + std::strerror(errno));
    }
    done += static_cast<std::size_t>(n);
  }
  ::fsync(fd);
  ::close(fd);
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw std::runtime_error("rename to '" + path + "' failed: " + std::strerror(errno));
  }
}

}  // namespace execstream
