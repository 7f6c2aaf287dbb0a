#include "execstream/wire.hpp"

#include <algorithm>

#include "execstream/errors.hpp"

namespace execstream::wire {
namespace {

void check_preamble(ByteReader& r) {
  auto m0 = r.u8();
  auto m1 = r.u8();
  if (m0 != kMagic0 || m1 != kMagic1) throw ProtocolError("bad magic");
  auto version = r.u8();
  if (version != kVersion) throw ProtocolError("unsupported version " + std::to_string(version));
}

RequestFrame read_request(ByteReader& r) {
  check_preamble(r);
  auto type = r.u8();
  if (type != static_cast<std::uint8_t>(RequestType::fetch) &&
      type != static_cast<std::uint8_t>(RequestType::end_run)) {
    throw ProtocolError("unexpected request type " + std::to_string(type));
  }
  RequestFrame f;
  f.type = static_cast<RequestType>(type);
  auto token = r.raw(16);
  std::copy(token.begin(), token.end(), f.token.bytes.begin());
  auto name_len = r.u16();
  if (name_len == 0) throw ValidationError("empty executable name");
  if (name_len > kMaxNameBytes) throw ProtocolError("executable name too long");
  f.executable = r.str(name_len);
  f.block = r.u32();
  return f;
}

ResponseFrame read_response(ByteReader& r, std::size_t block_size) {
  check_preamble(r);
  auto type = r.u8();
  if (type != kResponseType) throw ProtocolError("unexpected response type " + std::to_string(type));
  auto status = r.u8();
  if (status > static_cast<std::uint8_t>(Status::out_of_range)) {
    throw ProtocolError("unknown status " + std::to_string(status));
  }
  ResponseFrame f;
  f.status = static_cast<Status>(status);
  auto count = r.u16();
  if (f.status != Status::ok && count != 0) throw ProtocolError("error response carries blocks");
  f.blocks.reserve(count);
  for (std::uint16_t i = 0; i < count; ++i) {
    BlockPayload p;
    p.index = r.u32();
    auto data = r.raw(block_size);
    p.data.assign(data.begin(), data.end());
    f.blocks.push_back(std::move(p));
  }
  return f;
}

}  // namespace

const char* to_string(Status s) {
  switch (s) {
    case Status::ok:
      return "ok";
    case Status::unknown_executable:
      return "unknown_executable";
    case Status::out_of_range:
      return "out_of_range";
  }
  return "unknown";
}

void encode_request(const RequestFrame& frame, Bytes& out) {
  if (frame.executable.empty()) throw ValidationError("empty executable name");
  if (frame.executable.size() > kMaxNameBytes) throw ValidationError("executable name exceeds 255 bytes");
  out.reserve(out.size() + frame.encoded_size());
  ByteWriter w(out);
  w.u8(kMagic0);
  w.u8(kMagic1);
  w.u8(kVersion);
  w.u8(static_cast<std::uint8_t>(frame.type));
  w.raw(frame.token.bytes);
  w.u16(static_cast<std::uint16_t>(frame.executable.size()));
  w.raw(frame.executable);
  w.u32(frame.block);
}

Bytes encode_request(const RequestFrame& frame) {
  Bytes out;
  encode_request(frame, out);
  return out;
}

RequestFrame decode_request(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  auto f = read_request(r);
  if (!r.empty()) throw ProtocolError("trailing bytes after request");
  return f;
}

void encode_response(const ResponseFrame& frame, std::size_t block_size, Bytes& out) {
  if (frame.status != Status::ok && !frame.blocks.empty()) {
    throw ValidationError("error response must not carry blocks");
  }
  if (frame.blocks.size() > kMaxBlocksPerResponse) throw ValidationError("too many blocks in response");
  out.reserve(out.size() + frame.encoded_size(block_size));
  ByteWriter w(out);
  w.u8(kMagic0);
  w.u8(kMagic1);
  w.u8(kVersion);
  w.u8(kResponseType);
  w.u8(static_cast<std::uint8_t>(frame.status));
  w.u16(static_cast<std::uint16_t>(frame.blocks.size()));
  for (const auto& b : frame.blocks) {
    if (b.data.size() != block_size) throw ValidationError("payload size does not match block size");
    w.u32(b.index);
    w.raw(b.data);
  }
}

Bytes encode_response(const ResponseFrame& frame, std::size_t block_size) {
  Bytes out;
  encode_response(frame, block_size, out);
  return out;
}

ResponseFrame decode_response(std::span<const std::uint8_t> bytes, std::size_t block_size) {
  ByteReader r(bytes);
  auto f = read_response(r, block_size);
  if (!r.empty()) throw ProtocolError("trailing bytes after response");
  return f;
}

std::optional<DecodedRequest> try_decode_request(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  try {
    auto f = read_request(r);
    return DecodedRequest{std::move(f), r.offset()};
  } catch (const TruncatedError&) {
    return std::nullopt;
  }
}

std::optional<DecodedResponse> try_decode_response(std::span<const std::uint8_t> bytes,
                                                   std::size_t block_size) {
  ByteReader r(bytes);
  try {
    auto f = read_response(r, block_size);
    return DecodedResponse{std::move(f), r.offset()};
  } catch (const TruncatedError&) {
    return std::nullopt;
  }
}

std::size_t response_length(std::span<const std::uint8_t> header, std::size_t block_size) {
  if (header.size() < kResponseHeaderBytes) throw TruncatedError("short response header");
  if (header[0] != kMagic0 || header[1] != kMagic1) throw ProtocolError("bad magic");
  std::size_t count = (static_cast<std::size_t>(header[5]) << 8) | header[6];
  return kResponseHeaderBytes + count * (4 + block_size);
}

}  // namespace execstream::wire
