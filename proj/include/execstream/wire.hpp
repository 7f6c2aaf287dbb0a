#pragma once

// Framing for block requests and block-stream responses. Big-endian.
//
//   request:  'S' 'F' | version=1 | type | token[16] | name_len u16 | name | block u32
//   response: 'S' 'F' | version=1 | type=1 | status u8 | count u16
//             | count x (block u32 | block_size payload bytes)
//
// Request type 0 fetches a block. Type 2 is an end-of-run notice: same layout,
// the block field is ignored, and the server answers with an empty ok response.
// block_size is fixed per connection and never appears on the wire.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "execstream/bytes.hpp"
#include "execstream/model.hpp"

namespace execstream::wire {

inline constexpr std::uint8_t kMagic0 = 0x53;  // 'S'
inline constexpr std::uint8_t kMagic1 = 0x46;  // 'F'
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::size_t kRequestFixedBytes = 2 + 1 + 1 + 16 + 2 + 4;
inline constexpr std::size_t kResponseHeaderBytes = 2 + 1 + 1 + 1 + 2;
inline constexpr std::size_t kMaxNameBytes = 255;
inline constexpr std::size_t kMaxBlocksPerResponse = 0xffff;

enum class RequestType : std::uint8_t { fetch = 0, end_run = 2 };
inline constexpr std::uint8_t kResponseType = 1;

enum class Status : std::uint8_t { ok = 0, unknown_executable = 1, out_of_range = 2 };

const char* to_string(Status s);

struct RequestFrame {
  Token token;
  std::string executable;
  BlockIndex block = 0;
  RequestType type = RequestType::fetch;

  std::size_t encoded_size() const { return kRequestFixedBytes + executable.size(); }
  bool operator==(const RequestFrame&) const = default;
};

struct BlockPayload {
  BlockIndex index = 0;
  Bytes data;
  bool operator==(const BlockPayload&) const = default;
};

struct ResponseFrame {
  Status status = Status::ok;
  std::vector<BlockPayload> blocks;

  std::size_t encoded_size(std::size_t block_size) const {
    return kResponseHeaderBytes + blocks.size() * (4 + block_size);
  }
  bool operator==(const ResponseFrame&) const = default;
};

/// Throws ValidationError on an empty or over-long name.
Bytes encode_request(const RequestFrame& frame);
void encode_request(const RequestFrame& frame, Bytes& out);

/// Decodes exactly one request spanning all of `bytes`.
RequestFrame decode_request(std::span<const std::uint8_t> bytes);

/// Throws ValidationError when status != ok with blocks, count > 65535, or a
/// payload does not match block_size.
Bytes encode_response(const ResponseFrame& frame, std::size_t block_size);
void encode_response(const ResponseFrame& frame, std::size_t block_size, Bytes& out);

ResponseFrame decode_response(std::span<const std::uint8_t> bytes, std::size_t block_size);

/// Stream decoding: parse one frame from the front of `bytes`. Returns the
/// frame and the number of bytes consumed, or nullopt when more bytes are
/// needed. Throws ProtocolError on a corrupt frame.
struct DecodedRequest {
  RequestFrame frame;
  std::size_t consumed;
};
std::optional<DecodedRequest> try_decode_request(std::span<const std::uint8_t> bytes);

struct DecodedResponse {
  ResponseFrame frame;
  std::size_t consumed;
};
std::optional<DecodedResponse> try_decode_response(std::span<const std::uint8_t> bytes,
                                                   std::size_t block_size);

/// Total length of the response whose header starts `header`, which must hold
/// at least kResponseHeaderBytes.
std::size_t response_length(std::span<const std::uint8_t> header, std::size_t block_size);

}  // namespace execstream::wire
