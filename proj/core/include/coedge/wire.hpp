#pragma once

#include <cstdint>
#include <vector>

#include "coedge/kernels.hpp"

namespace coedge {

// Binary frame layout, bit-exact:
//   magic "GCDE" (4) | version u8 (=1) | msg_type u8 | frame_id u64 LE |
//   flags u8 (bit0: payload zlib/DEFLATE-compressed) | payload_len u32 LE |
//   payload
constexpr size_t kWireHeaderSize = 19;
constexpr uint8_t kWireVersion = 1;
constexpr uint8_t kFlagCompressed = 0x01;

enum class MsgType : uint8_t {
  Config = 0,
  Tensors = 1,
  Result = 2,
  Ack = 3,
  Shutdown = 4,
};

// Logical message: payload is always the uncompressed bytes. Compression is
// a wire-level concern that encode/decode handle.
struct WireMessage {
  MsgType type = MsgType::Ack;
  uint64_t frame_id = 0;
  std::vector<uint8_t> payload;
};

bool operator==(const WireMessage& a, const WireMessage& b);

struct WireHeader {
  uint8_t version = 0;
  MsgType type = MsgType::Ack;
  uint64_t frame_id = 0;
  uint8_t flags = 0;
  uint32_t payload_len = 0;
};

// Throws BadMagicError / BadVersionError.
WireHeader parse_header(const uint8_t* data, size_t len);

// Compresses the payload when that makes it smaller (flag bit set), sends it
// raw otherwise. try_compress=false forces raw.
std::vector<uint8_t> encode_message(const WireMessage& msg, bool try_compress = true);

// Inverse of encode_message; throws BadMagicError, BadVersionError,
// TruncatedPayloadError. was_compressed reports the wire-level flag.
WireMessage decode_message(const uint8_t* data, size_t len, bool* was_compressed = nullptr);
WireMessage decode_message(const std::vector<uint8_t>& bytes, bool* was_compressed = nullptr);

// Tensor payload: count u16 LE, then per tensor ndims u8, dims u32 LE each,
// dtype u8, raw little-endian element data.
std::vector<uint8_t> encode_tensors(const std::vector<Tensor>& tensors);
std::vector<Tensor> decode_tensors(const std::vector<uint8_t>& bytes);

// zlib helpers (the engine compresses every transmitted payload that shrinks)
std::vector<uint8_t> zlib_compress(const std::vector<uint8_t>& raw);
std::vector<uint8_t> zlib_decompress(const uint8_t* data, size_t len);

}  // namespace coedge
