#include "coedge/wire.hpp"

#include <cstring>

#include <zlib.h>

#include "coedge/errors.hpp"

namespace coedge {

bool operator==(const WireMessage& a, const WireMessage& b) {
  return a.type == b.type && a.frame_id == b.frame_id && a.payload == b.payload;
}

namespace {

constexpr uint8_t kMagic[4] = {'G', 'C', 'D', 'E'};

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v & 0xff));
  out.push_back(static_cast<uint8_t>(v >> 8));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

uint16_t get_u16(const uint8_t* p) {
  return static_cast<uint16_t>(p[0] | (static_cast<uint16_t>(p[1]) << 8));
}

uint32_t get_u32(const uint8_t* p) {
  uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

uint64_t get_u64(const uint8_t* p) {
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

}  // namespace

std::vector<uint8_t> zlib_compress(const std::vector<uint8_t>& raw) {
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<uint8_t> out(bound);
  const int rc = compress2(out.data(), &bound, raw.data(), static_cast<uLong>(raw.size()),
                           Z_DEFAULT_COMPRESSION);
  if (rc != Z_OK) throw WireError("zlib compress failed");
  out.resize(bound);
  return out;
}

std::vector<uint8_t> zlib_decompress(const uint8_t* data, size_t len) {
  z_stream zs{};
  if (inflateInit(&zs) != Z_OK) throw WireError("zlib inflateInit failed");
  zs.next_in = const_cast<Bytef*>(data);
  zs.avail_in = static_cast<uInt>(len);

  std::vector<uint8_t> out;
  std::vector<uint8_t> chunk(16384);
  int rc = Z_OK;
  do {
    zs.next_out = chunk.data();
    zs.avail_out = static_cast<uInt>(chunk.size());
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw TruncatedPayloadError("corrupt compressed payload");
    }
    out.insert(out.end(), chunk.data(), chunk.data() + (chunk.size() - zs.avail_out));
  } while (rc != Z_STREAM_END);
  inflateEnd(&zs);
  return out;
}

WireHeader parse_header(const uint8_t* data, size_t len) {
  if (len < kWireHeaderSize) throw TruncatedPayloadError("short wire header");
  if (std::memcmp(data, kMagic, 4) != 0) throw BadMagicError("bad magic");
  WireHeader h;
  h.version = data[4];
  if (h.version != kWireVersion) throw BadVersionError("unsupported wire version");
  if (data[5] > static_cast<uint8_t>(MsgType::Shutdown)) {
    throw BadVersionError("unknown message type");
  }
  h.type = static_cast<MsgType>(data[5]);
  h.frame_id = get_u64(data + 6);
  h.flags = data[14];
  h.payload_len = get_u32(data + 15);
  return h;
}

std::vector<uint8_t> encode_message(const WireMessage& msg, bool try_compress) {
  const std::vector<uint8_t>* payload = &msg.payload;
  std::vector<uint8_t> compressed;
  uint8_t flags = 0;
  if (try_compress && !msg.payload.empty()) {
    compressed = zlib_compress(msg.payload);
    if (compressed.size() < msg.payload.size()) {
      payload = &compressed;
      flags |= kFlagCompressed;
    }
  }

  std::vector<uint8_t> out;
  out.reserve(kWireHeaderSize + payload->size());
  for (uint8_t m : kMagic) out.push_back(m);
  out.push_back(kWireVersion);
  out.push_back(static_cast<uint8_t>(msg.type));
  put_u64(out, msg.frame_id);
  out.push_back(flags);
  put_u32(out, static_cast<uint32_t>(payload->size()));
  out.insert(out.end(), payload->begin(), payload->end());
  return out;
}

WireMessage decode_message(const uint8_t* data, size_t len, bool* was_compressed) {
  const WireHeader h = parse_header(data, len);
  if (len < kWireHeaderSize + h.payload_len) {
    throw TruncatedPayloadError("payload shorter than payload_len");
  }
  WireMessage msg;
  msg.type = h.type;
  msg.frame_id = h.frame_id;
  if (was_compressed) *was_compressed = (h.flags & kFlagCompressed) != 0;
  if (h.flags & kFlagCompressed) {
    msg.payload = zlib_decompress(data + kWireHeaderSize, h.payload_len);
  } else {
    msg.payload.assign(data + kWireHeaderSize, data + kWireHeaderSize + h.payload_len);
  }
  return msg;
}

WireMessage decode_message(const std::vector<uint8_t>& bytes, bool* was_compressed) {
  return decode_message(bytes.data(), bytes.size(), was_compressed);
}

std::vector<uint8_t> encode_tensors(const std::vector<Tensor>& tensors) {
  std::vector<uint8_t> out;
  put_u16(out, static_cast<uint16_t>(tensors.size()));
  for (const Tensor& t : tensors) {
    out.push_back(static_cast<uint8_t>(t.dims.size()));
    for (uint32_t d : t.dims) put_u32(out, d);
    out.push_back(static_cast<uint8_t>(t.dtype));
    if (t.dtype == Dtype::F32) {
      for (float v : t.f) {
        uint32_t bits;
        std::memcpy(&bits, &v, 4);
        put_u32(out, bits);
      }
    } else {
      for (int32_t v : t.i) put_u32(out, static_cast<uint32_t>(v));
    }
  }
  return out;
}

std::vector<Tensor> decode_tensors(const std::vector<uint8_t>& bytes) {
  size_t pos = 0;
  auto need = [&](size_t n) {
    if (pos + n > bytes.size()) throw TruncatedPayloadError("truncated tensor payload");
  };
  need(2);
  const uint16_t count = get_u16(bytes.data());
  pos = 2;

  std::vector<Tensor> out;
  out.reserve(count);
  for (uint16_t t = 0; t < count; ++t) {
    need(1);
    const uint8_t ndims = bytes[pos++];
    std::vector<uint32_t> dims(ndims);
    need(4ull * ndims);
    size_t elems = 1;
    for (uint8_t d = 0; d < ndims; ++d) {
      dims[d] = get_u32(bytes.data() + pos);
      pos += 4;
      elems *= dims[d];
    }
    need(1);
    const uint8_t dtype = bytes[pos++];
    if (dtype > 1) throw TruncatedPayloadError("unknown tensor dtype");
    need(4 * elems);
    Tensor tensor;
    tensor.dims = std::move(dims);
    tensor.dtype = static_cast<Dtype>(dtype);
    if (tensor.dtype == Dtype::F32) {
      tensor.f.resize(elems);
      for (size_t e = 0; e < elems; ++e) {
        const uint32_t bits = get_u32(bytes.data() + pos);
        pos += 4;
        std::memcpy(&tensor.f[e], &bits, 4);
      }
    } else {
      tensor.i.resize(elems);
      for (size_t e = 0; e < elems; ++e) {
        tensor.i[e] = static_cast<int32_t>(get_u32(bytes.data() + pos));
        pos += 4;
      }
    }
    out.push_back(std::move(tensor));
  }
  return out;
}

}  // namespace coedge
