#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fcmtm/hdr_io.hpp"
#include "fcmtm/tensor.hpp"

namespace fcmtm {

/// One named convolution layer as stored in an FCMW container.
struct LayerRecord {
  std::string name;
  Tensorf weight;  ///< (out, in, kh, kw)
  Tensorf bias;    ///< (out)
};

inline constexpr char kFcmwMagic[4] = {'F', 'C', 'M', 'W'};
inline constexpr std::uint16_t kFcmwVersion = 1;

// Layout, all integers little-endian:
//   "FCMW" | u16 version | u16 layer_count |
//   per layer: u16 name_len, name (UTF-8), u32 out, u32 in, u32 kh, u32 kw,
//              f32 weights[out*in*kh*kw] (row-major), f32 bias[out] |
//   u32 CRC-32 of every preceding byte
Bytes encode_fcmw(std::span<const LayerRecord> layers);
std::vector<LayerRecord> decode_fcmw(ByteView bytes);

/// Standard CRC-32 (zlib polynomial).
std::uint32_t crc32_of(ByteView bytes);

}  // namespace fcmtm
