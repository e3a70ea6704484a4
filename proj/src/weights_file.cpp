#include "fcmtm/weights_file.hpp"

#include <bit>
#include <cstring>
#include <limits>

#include <zlib.h>

namespace fcmtm {

namespace {

template <typename T>
void put(Bytes& out, T value) {
  static_assert(std::is_integral_v<T> || std::is_same_v<T, float>);
  std::uint8_t raw[sizeof(T)];
  if constexpr (std::is_same_v<T, float>) {
    put(out, std::bit_cast<std::uint32_t>(value));
    return;
  } else {
    for (std::size_t i = 0; i < sizeof(T); ++i) raw[i] = static_cast<std::uint8_t>(value >> (8 * i));
    out.insert(out.end(), raw, raw + sizeof(T));
  }
}

class Cursor {
 public:
  Cursor(ByteView bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    if constexpr (std::is_same_v<T, float>) {
      return std::bit_cast<float>(get<std::uint32_t>());
    } else {
      T value = 0;
      for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(T{bytes_[pos_ + i]} << (8 * i));
      pos_ += sizeof(T);
      return value;
    }
  }

  std::string text(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t n) const {
    if (remaining() < n) fail(ErrorCode::truncated_data, "weight file is truncated");
  }

 private:
  ByteView bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint32_t crc32_of(ByteView bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths
  std::size_t offset = 0;
  while (offset < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - offset, std::numeric_limits<uInt>::max()));
    crc = crc32(crc, bytes.data() + offset, chunk);
    offset += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

Bytes encode_fcmw(std::span<const LayerRecord> layers) {
  if (layers.size() > std::numeric_limits<std::uint16_t>::max())
    fail(ErrorCode::invalid_argument, "too many layers for an FCMW container");
  Bytes out(kFcmwMagic, kFcmwMagic + 4);
  put<std::uint16_t>(out, kFcmwVersion);
  put<std::uint16_t>(out, static_cast<std::uint16_t>(layers.size()));
  for (const auto& layer : layers) {
    if (layer.weight.rank() != 4 || layer.bias.rank() != 1 || layer.bias.dim(0) != layer.weight.dim(0))
      fail(ErrorCode::shape_mismatch, "layer '" + layer.name + "' has inconsistent weight/bias shapes");
    if (layer.name.size() > std::numeric_limits<std::uint16_t>::max())
      fail(ErrorCode::invalid_argument, "layer name too long");
    put<std::uint16_t>(out, static_cast<std::uint16_t>(layer.name.size()));
    out.insert(out.end(), layer.name.begin(), layer.name.end());
    for (int d = 0; d < 4; ++d) put<std::uint32_t>(out, static_cast<std::uint32_t>(layer.weight.dim(d)));
    for (Index i = 0; i < layer.weight.size(); ++i) put<float>(out, layer.weight[i]);
    for (Index i = 0; i < layer.bias.size(); ++i) put<float>(out, layer.bias[i]);
  }
  put<std::uint32_t>(out, crc32_of(out));
  return out;
}

std::vector<LayerRecord> decode_fcmw(ByteView bytes) {
  Cursor in(bytes);
  in.need(4);
  if (std::memcmp(bytes.data(), kFcmwMagic, 4) != 0) fail(ErrorCode::bad_magic, "not an FCMW weight file (bad magic)");
  in.text(4);
  const auto version = in.get<std::uint16_t>();
  if (version != kFcmwVersion)
    fail(ErrorCode::version_mismatch, "unsupported FCMW version " + std::to_string(version));
  const auto count = in.get<std::uint16_t>();
  std::vector<LayerRecord> layers;
  layers.reserve(count);
  for (std::uint16_t l = 0; l < count; ++l) {
    LayerRecord record;
    record.name = in.text(in.get<std::uint16_t>());
    Tensorf::Shape shape(4);
    for (auto& d : shape) d = static_cast<Index>(in.get<std::uint32_t>());
    const auto volume = static_cast<std::uint64_t>(shape[0]) * shape[1] * shape[2] * shape[3];
    if (volume > in.remaining() / 4) fail(ErrorCode::truncated_data, "weight file is truncated");
    record.weight = Tensorf(shape);
    for (Index i = 0; i < record.weight.size(); ++i) record.weight[i] = in.get<float>();
    record.bias = Tensorf({shape[0]});
    for (Index i = 0; i < record.bias.size(); ++i) record.bias[i] = in.get<float>();
    layers.push_back(std::move(record));
  }
  const std::size_t body = in.position();
  const auto stored = in.get<std::uint32_t>();
  if (in.remaining() != 0) fail(ErrorCode::malformed_header, "trailing bytes after FCMW checksum");
  if (stored != crc32_of(bytes.first(body))) fail(ErrorCode::checksum_mismatch, "FCMW checksum mismatch");
  return layers;
}

}  // namespace fcmtm
