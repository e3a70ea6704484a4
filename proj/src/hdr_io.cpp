#include "fcmtm/hdr_io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstdio>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>

namespace fcmtm {

namespace {

constexpr int kMinRleWidth = 8;
constexpr int kMaxRleWidth = 0x7fff;

class Reader {
 public:
  explicit Reader(ByteView bytes) : bytes_(bytes) {}

  bool done() const { return pos_ >= bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t position() const { return pos_; }

  std::uint8_t byte() {
    if (done()) fail(ErrorCode::truncated_data, "unexpected end of image data");
    return bytes_[pos_++];
  }

  ByteView take(std::size_t n) {
    if (remaining() < n) fail(ErrorCode::truncated_data, "unexpected end of image data");
    auto view = bytes_.subspan(pos_, n);
    pos_ += n;
    return view;
  }

  // Reads up to (not including) '\n'. Returns false at end of stream.
  bool line(std::string& out) {
    if (done()) return false;
    out.clear();
    while (!done()) {
      char c = static_cast<char>(bytes_[pos_++]);
      if (c == '\n') return true;
      out.push_back(c);
    }
    return true;
  }

  // Whitespace-delimited token for netpbm-style headers.
  std::string token() {
    while (!done() && std::isspace(bytes_[pos_])) ++pos_;
    std::string out;
    while (!done() && !std::isspace(bytes_[pos_])) out.push_back(static_cast<char>(bytes_[pos_++]));
    if (out.empty()) fail(ErrorCode::malformed_header, "missing header field");
    return out;
  }

  void skip_one_whitespace() {
    if (done() || !std::isspace(byte_at(pos_)))
      fail(ErrorCode::malformed_header, "expected whitespace after header");
    ++pos_;
  }

 private:
  std::uint8_t byte_at(std::size_t i) const { return bytes_[i]; }

  ByteView bytes_;
  std::size_t pos_ = 0;
};

template <typename T>
T parse_number(const std::string& text, const char* what) {
  T value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size())
    fail(ErrorCode::malformed_header, std::string("cannot parse ") + what + " '" + text + "'");
  return value;
}

void append(Bytes& out, std::string_view text) { out.insert(out.end(), text.begin(), text.end()); }

// ---------------------------------------------------------------------------
// Radiance

void parse_resolution(const std::string& line, int& width, int& height) {
  char s1 = 0, a1 = 0, s2 = 0, a2 = 0;
  long n1 = 0, n2 = 0;
  char tail = 0;
  int matched = std::sscanf(line.c_str(), " %c%c %ld %c%c %ld %c", &s1, &a1, &n1, &s2, &a2, &n2, &tail);
  auto is_sign = [](char c) { return c == '+' || c == '-'; };
  auto is_axis = [](char c) { return c == 'X' || c == 'Y'; };
  if (matched != 6 || !is_sign(s1) || !is_sign(s2) || !is_axis(a1) || !is_axis(a2) || a1 == a2)
    fail(ErrorCode::malformed_header, "malformed Radiance resolution line '" + line + "'");
  if (!(s1 == '-' && a1 == 'Y' && s2 == '+' && a2 == 'X'))
    fail(ErrorCode::unsupported_orientation, "unsupported Radiance orientation '" + line + "'");
  if (n1 < 1 || n2 < 1 || n1 > (1 << 20) || n2 > (1 << 20))
    fail(ErrorCode::malformed_header, "Radiance image dimensions out of range");
  height = static_cast<int>(n1);
  width = static_cast<int>(n2);
}

// Flat pixels, possibly with old-style (1,1,1,n) repeat markers.
void read_flat_scanline(Reader& in, int width, std::uint8_t* line) {
  int x = 0;
  int shift = 0;
  while (x < width) {
    auto px = in.take(4);
    if (px[0] == 1 && px[1] == 1 && px[2] == 1) {
      if (x == 0) fail(ErrorCode::malformed_header, "repeat marker at scanline start");
      long count = static_cast<long>(px[3]) << shift;
      if (x + count > width) fail(ErrorCode::malformed_header, "run overflows scanline");
      for (long i = 0; i < count; ++i, ++x) std::memcpy(line + 4 * x, line + 4 * (x - 1), 4);
      shift += 8;
    } else {
      std::memcpy(line + 4 * x, px.data(), 4);
      ++x;
      shift = 0;
    }
  }
}

void read_rle_components(Reader& in, int width, std::uint8_t* line) {
  for (int c = 0; c < 4; ++c) {
    int x = 0;
    while (x < width) {
      int count = in.byte();
      if (count > 128) {
        count -= 128;
        if (x + count > width) fail(ErrorCode::malformed_header, "RLE run overflows scanline");
        std::uint8_t value = in.byte();
        for (int i = 0; i < count; ++i) line[4 * (x++) + c] = value;
      } else {
        if (count == 0 || x + count > width)
          fail(ErrorCode::malformed_header, "bad RLE literal count");
        for (int i = 0; i < count; ++i) line[4 * (x++) + c] = in.byte();
      }
    }
  }
}

void write_rle_channel(Bytes& out, const std::uint8_t* line, int width, int c) {
  auto at = [&](int x) { return line[4 * x + c]; };
  int x = 0;
  while (x < width) {
    // find next run of at least 4
    int run_start = x;
    int run_len = 0;
    while (run_start < width) {
      run_len = 1;
      while (run_start + run_len < width && run_len < 127 && at(run_start + run_len) == at(run_start)) ++run_len;
      if (run_len >= 4) break;
      run_start += run_len;
    }
    if (run_start >= width) run_len = 0;
    while (x < run_start) {
      int n = std::min(128, run_start - x);
      out.push_back(static_cast<std::uint8_t>(n));
      for (int i = 0; i < n; ++i) out.push_back(at(x + i));
      x += n;
    }
    if (run_len >= 4) {
      out.push_back(static_cast<std::uint8_t>(128 + run_len));
      out.push_back(at(run_start));
      x = run_start + run_len;
    }
  }
}

// ---------------------------------------------------------------------------
// PFM

float load_float(const std::uint8_t* p, bool little_endian) {
  std::uint32_t bits;
  std::memcpy(&bits, p, 4);
  if ((std::endian::native == std::endian::little) != little_endian) bits = __builtin_bswap32(bits);
  return std::bit_cast<float>(bits);
}

void store_float_le(Bytes& out, float v) {
  auto bits = std::bit_cast<std::uint32_t>(v);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
  std::uint8_t raw[4];
  std::memcpy(raw, &bits, 4);
  out.insert(out.end(), raw, raw + 4);
}

struct PfmHeader {
  bool color = true;
  int width = 0;
  int height = 0;
  float scale = 1.0f;
};

PfmHeader read_pfm_header(Reader& in) {
  PfmHeader h;
  std::string magic = in.token();
  if (magic == "PF") {
    h.color = true;
  } else if (magic == "Pf") {
    h.color = false;
  } else {
    fail(ErrorCode::malformed_header, "not a PFM stream (magic '" + magic + "')");
  }
  h.width = parse_number<int>(in.token(), "PFM width");
  h.height = parse_number<int>(in.token(), "PFM height");
  h.scale = parse_number<float>(in.token(), "PFM scale");
  in.skip_one_whitespace();
  if (h.width < 1 || h.height < 1) fail(ErrorCode::malformed_header, "PFM dimensions must be positive");
  if (h.scale == 0.0f || !std::isfinite(h.scale)) fail(ErrorCode::malformed_header, "PFM scale must be finite and nonzero");
  return h;
}

Eigen::ArrayXf read_pfm_payload(Reader& in, const PfmHeader& h) {
  const int channels = h.color ? 3 : 1;
  const bool little = h.scale < 0.0f;
  const float multiplier = std::fabs(h.scale);
  const std::size_t row_values = static_cast<std::size_t>(h.width) * channels;
  Eigen::ArrayXf data(static_cast<Eigen::Index>(row_values) * h.height);
  for (int row = 0; row < h.height; ++row) {
    auto raw = in.take(row_values * 4);
    // stored bottom-to-top
    const std::size_t dst = static_cast<std::size_t>(h.height - 1 - row) * row_values;
    for (std::size_t i = 0; i < row_values; ++i) {
      float v = load_float(raw.data() + 4 * i, little);
      if (std::isnan(v)) fail(ErrorCode::nan_payload, "PFM payload contains NaN");
      data[static_cast<Eigen::Index>(dst + i)] = v * multiplier;
    }
  }
  return data;
}

void write_pfm_payload(Bytes& out, const Eigen::ArrayXf& data, int width, int height, int channels) {
  const std::size_t row_values = static_cast<std::size_t>(width) * channels;
  for (int row = height - 1; row >= 0; --row) {
    const std::size_t src = static_cast<std::size_t>(row) * row_values;
    for (std::size_t i = 0; i < row_values; ++i) store_float_le(out, data[static_cast<Eigen::Index>(src + i)]);
  }
}

}  // namespace

std::array<std::uint8_t, 4> encode_rgbe(float r, float g, float b) {
  const double v = std::max({double{r}, double{g}, double{b}});
  if (!(v > 1e-38)) return {0, 0, 0, 0};
  int e = 0;
  std::frexp(v, &e);
  auto mantissas = [&](int exponent) {
    const double scale = std::ldexp(1.0, 8 - exponent);
    return std::array<double, 3>{std::round(r * scale), std::round(g * scale), std::round(b * scale)};
  };
  auto m = mantissas(e);
  if (std::max({m[0], m[1], m[2]}) > 255.0) m = mantissas(++e);
  if (e + 128 < 1) return {0, 0, 0, 0};
  if (e + 128 > 255) fail(ErrorCode::invalid_argument, "value too large for RGBE encoding");
  return {static_cast<std::uint8_t>(m[0]), static_cast<std::uint8_t>(m[1]), static_cast<std::uint8_t>(m[2]),
          static_cast<std::uint8_t>(e + 128)};
}

std::array<float, 3> decode_rgbe(std::array<std::uint8_t, 4> rgbe) {
  if (rgbe[3] == 0) return {0.0f, 0.0f, 0.0f};
  const double f = std::ldexp(1.0, int{rgbe[3]} - 136);
  return {static_cast<float>(rgbe[0] * f), static_cast<float>(rgbe[1] * f), static_cast<float>(rgbe[2] * f)};
}

HdrImage read_radiance(ByteView bytes) {
  Reader in(bytes);
  std::string line;
  if (!in.line(line) || !(line.starts_with("#?RADIANCE") || line.starts_with("#?RGBE")))
    fail(ErrorCode::malformed_header, "missing Radiance magic line");
  bool header_done = false;
  while (in.line(line)) {
    if (line.empty()) {
      header_done = true;
      break;
    }
    if (line.starts_with("FORMAT=")) {
      auto fmt = line.substr(7);
      while (!fmt.empty() && std::isspace(static_cast<unsigned char>(fmt.back()))) fmt.pop_back();
      if (fmt != "32-bit_rle_rgbe") fail(ErrorCode::unsupported_format, "unsupported Radiance FORMAT '" + fmt + "'");
    }
    // EXPOSURE=, GAMMA=, comments and other variables are ignored.
  }
  if (!header_done) fail(ErrorCode::malformed_header, "Radiance header is not terminated");
  if (!in.line(line)) fail(ErrorCode::malformed_header, "missing Radiance resolution line");
  int width = 0, height = 0;
  parse_resolution(line, width, height);

  HdrImage image(width, height);
  std::vector<std::uint8_t> scan(static_cast<std::size_t>(width) * 4);
  for (int y = 0; y < height; ++y) {
    bool rle = false;
    if (width >= kMinRleWidth && width <= kMaxRleWidth && in.remaining() >= 4) {
      auto p = bytes.subspan(in.position(), 4);
      if (p[0] == 2 && p[1] == 2 && (p[2] & 0x80) == 0) {
        if (((p[2] << 8) | p[3]) != width) fail(ErrorCode::malformed_header, "RLE scanline width mismatch");
        in.take(4);
        rle = true;
      }
    }
    try {
      if (rle)
        read_rle_components(in, width, scan.data());
      else
        read_flat_scanline(in, width, scan.data());
    } catch (const Error& e) {
      if (e.code() == ErrorCode::truncated_data)
        fail(ErrorCode::truncated_data, "truncated Radiance scanline " + std::to_string(y));
      throw;
    }
    for (int x = 0; x < width; ++x) {
      auto rgb = decode_rgbe({scan[4 * x], scan[4 * x + 1], scan[4 * x + 2], scan[4 * x + 3]});
      for (int c = 0; c < 3; ++c) image.at(x, y, c) = rgb[c];
    }
  }
  return image;
}

Bytes write_radiance(const HdrImage& image, bool run_length) {
  validate(image);
  Bytes out;
  append(out, "#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n");
  append(out, "-Y " + std::to_string(image.height) + " +X " + std::to_string(image.width) + "\n");
  const bool rle = run_length && image.width >= kMinRleWidth && image.width <= kMaxRleWidth;
  std::vector<std::uint8_t> scan(static_cast<std::size_t>(image.width) * 4);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      auto q = encode_rgbe(image.at(x, y, 0), image.at(x, y, 1), image.at(x, y, 2));
      std::copy(q.begin(), q.end(), scan.begin() + 4 * x);
    }
    if (rle) {
      out.push_back(2);
      out.push_back(2);
      out.push_back(static_cast<std::uint8_t>(image.width >> 8));
      out.push_back(static_cast<std::uint8_t>(image.width & 0xff));
      for (int c = 0; c < 4; ++c) write_rle_channel(out, scan.data(), image.width, c);
    } else {
      out.insert(out.end(), scan.begin(), scan.end());
    }
  }
  return out;
}

HdrImage read_pfm(ByteView bytes) {
  Reader in(bytes);
  PfmHeader h = read_pfm_header(in);
  if (!h.color) fail(ErrorCode::grayscale_pfm, "grayscale PFM (Pf) is not an RGB image");
  HdrImage image(h.width, h.height);
  image.data = read_pfm_payload(in, h);
  if (!image.data.isFinite().all() || (image.data < 0.0f).any())
    fail(ErrorCode::invalid_pixel, "PFM payload contains negative or infinite values");
  return image;
}

Bytes write_pfm(const HdrImage& image) {
  validate(image);
  Bytes out;
  append(out, "PF\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n-1.0\n");
  write_pfm_payload(out, image.data, image.width, image.height, 3);
  return out;
}

Bytes write_pfm_gray(const GrayMap& map) {
  validate_shape(map.width, map.height, map.data.size() * 3);
  Bytes out;
  append(out, "Pf\n" + std::to_string(map.width) + " " + std::to_string(map.height) + "\n-1.0\n");
  write_pfm_payload(out, map.data, map.width, map.height, 1);
  return out;
}

GrayMap read_pfm_gray(ByteView bytes) {
  Reader in(bytes);
  PfmHeader h = read_pfm_header(in);
  if (h.color) fail(ErrorCode::unsupported_format, "expected a grayscale PFM (Pf)");
  return {h.width, h.height, read_pfm_payload(in, h)};
}

std::uint8_t quantize_component(float value, double gamma) {
  double v = std::clamp(static_cast<double>(value), 0.0, 1.0);
  if (gamma != 1.0) v = std::pow(v, 1.0 / gamma);
  return static_cast<std::uint8_t>(std::round(255.0 * v));
}

Bytes write_ppm(const LdrImage& image, double gamma) {
  validate_shape(image.width, image.height, image.data.size());
  if (!(gamma > 0.0) || !std::isfinite(gamma)) fail(ErrorCode::invalid_argument, "gamma must be positive");
  Bytes out;
  append(out, "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n");
  out.reserve(out.size() + static_cast<std::size_t>(image.data.size()));
  for (Eigen::Index i = 0; i < image.data.size(); ++i) out.push_back(quantize_component(image.data[i], gamma));
  return out;
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) fail(ErrorCode::io_failure, "cannot open '" + path.string() + "' for reading");
  Bytes bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
  if (file.bad()) fail(ErrorCode::io_failure, "error reading '" + path.string() + "'");
  return bytes;
}

void write_file(const std::filesystem::path& path, ByteView bytes) {
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) fail(ErrorCode::io_failure, "cannot open '" + path.string() + "' for writing");
  file.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!file) fail(ErrorCode::io_failure, "error writing '" + path.string() + "'");
}

HdrImage read_hdr_file(const std::filesystem::path& path) {
  Bytes bytes = read_file(path);
  if (bytes.size() >= 2 && bytes[0] == '#' && bytes[1] == '?') return read_radiance(bytes);
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == 'F' || bytes[1] == 'f')) return read_pfm(bytes);
  fail(ErrorCode::unsupported_format, "'" + path.string() + "' is neither Radiance RGBE nor PFM");
}

}  // namespace fcmtm
