#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fcmtm/image.hpp"

namespace fcmtm {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

// Radiance RGBE (.hdr). Only the standard "-Y H +X W" orientation is accepted.
// EXPOSURE and GAMMA header variables are parsed and ignored.
HdrImage read_radiance(ByteView bytes);
/// Writes new-style RLE scanlines where the width allows it, flat otherwise.
Bytes write_radiance(const HdrImage& image, bool run_length = true);

/// Shared-exponent encode with round-to-nearest mantissas.
std::array<std::uint8_t, 4> encode_rgbe(float r, float g, float b);
/// m * 2^(e - 136) per channel; zero exponent decodes to black.
std::array<float, 3> decode_rgbe(std::array<std::uint8_t, 4> rgbe);

// Portable float map. Color ("PF") only; data is stored bottom row first.
HdrImage read_pfm(ByteView bytes);
/// Little-endian, scale -1.
Bytes write_pfm(const HdrImage& image);

/// Single-channel float raster, used for diagnostic dumps.
struct GrayMap {
  int width = 0;
  int height = 0;
  Eigen::ArrayXf data;  // row-major, top row first
};
Bytes write_pfm_gray(const GrayMap& map);
GrayMap read_pfm_gray(ByteView bytes);

/// Binary PPM (P6, maxval 255).
Bytes write_ppm(const LdrImage& image, double gamma = 1.0);
/// round(255 * clamp(v,0,1)^(1/gamma)), half away from zero.
std::uint8_t quantize_component(float value, double gamma);

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, ByteView bytes);

/// Dispatches on the file's magic bytes (Radiance or PFM).
HdrImage read_hdr_file(const std::filesystem::path& path);

}  // namespace fcmtm
