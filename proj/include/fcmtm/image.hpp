#pragma once

#include <Eigen/Core>

#include "fcmtm/error.hpp"

namespace fcmtm {

/// Interleaved RGB raster stored row-major, top row first. The tag keeps
/// scene-referred and display-referred images from being mixed up.
template <typename Tag>
struct RgbRaster {
  int width = 0;
  int height = 0;
  Eigen::ArrayXf data;

  RgbRaster() = default;
  RgbRaster(int w, int h) : width(w), height(h), data(Eigen::ArrayXf::Zero(Eigen::Index{3} * w * h)) {}

  Eigen::Index pixel_count() const { return Eigen::Index{width} * height; }

  float& at(int x, int y, int c) { return data[(Eigen::Index{y} * width + x) * 3 + c]; }
  float at(int x, int y, int c) const { return data[(Eigen::Index{y} * width + x) * 3 + c]; }

  bool operator==(const RgbRaster& other) const {
    return width == other.width && height == other.height &&
           (data.size() == other.data.size()) && (data == other.data).all();
  }
};

struct HdrTag;
struct LdrTag;

/// Linear scene-referred radiance, finite and non-negative.
using HdrImage = RgbRaster<HdrTag>;
/// Display-referred values in [0,1].
using LdrImage = RgbRaster<LdrTag>;

inline void validate_shape(int width, int height, Eigen::Index size) {
  if (width < 1 || height < 1)
    fail(ErrorCode::invalid_argument, "image dimensions must be at least 1x1");
  if (size != Eigen::Index{3} * width * height)
    fail(ErrorCode::shape_mismatch, "image data length does not match 3 x width x height");
}

inline void validate(const HdrImage& image) {
  validate_shape(image.width, image.height, image.data.size());
  if (!image.data.isFinite().all() || (image.data < 0.0f).any())
    fail(ErrorCode::invalid_pixel, "HDR image contains negative or non-finite values");
}

inline void validate(const LdrImage& image) {
  validate_shape(image.width, image.height, image.data.size());
  if (!image.data.isFinite().all() || (image.data < 0.0f).any() || (image.data > 1.0f).any())
    fail(ErrorCode::invalid_pixel, "LDR image values must lie in [0,1]");
}

}  // namespace fcmtm
