#pragma once

#include "fcmtm/image.hpp"
#include "fcmtm/tensor.hpp"

namespace fcmtm {

/// Interleaved RGB raster to a (3, H, W) tensor.
template <typename Scalar, typename Tag>
Tensor<Scalar> to_tensor(const RgbRaster<Tag>& image) {
  Tensor<Scalar> t({3, image.height, image.width});
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < 3; ++c) t(c, y, x) = static_cast<Scalar>(image.at(x, y, c));
  return t;
}

template <typename Tag, typename Scalar>
RgbRaster<Tag> to_raster(const Tensor<Scalar>& t) {
  if (t.rank() != 3 || t.channels() != 3) fail(ErrorCode::shape_mismatch, "expected a (3,H,W) tensor");
  RgbRaster<Tag> image(static_cast<int>(t.width()), static_cast<int>(t.height()));
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < 3; ++c) image.at(x, y, c) = static_cast<float>(t(c, y, x));
  return image;
}

}  // namespace fcmtm
