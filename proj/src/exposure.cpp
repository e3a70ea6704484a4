#include "fcmtm/exposure.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace fcmtm {

double lower_median(std::span<const float> values) {
  if (values.empty()) fail(ErrorCode::invalid_argument, "median of an empty sample");
  std::vector<float> copy(values.begin(), values.end());
  auto mid = copy.begin() + static_cast<std::ptrdiff_t>((copy.size() - 1) / 2);
  std::nth_element(copy.begin(), mid, copy.end());
  return *mid;
}

double nearest_rank(std::span<const float> sorted, double p) {
  if (sorted.empty()) fail(ErrorCode::invalid_argument, "percentile of an empty sample");
  if (!(p > 0.0 && p <= 1.0)) fail(ErrorCode::invalid_argument, "percentile must lie in (0,1]");
  auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(sorted.size())));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

NormalizedHdr normalize(const HdrImage& src) {
  validate(src);
  const double mean = src.data.cast<double>().mean();
  if (!(mean > 0.0)) fail(ErrorCode::degenerate_input, "degenerate HDR input: no positive component");
  NormalizedHdr out;
  out.original_mean = mean;
  out.image = src;
  out.image.data = (src.data.cast<double>() * (0.5 / mean)).cast<float>();
  out.median_intensity = lower_median({out.image.data.data(), static_cast<std::size_t>(out.image.data.size())});
  return out;
}

double adaptive_mu(double median, const AdaptiveMuParams& params) {
  if (!(median > 0.0) || !std::isfinite(median))
    fail(ErrorCode::invalid_argument, "adaptive mu requires a positive median");
  return params.lambda1 * std::pow(median, params.gamma1) + params.lambda2 * std::pow(median, params.gamma2);
}

double mu_law(double value, double mu) {
  if (!(mu > 0.0)) fail(ErrorCode::invalid_argument, "mu must be positive");
  const double v = std::max(value, 0.0);
  return std::clamp(std::log1p(mu * v) / std::log1p(mu), 0.0, 1.0);
}

LdrImage mu_law(const NormalizedHdr& image, double mu) {
  if (!(mu > 0.0)) fail(ErrorCode::invalid_argument, "mu must be positive");
  const double denom = std::log1p(mu);
  LdrImage out(image.image.width, image.image.height);
  out.data = image.image.data.cast<double>()
                 .unaryExpr([&](double v) { return std::clamp(std::log1p(mu * v) / denom, 0.0, 1.0); })
                 .cast<float>();
  return out;
}

ExposureStops select_exposures(const NormalizedHdr& image) {
  const HdrImage& hdr = image.image;
  std::vector<float> luminance;
  luminance.reserve(static_cast<std::size_t>(hdr.pixel_count()));
  for (Eigen::Index i = 0; i < hdr.pixel_count(); ++i) {
    const float y = (hdr.data[3 * i] + hdr.data[3 * i + 1] + hdr.data[3 * i + 2]) / 3.0f;
    if (y > 0.0f) luminance.push_back(y);
  }
  if (luminance.empty()) fail(ErrorCode::degenerate_input, "degenerate HDR input: no positive pixel");
  std::sort(luminance.begin(), luminance.end());

  ExposureStops stops;
  stops.low = 0.5 * std::log2(kBrightAnchor / nearest_rank(luminance, kBrightPercentile));
  stops.high = 0.5 * std::log2(kDarkAnchor / nearest_rank(luminance, kDarkPercentile));
  if (stops.low > stops.high) stops.low = stops.high = 0.5 * (stops.low + stops.high);
  stops.mid = 0.5 * (stops.low + stops.high);
  return stops;
}

LdrImage render_exposure(const NormalizedHdr& image, double stops) {
  const double gain = std::exp2(stops);
  LdrImage out(image.image.width, image.image.height);
  out.data = (image.image.data.cast<double>() * gain).min(1.0).max(0.0).cast<float>();
  return out;
}

ExposureSet make_exposure_set(const NormalizedHdr& image) {
  ExposureSet set;
  set.stops = select_exposures(image);
  set.images = {render_exposure(image, set.stops.low), render_exposure(image, set.stops.mid),
                render_exposure(image, set.stops.high)};
  return set;
}

}  // namespace fcmtm
