#pragma once

#include <array>
#include <span>

#include "fcmtm/image.hpp"

namespace fcmtm {

/// Source image rescaled so the mean over all RGB components is 0.5.
struct NormalizedHdr {
  HdrImage image;
  double median_intensity = 0.0;  ///< lower median over all RGB components
  double original_mean = 0.0;
};

/// Fitted constants of the median-driven mu selection curve.
struct AdaptiveMuParams {
  double lambda1 = 8.759;
  double gamma1 = 2.148;
  double lambda2 = 0.1494;
  double gamma2 = -2.067;
};

/// Exposure offsets in stops (log2 units).
struct ExposureStops {
  double low = 0.0;
  double mid = 0.0;
  double high = 0.0;
};

struct ExposureSet {
  ExposureStops stops;
  std::array<LdrImage, 3> images;  ///< low, mid, high
};

/// Luminance anchors for exposure selection.
inline constexpr double kBrightAnchor = 0.9;
inline constexpr double kDarkAnchor = 0.1;
inline constexpr double kBrightPercentile = 0.95;
inline constexpr double kDarkPercentile = 0.05;

NormalizedHdr normalize(const HdrImage& src);

/// lambda1 * median^gamma1 + lambda2 * median^gamma2.
double adaptive_mu(double median, const AdaptiveMuParams& params = {});

/// log(1 + mu v) / log(1 + mu), clamped to [0,1].
double mu_law(double value, double mu);
LdrImage mu_law(const NormalizedHdr& image, double mu);

/// Percentile-anchored stops: the 95th luminance percentile is mapped to 0.9
/// by the low exposure and the 5th to 0.1 by the high exposure, both halved.
/// An inverted pair collapses to its average.
ExposureStops select_exposures(const NormalizedHdr& image);

/// clip(2^stops * v) per component, no quantization.
LdrImage render_exposure(const NormalizedHdr& image, double stops);

ExposureSet make_exposure_set(const NormalizedHdr& image);

/// Element floor((n-1)/2) of the sorted sample.
double lower_median(std::span<const float> values);
/// Nearest-rank percentile of an already sorted sample, p in (0,1].
double nearest_rank(std::span<const float> sorted, double p);

}  // namespace fcmtm
