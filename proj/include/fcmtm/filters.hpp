#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "fcmtm/tensor.hpp"

namespace fcmtm {

/// Normalized 1-D Gaussian taps exp(-k^2 / (2 sigma^2)), k in [-size/2, size/2].
inline std::vector<double> gaussian_kernel(int size, double sigma) {
  if (size < 3 || size % 2 == 0) fail(ErrorCode::invalid_argument, "gaussian kernel size must be odd and >= 3");
  if (!(sigma > 0.0)) fail(ErrorCode::invalid_argument, "gaussian sigma must be positive");
  const int r = size / 2;
  std::vector<double> taps(static_cast<std::size_t>(size));
  double sum = 0.0;
  for (int k = -r; k <= r; ++k) sum += taps[static_cast<std::size_t>(k + r)] = std::exp(-(k * k) / (2.0 * sigma * sigma));
  for (double& t : taps) t /= sum;
  return taps;
}

namespace detail {

using PlaneXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Separable correlation of one plane with symmetric taps, zero padding.
inline PlaneXd filter_plane(const PlaneXd& src, std::span<const double> taps) {
  const Index H = src.rows(), W = src.cols();
  const Index r = static_cast<Index>(taps.size()) / 2;
  PlaneXd tmp = PlaneXd::Zero(H, W);
  for (Index y = 0; y < H; ++y)
    for (Index x = 0; x < W; ++x) {
      double acc = 0.0;
      const Index lo = std::max<Index>(-r, -x), hi = std::min<Index>(r, W - 1 - x);
      for (Index k = lo; k <= hi; ++k) acc += taps[static_cast<std::size_t>(k + r)] * src(y, x + k);
      tmp(y, x) = acc;
    }
  PlaneXd out = PlaneXd::Zero(H, W);
  for (Index y = 0; y < H; ++y) {
    const Index lo = std::max<Index>(-r, -y), hi = std::min<Index>(r, H - 1 - y);
    for (Index k = lo; k <= hi; ++k) out.row(y) += taps[static_cast<std::size_t>(k + r)] * tmp.row(y + k);
  }
  return out;
}

template <typename Scalar>
PlaneXd plane_as_double(const Tensor<Scalar>& t, Index c) {
  return t.plane(c).template cast<double>();
}

}  // namespace detail

/// Per-channel separable Gaussian blur with zero padding. The kernel is
/// symmetric, so the same call is its own adjoint.
template <typename Scalar>
Tensor<Scalar> gaussian_filter(const Tensor<Scalar>& input, int size, double sigma) {
  require_rank3(input, "gaussian_filter");
  const auto taps = gaussian_kernel(size, sigma);
  Tensor<Scalar> out = Tensor<Scalar>::zeros_like(input);
#pragma omp parallel for schedule(static)
  for (Index c = 0; c < input.channels(); ++c)
    out.plane(c) = detail::filter_plane(detail::plane_as_double(input, c), taps).template cast<Scalar>();
  return out;
}

template <typename Scalar>
Tensor<Scalar> gaussian_filter_backward(const Tensor<Scalar>& upstream, int size, double sigma) {
  return gaussian_filter(upstream, size, sigma);
}

/// Sliding-window sum over a patch x patch neighborhood, zero padded.
template <typename Scalar>
Tensor<Scalar> box_sum(const Tensor<Scalar>& input, int patch) {
  require_rank3(input, "box_sum");
  if (patch < 1 || patch % 2 == 0) fail(ErrorCode::invalid_argument, "box patch size must be odd");
  const std::vector<double> ones(static_cast<std::size_t>(patch), 1.0);
  Tensor<Scalar> out = Tensor<Scalar>::zeros_like(input);
#pragma omp parallel for schedule(static)
  for (Index c = 0; c < input.channels(); ++c)
    out.plane(c) = detail::filter_plane(detail::plane_as_double(input, c), ones).template cast<Scalar>();
  return out;
}

/// Local statistics over a patch x patch window. Padding zeros count as
/// samples, so the divisor is always patch^2; the variance is the population
/// variance.
template <typename Scalar>
struct BoxStats {
  Tensor<Scalar> mean;
  Tensor<Scalar> std;
};

namespace detail {
// Variances below this fraction of the second moment are rounding residue.
inline constexpr double kFlatVarianceRatio = 1e-10;
}

template <typename Scalar>
BoxStats<Scalar> box_stats(const Tensor<Scalar>& input, int patch) {
  require_rank3(input, "box_stats");
  if (patch < 3 || patch % 2 == 0) fail(ErrorCode::invalid_argument, "box patch size must be odd and >= 3");
  const std::vector<double> ones(static_cast<std::size_t>(patch), 1.0);
  const double inv_n = 1.0 / (double(patch) * patch);
  BoxStats<Scalar> stats{Tensor<Scalar>::zeros_like(input), Tensor<Scalar>::zeros_like(input)};
#pragma omp parallel for schedule(static)
  for (Index c = 0; c < input.channels(); ++c) {
    const detail::PlaneXd x = detail::plane_as_double(input, c);
    const detail::PlaneXd mean = detail::filter_plane(x, ones) * inv_n;
    const detail::PlaneXd m2 = detail::filter_plane(x.array().square().matrix(), ones) * inv_n;
    detail::PlaneXd var = (m2.array() - mean.array().square()).matrix();
    var = (var.array() <= detail::kFlatVarianceRatio * m2.array()).select(0.0, var);
    stats.mean.plane(c) = mean.template cast<Scalar>();
    stats.std.plane(c) = var.array().sqrt().matrix().template cast<Scalar>();
  }
  return stats;
}

/// Gradient of box_stats. Where the window is flat the standard deviation is
/// not differentiable and contributes nothing.
template <typename Scalar>
Tensor<Scalar> box_stats_backward(const Tensor<Scalar>& input, const BoxStats<Scalar>& stats,
                                  const Tensor<Scalar>& grad_mean, const Tensor<Scalar>& grad_std, int patch) {
  require_same_shape(input, grad_mean, "box_stats_backward");
  require_same_shape(input, grad_std, "box_stats_backward");
  const std::vector<double> ones(static_cast<std::size_t>(patch), 1.0);
  const double inv_n = 1.0 / (double(patch) * patch);
  Tensor<Scalar> grad = Tensor<Scalar>::zeros_like(input);
#pragma omp parallel for schedule(static)
  for (Index c = 0; c < input.channels(); ++c) {
    const detail::PlaneXd x = detail::plane_as_double(input, c);
    const detail::PlaneXd mu = detail::plane_as_double(stats.mean, c);
    const detail::PlaneXd sd = detail::plane_as_double(stats.std, c);
    const detail::PlaneXd gs = detail::plane_as_double(grad_std, c);
    const detail::PlaneXd ratio = (sd.array() > 0.0).select(gs.array() / sd.array(), 0.0).matrix();
    const detail::PlaneXd from_mean = detail::filter_plane(detail::plane_as_double(grad_mean, c), ones);
    const detail::PlaneXd from_ratio = detail::filter_plane(ratio, ones);
    const detail::PlaneXd from_ratio_mu = detail::filter_plane((ratio.array() * mu.array()).matrix(), ones);
    grad.plane(c) =
        ((from_mean.array() + x.array() * from_ratio.array() - from_ratio_mu.array()) * inv_n).matrix().template cast<Scalar>();
  }
  return grad;
}

}  // namespace fcmtm
