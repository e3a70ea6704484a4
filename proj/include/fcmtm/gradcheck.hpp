#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fcmtm/tensor.hpp"

namespace fcmtm {

struct GradcheckResult {
  std::string name;
  double max_rel_error = 0.0;
  double tolerance = 1e-3;
  Index probes = 0;
  Index skipped = 0;  ///< probes rejected because [x-h, x+h] crosses a kink
  bool passed() const { return probes > 0 && max_rel_error < tolerance; }
};

inline constexpr double kGradcheckStep = 1e-3;

/// Relative error between an analytic and a numeric derivative. The
/// denominator is floored at 1e-3 of the gradient's largest magnitude so that
/// entries that are zero up to truncation error do not dominate.
inline double relative_error(double analytic, double numeric, double scale) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-3 * scale, 1e-12});
  return std::abs(analytic - numeric) / denom;
}

/// Compares `analytic` (d f / d x) against central differences of `f` at the
/// listed coordinates of `x`. `x` is perturbed in place and restored.
template <typename F>
double max_gradient_error(F&& f, Tensor<double>& x, const Eigen::ArrayXd& analytic, std::span<const Index> coords,
                          double h = kGradcheckStep) {
  if (analytic.size() != x.size()) fail(ErrorCode::shape_mismatch, "gradcheck: analytic gradient size mismatch");
  const double scale = analytic.abs().maxCoeff();
  double worst = 0.0;
  for (Index i : coords) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = f(x);
    x[i] = saved - h;
    const double down = f(x);
    x[i] = saved;
    worst = std::max(worst, relative_error(analytic[i], (up - down) / (2.0 * h), scale));
  }
  return worst;
}

/// Value of a scalar functional together with the discrete pattern of its
/// piecewise pieces (ReLU masks, pooling winners, L1 signs). Two points with
/// equal patterns lie on the same smooth piece.
struct ProbeEval {
  double value = 0.0;
  std::vector<std::uint8_t> pattern;
};

struct GuardedError {
  double max_rel_error = 0.0;
  Index probes = 0;
  Index skipped = 0;
};

/// Like max_gradient_error, but walks `candidates` in order and rejects any
/// coordinate whose difference interval changes the pattern, until
/// `max_probes` coordinates have been compared.
template <typename F>
GuardedError guarded_gradient_error(F&& eval, Tensor<double>& x, const Eigen::ArrayXd& analytic,
                                    std::span<const Index> candidates, Index max_probes, double h = kGradcheckStep) {
  if (analytic.size() != x.size()) fail(ErrorCode::shape_mismatch, "gradcheck: analytic gradient size mismatch");
  const double scale = analytic.abs().maxCoeff();
  const std::vector<std::uint8_t> base = eval(x).pattern;
  GuardedError out;
  for (Index i : candidates) {
    if (out.probes >= max_probes) break;
    const double saved = x[i];
    x[i] = saved + h;
    const ProbeEval up = eval(x);
    x[i] = saved - h;
    const ProbeEval down = eval(x);
    x[i] = saved;
    if (up.pattern != base || down.pattern != base) {
      ++out.skipped;
      continue;
    }
    ++out.probes;
    out.max_rel_error = std::max(out.max_rel_error, relative_error(analytic[i], (up.value - down.value) / (2.0 * h), scale));
  }
  return out;
}

/// All coordinates when the tensor is small, otherwise a seeded sample.
inline std::vector<Index> probe_coordinates(Index size, Index max_probes, std::uint64_t seed) {
  std::vector<Index> coords(static_cast<std::size_t>(size));
  for (Index i = 0; i < size; ++i) coords[static_cast<std::size_t>(i)] = i;
  if (size <= max_probes) return coords;
  std::mt19937_64 rng(seed);
  std::shuffle(coords.begin(), coords.end(), rng);
  coords.resize(static_cast<std::size_t>(max_probes));
  std::sort(coords.begin(), coords.end());
  return coords;
}

}  // namespace fcmtm
