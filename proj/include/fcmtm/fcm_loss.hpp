#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "fcmtm/filters.hpp"
#include "fcmtm/vgg.hpp"

namespace fcmtm {

/// Hyperparameters of the feature contrast masking loss.
struct FcmConfig {
  double alpha_hdr = 0.5;  ///< self-masking exponent for the guidance branch
  double alpha_tm = 1.0;   ///< self-masking exponent for the tone mapped branch
  double epsilon = 1e-6;
  int gaussian_size = 13;  ///< window of the local mean in the contrast
  double gaussian_sigma = 2.0;
  int box_size = 13;  ///< window of the neighborhood statistics
  int n_layers = 3;
  bool neighborhood_masking = true;

  void validate() const {
    auto alpha_ok = [](double a) { return a > 0.0 && a <= 1.0; };
    if (!alpha_ok(alpha_hdr) || !alpha_ok(alpha_tm)) fail(ErrorCode::invalid_argument, "alpha must lie in (0,1]");
    if (!(epsilon > 0.0)) fail(ErrorCode::invalid_argument, "epsilon must be positive");
    if (gaussian_size < 3 || gaussian_size % 2 == 0 || box_size < 3 || box_size % 2 == 0)
      fail(ErrorCode::invalid_argument, "patch sizes must be odd and >= 3");
    if (!(gaussian_sigma > 0.0)) fail(ErrorCode::invalid_argument, "gaussian sigma must be positive");
    if (n_layers < 1 || n_layers > kVggMaxLayers) fail(ErrorCode::invalid_argument, "layer count must be 1..3");
  }
};

enum class LossMode { fcm, plain_vgg };

/// Every intermediate of the masking transform for one feature map.
template <typename Scalar>
struct ContrastMaps {
  Tensor<Scalar> blurred;            ///< Gaussian local mean
  Tensor<Scalar> contrast;           ///< C
  BoxStats<Scalar> box;              ///< neighborhood mean / std (empty when disabled)
  Tensor<Scalar> self_mask;          ///< M_s
  Tensor<Scalar> neighborhood_mask;  ///< M_n
  Tensor<Scalar> masked;             ///< f = M_s / (1 + M_n)
};

/// (F - G*F) / (|G*F| + eps), per channel.
template <typename Scalar>
Tensor<Scalar> feature_contrast(const Tensor<Scalar>& features, const FcmConfig& cfg) {
  const Tensor<Scalar> blurred = gaussian_filter(features, cfg.gaussian_size, cfg.gaussian_sigma);
  const Scalar eps = Scalar(cfg.epsilon);
  return {features.shape(), (features.values() - blurred.values()) / (blurred.values().abs() + eps)};
}

/// sign(C) |C|^alpha with the smooth sign x / (|x| + eps).
template <typename Scalar>
Tensor<Scalar> self_masking(const Tensor<Scalar>& contrast, double alpha, double epsilon) {
  const auto& c = contrast.values();
  const Scalar eps = Scalar(epsilon);
  return {contrast.shape(), c * c.abs().pow(Scalar(alpha)) / (c.abs() + eps)};
}

template <typename Scalar>
Tensor<Scalar> self_masking_backward(const Tensor<Scalar>& contrast, double alpha, double epsilon,
                                     const Tensor<Scalar>& upstream) {
  const auto a = contrast.values().abs();
  const Scalar eps = Scalar(epsilon), al = Scalar(alpha);
  return {contrast.shape(),
          upstream.values() * a.pow(al) * (al * a + (Scalar(1) + al) * eps) / (a + eps).square()};
}

/// sigma_b / (|mu_b| + eps) over the box window.
template <typename Scalar>
Tensor<Scalar> neighborhood_masking(const Tensor<Scalar>& features, const FcmConfig& cfg) {
  const auto stats = box_stats(features, cfg.box_size);
  return {features.shape(), stats.std.values() / (stats.mean.values().abs() + Scalar(cfg.epsilon))};
}

template <typename Scalar>
ContrastMaps<Scalar> contrast_maps(const Tensor<Scalar>& features, double alpha, const FcmConfig& cfg) {
  require_rank3(features, "contrast_maps");
  const Scalar eps = Scalar(cfg.epsilon);
  ContrastMaps<Scalar> m;
  m.blurred = gaussian_filter(features, cfg.gaussian_size, cfg.gaussian_sigma);
  m.contrast = {features.shape(), (features.values() - m.blurred.values()) / (m.blurred.values().abs() + eps)};
  m.self_mask = self_masking(m.contrast, alpha, cfg.epsilon);
  if (cfg.neighborhood_masking) {
    m.box = box_stats(features, cfg.box_size);
    m.neighborhood_mask = {features.shape(), m.box.std.values() / (m.box.mean.values().abs() + eps)};
  } else {
    m.neighborhood_mask = Tensor<Scalar>::zeros_like(features);
  }
  m.masked = {features.shape(), m.self_mask.values() / (Scalar(1) + m.neighborhood_mask.values())};
  return m;
}

template <typename Scalar>
Tensor<Scalar> masked_features(const Tensor<Scalar>& features, double alpha, const FcmConfig& cfg) {
  return contrast_maps(features, alpha, cfg).masked;
}

/// Gradient of f with respect to the feature map.
template <typename Scalar>
Tensor<Scalar> masked_features_backward(const Tensor<Scalar>& features, const ContrastMaps<Scalar>& m, double alpha,
                                        const FcmConfig& cfg, const Tensor<Scalar>& grad_masked) {
  require_same_shape(features, grad_masked, "masked_features_backward");
  const Scalar eps = Scalar(cfg.epsilon);
  const auto& mn = m.neighborhood_mask.values();
  const auto denom = (Scalar(1) + mn).eval();

  const Tensor<Scalar> grad_self{features.shape(), grad_masked.values() / denom};
  const Tensor<Scalar> grad_c = self_masking_backward(m.contrast, alpha, cfg.epsilon, grad_self);

  const auto local = (m.blurred.values().abs() + eps).eval();
  Tensor<Scalar> grad{features.shape(), grad_c.values() / local};
  const Tensor<Scalar> grad_blur{
      features.shape(),
      -grad_c.values() / local * (Scalar(1) + m.contrast.values() * m.blurred.values().sign())};
  grad.values() += gaussian_filter_backward(grad_blur, cfg.gaussian_size, cfg.gaussian_sigma).values();

  if (cfg.neighborhood_masking) {
    const auto grad_mn = (-grad_masked.values() * m.self_mask.values() / denom.square()).eval();
    const auto box_denom = (m.box.mean.values().abs() + eps).eval();
    const Tensor<Scalar> grad_std{features.shape(), grad_mn / box_denom};
    const Tensor<Scalar> grad_mean{features.shape(),
                                   -grad_mn * mn * m.box.mean.values().sign() / box_denom};
    grad.values() += box_stats_backward(features, m.box, grad_mean, grad_std, cfg.box_size).values();
  }
  return grad;
}

/// Fixed per-layer targets derived from the guidance image's activations:
/// masked maps with alpha_hdr for the FCM loss, raw features for plain VGG.
template <typename Scalar>
std::vector<Tensor<Scalar>> loss_targets(LossMode mode, const std::vector<Tensor<Scalar>>& guidance_features,
                                         const FcmConfig& cfg) {
  std::vector<Tensor<Scalar>> targets;
  for (const auto& f : guidance_features)
    targets.push_back(mode == LossMode::fcm ? masked_features(f, cfg.alpha_hdr, cfg) : f);
  return targets;
}

template <typename Scalar>
struct LossValue {
  double value = 0.0;
  std::vector<double> per_layer;
  std::vector<Tensor<Scalar>> grads;  ///< d loss / d features, per layer (empty if not requested)
};

/// Mean over layers of the per-layer mean absolute difference between the
/// targets and the transformed output features. Gradients flow only into
/// `features`; the targets are constants.
template <typename Scalar>
LossValue<Scalar> feature_loss(LossMode mode, const std::vector<Tensor<Scalar>>& targets,
                               const std::vector<Tensor<Scalar>>& features, const FcmConfig& cfg,
                               bool with_gradient = true) {
  if (targets.size() != features.size() || targets.empty())
    fail(ErrorCode::shape_mismatch, "feature_loss: layer counts differ");
  LossValue<Scalar> out;
  const double layers = static_cast<double>(features.size());
  for (std::size_t l = 0; l < features.size(); ++l) {
    require_same_shape(targets[l], features[l], "feature_loss");
    ContrastMaps<Scalar> maps;
    if (mode == LossMode::fcm) maps = contrast_maps(features[l], cfg.alpha_tm, cfg);
    const Tensor<Scalar>& mapped = mode == LossMode::fcm ? maps.masked : features[l];
    const Eigen::ArrayXd diff = (mapped.values() - targets[l].values()).template cast<double>();
    const double n = static_cast<double>(diff.size());
    const double layer_loss = diff.abs().sum() / n;
    out.per_layer.push_back(layer_loss);
    out.value += layer_loss / layers;
    if (!with_gradient) continue;
    Tensor<Scalar> grad{mapped.shape(), (diff.sign() / (n * layers)).template cast<Scalar>()};
    if (mode == LossMode::fcm) grad = masked_features_backward(features[l], maps, cfg.alpha_tm, cfg, grad);
    out.grads.push_back(std::move(grad));
  }
  return out;
}

/// FCM loss between guidance activations (alpha_hdr) and output activations (alpha_tm).
template <typename Scalar>
LossValue<Scalar> fcm_loss(const std::vector<Tensor<Scalar>>& guidance_features,
                           const std::vector<Tensor<Scalar>>& output_features, const FcmConfig& cfg,
                           bool with_gradient = true) {
  return feature_loss(LossMode::fcm, loss_targets(LossMode::fcm, guidance_features, cfg), output_features, cfg,
                      with_gradient);
}

// ---------------------------------------------------------------------------
// Sinusoid penalty probe

/// Gray horizontal grating 0.5 + amplitude * sin(2 pi x / period), (3, size, size).
template <typename Scalar>
Tensor<Scalar> sinusoid_card(int size, double amplitude, double period) {
  Tensor<Scalar> card({3, size, size});
  const double two_pi = 2.0 * 3.14159265358979323846;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const auto v = static_cast<Scalar>(0.5 + amplitude * std::sin(two_pi * x / period));
      for (int c = 0; c < 3; ++c) card(c, y, x) = v;
    }
  return card;
}

struct SinusoidProbe {
  std::vector<double> contrasts;
  std::vector<double> fcm_deltas;  ///< FCM loss between each grating and its amplified copy
  std::vector<double> vgg_deltas;  ///< plain feature L1 for the same pairs
};

/// For each contrast c, compares a grating of amplitude c with one of
/// amplitude c + delta. Both branches use alpha = 0.5.
template <typename Scalar>
SinusoidProbe sinusoid_penalty_probe(std::span<const double> contrasts, double delta, FcmConfig cfg,
                                     const VggWeights<Scalar>& weights, int size = 128, double period = 16.0) {
  for (std::size_t i = 0; i < contrasts.size(); ++i) {
    if (!(contrasts[i] > 0.0) || (i > 0 && !(contrasts[i] > contrasts[i - 1])))
      fail(ErrorCode::invalid_argument, "probe contrasts must be positive and strictly increasing");
    if (delta < 0.0 || contrasts[i] + delta > 0.5)
      fail(ErrorCode::invalid_argument, "probe pattern leaves the [0,1] range");
  }
  cfg.alpha_hdr = cfg.alpha_tm = 0.5;
  cfg.validate();
  SinusoidProbe probe;
  for (double c : contrasts) {
    const auto base = vgg_forward(sinusoid_card<Scalar>(size, c, period), weights, cfg.n_layers);
    const auto distorted = vgg_forward(sinusoid_card<Scalar>(size, c + delta, period), weights, cfg.n_layers);
    probe.contrasts.push_back(c);
    probe.fcm_deltas.push_back(fcm_loss(base.features, distorted.features, cfg, false).value);
    probe.vgg_deltas.push_back(
        feature_loss(LossMode::plain_vgg, base.features, distorted.features, cfg, false).value);
  }
  return probe;
}

}  // namespace fcmtm
