#include "fcmtm/trainer.hpp"

#include <chrono>
#include <cmath>

#include "fcmtm/adam.hpp"
#include "fcmtm/image_tensor.hpp"

namespace fcmtm {

void TrainConfig::validate() const {
  if (epochs < 1) fail(ErrorCode::invalid_argument, "epochs must be at least 1");
  if (!(lr0 > 0.0) || !std::isfinite(lr0)) fail(ErrorCode::invalid_argument, "learning rate must be positive");
  if (!(decay > 0.0 && decay <= 1.0)) fail(ErrorCode::invalid_argument, "decay must lie in (0,1]");
  if (decay_every < 1) fail(ErrorCode::invalid_argument, "decay interval must be at least 1");
  if (early_stop_patience < 0) fail(ErrorCode::invalid_argument, "early-stop patience must be >= 0");
  fcm.validate();
}

double learning_rate(const TrainConfig& cfg, int epoch) {
  return cfg.lr0 * std::pow(cfg.decay, static_cast<double>(epoch / cfg.decay_every));
}

std::array<LdrImage, 3> ablation_inputs(const NormalizedHdr& image, InputMode mode) {
  switch (mode) {
    case InputMode::mef:
      return make_exposure_set(image).images;
    case InputMode::single_linear: {
      const LdrImage clipped = render_exposure(image, 0.0);
      return {clipped, clipped, clipped};
    }
    case InputMode::single_log: {
      const double peak = image.image.data.cast<double>().maxCoeff();
      const double denom = std::log1p(peak);
      LdrImage out(image.image.width, image.image.height);
      out.data = image.image.data.cast<double>().unaryExpr([&](double v) { return std::log1p(v) / denom; }).cast<float>();
      return {out, out, out};
    }
  }
  fail(ErrorCode::invalid_argument, "unknown input mode");
}

Exposures<float> network_inputs(const NormalizedHdr& image, InputMode mode, ExposureStops* stops) {
  if (stops) *stops = mode == InputMode::mef ? select_exposures(image) : ExposureStops{};
  const auto images = ablation_inputs(image, mode);
  return {to_tensor<float>(images[0]), to_tensor<float>(images[1]), to_tensor<float>(images[2])};
}

LdrImage guidance_image(const NormalizedHdr& image, double* mu) {
  const double m = adaptive_mu(image.median_intensity);
  if (mu) *mu = m;
  return mu_law(image, m);
}

TrainResult train(const HdrImage& src, const TrainConfig& cfg, const VggWeights<float>& weights,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  if (weights.layer_count() < cfg.fcm.n_layers)
    fail(ErrorCode::invalid_argument, "weight file holds fewer layers than the loss uses");
  const auto start = std::chrono::steady_clock::now();

  TrainResult result;
  TrainReport& report = result.report;
  const NormalizedHdr normalized = normalize(src);
  report.median = normalized.median_intensity;
  const Tensorf guidance = to_tensor<float>(guidance_image(normalized, &report.mu));
  const Exposures<float> inputs = network_inputs(normalized, cfg.input_mode, &report.stops);
  const int layers = cfg.fcm.n_layers;

  auto make_targets = [&](LossMode mode) {
    return loss_targets(mode, vgg_forward(guidance, weights, layers).features, cfg.fcm);
  };
  std::vector<Tensorf> targets = make_targets(cfg.loss_mode);

  TmParams<float> params = init_params<float>(cfg.seed);
  const auto tensors = params.tensors();
  Adam<float> adam;
  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (!cfg.cache_guidance) targets = make_targets(cfg.loss_mode);
    const TmCache<float> cache = tm_forward(inputs, params);
    const auto acts = vgg_forward(cache.output, weights, layers);
    const auto loss = feature_loss(cfg.loss_mode, targets, acts.features, cfg.fcm);
    if (!std::isfinite(loss.value)) {
      report.diverged = true;
      report.divergence_message = "divergence: non-finite loss at epoch " + std::to_string(epoch + 1);
      break;
    }
    report.loss_trace.push_back(loss.value);
    if (on_epoch) on_epoch(epoch, loss.value);

    params.zero_grad();
    tm_backward(vgg_backward(loss.grads, acts, weights), cache, params);
    try {
      adam.step(tensors, learning_rate(cfg, epoch));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::divergence) throw;
      report.diverged = true;
      report.divergence_message = e.what();
      break;
    }

    if (cfg.early_stop_patience > 0) {
      if (loss.value < best) {
        best = loss.value;
        since_best = 0;
      } else if (++since_best >= cfg.early_stop_patience) {
        break;
      }
    }
  }

  if (!report.diverged) {
    const TmCache<float> cache = tm_forward(inputs, params);
    if (!cache.output.all_finite()) {
      report.diverged = true;
      report.divergence_message = "divergence: non-finite network output";
    } else {
      const auto acts = vgg_forward(cache.output, weights, layers);
      report.final_loss = feature_loss(cfg.loss_mode, targets, acts.features, cfg.fcm, false).value;
      report.final_fcm_loss =
          cfg.loss_mode == LossMode::fcm
              ? report.final_loss
              : feature_loss(LossMode::fcm, make_targets(LossMode::fcm), acts.features, cfg.fcm, false).value;
      result.image = to_raster<LdrTag>(cache.output);
    }
  }
  result.params = std::move(params);
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

std::string to_string(LossMode mode) { return mode == LossMode::fcm ? "fcm" : "plain-vgg"; }

std::string to_string(InputMode mode) {
  switch (mode) {
    case InputMode::mef: return "mef";
    case InputMode::single_linear: return "linear";
    case InputMode::single_log: return "log";
  }
  return "unknown";
}

}  // namespace fcmtm
