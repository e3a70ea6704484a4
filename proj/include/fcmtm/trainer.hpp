#pragma once

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "fcmtm/exposure.hpp"
#include "fcmtm/fcm_loss.hpp"
#include "fcmtm/tm_network.hpp"

namespace fcmtm {

/// How the three network inputs are derived from the normalized image.
enum class InputMode { mef, single_linear, single_log };

struct TrainConfig {
  int epochs = 400;
  double lr0 = 2e-4;
  double decay = 0.9;
  int decay_every = 10;
  std::uint64_t seed = 0;
  LossMode loss_mode = LossMode::fcm;
  InputMode input_mode = InputMode::mef;
  FcmConfig fcm;
  /// Reuse the guidance targets across epochs. They do not depend on the
  /// network, so switching this off only costs time.
  bool cache_guidance = true;
  /// Stop after this many epochs without a new best loss; 0 disables.
  int early_stop_patience = 0;

  void validate() const;
};

/// lr0 * decay^floor(epoch / decay_every), epochs counted from 0.
double learning_rate(const TrainConfig& cfg, int epoch);

struct TrainReport {
  std::vector<double> loss_trace;  ///< loss before each completed update
  double seconds = 0.0;
  double final_loss = std::numeric_limits<double>::quiet_NaN();      ///< training loss of the returned image
  double final_fcm_loss = std::numeric_limits<double>::quiet_NaN();  ///< FCM loss of the returned image
  bool diverged = false;
  std::string divergence_message;
  ExposureStops stops;
  double median = 0.0;
  double mu = 0.0;

  int completed_epochs() const { return static_cast<int>(loss_trace.size()); }
};

struct TrainResult {
  LdrImage image;  ///< empty when training diverged
  TrainReport report;
  TmParams<float> params;
};

/// Network inputs for each mode. `mef` renders the selected exposures;
/// the single-image modes triplicate clip(I) or log(1+I)/log(1+max I).
Exposures<float> network_inputs(const NormalizedHdr& image, InputMode mode, ExposureStops* stops = nullptr);
std::array<LdrImage, 3> ablation_inputs(const NormalizedHdr& image, InputMode mode);

/// The mu-law compressed image that guides the loss.
LdrImage guidance_image(const NormalizedHdr& image, double* mu = nullptr);

using EpochCallback = std::function<void(int epoch, double loss)>;

/// Optimizes a freshly initialized network on one HDR image.
TrainResult train(const HdrImage& src, const TrainConfig& cfg, const VggWeights<float>& weights,
                  const EpochCallback& on_epoch = {});

std::string to_string(LossMode mode);
std::string to_string(InputMode mode);

}  // namespace fcmtm
