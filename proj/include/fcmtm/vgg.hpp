#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "fcmtm/hdr_io.hpp"
#include "fcmtm/ops.hpp"
#include "fcmtm/weights_file.hpp"

namespace fcmtm {

/// Truncated VGG19 prefix: conv1_1, conv1_2, 2x2 max-pool, conv2_1.
inline constexpr int kVggMaxLayers = 3;
inline const std::array<std::string, kVggMaxLayers> kVggLayerNames = {"conv1_1", "conv1_2", "conv2_1"};
inline constexpr std::array<std::array<Index, 2>, kVggMaxLayers> kVggLayerChannels = {{{3, 64}, {64, 64}, {64, 128}}};

/// Natural-image normalization the pretrained weights expect (RGB, [0,1] input).
struct VggPreproc {
  std::array<double, 3> mean = {0.485, 0.456, 0.406};
  std::array<double, 3> std = {0.229, 0.224, 0.225};
};

template <typename Scalar>
struct VggWeights {
  std::vector<ConvParams<Scalar>> layers;
  VggPreproc preproc;

  int layer_count() const { return static_cast<int>(layers.size()); }

  template <typename Other>
  VggWeights<Other> cast() const {
    VggWeights<Other> out;
    out.preproc = preproc;
    for (const auto& l : layers) out.layers.push_back(l.template cast<Other>());
    return out;
  }
};

/// Validates names and shapes against the VGG19 prefix.
VggWeights<float> vgg_from_records(std::vector<LayerRecord> records);
std::vector<LayerRecord> vgg_to_records(const VggWeights<float>& weights);
VggWeights<float> load_vgg_weights(ByteView bytes);
VggWeights<float> load_vgg_weights_file(const std::filesystem::path& path);
Bytes save_vgg_weights(const VggWeights<float>& weights);

/// Test stand-in for pretrained weights: He-uniform kernels, small positive
/// biases, deterministic per seed.
VggWeights<float> random_vgg_weights(std::uint64_t seed, int n_layers = kVggMaxLayers);

/// Forward state kept for the backward pass.
template <typename Scalar>
struct VggActivations {
  Tensor<Scalar> input;                  ///< normalized input
  std::vector<Tensor<Scalar>> features;  ///< post-ReLU map of each requested layer
  Tensor<Scalar> pooled;                 ///< pooled conv1_2 output, when layer 3 is requested
};

template <typename Scalar>
VggActivations<Scalar> vgg_forward(const Tensor<Scalar>& image, const VggWeights<Scalar>& weights, int n_layers) {
  if (n_layers < 1 || n_layers > kVggMaxLayers || n_layers > weights.layer_count())
    fail(ErrorCode::invalid_argument, "vgg_forward: layer count out of range");
  require_rank3(image, "vgg_forward");
  if (image.channels() != 3) fail(ErrorCode::shape_mismatch, "vgg_forward: expected a 3-channel image");
  if (!((image.values() >= Scalar(0)).all() && (image.values() <= Scalar(1)).all()))
    fail(ErrorCode::invalid_argument, "vgg_forward: input must lie in [0,1]");

  VggActivations<Scalar> acts;
  acts.input = image;
  for (Index c = 0; c < 3; ++c)
    acts.input.plane(c).array() =
        (image.plane(c).array() - Scalar(weights.preproc.mean[c])) / Scalar(weights.preproc.std[c]);

  acts.features.push_back(relu(conv2d_forward(acts.input, weights.layers[0])));
  if (n_layers >= 2) acts.features.push_back(relu(conv2d_forward(acts.features[0], weights.layers[1])));
  if (n_layers >= 3) {
    acts.pooled = maxpool2x2(acts.features[1]);
    acts.features.push_back(relu(conv2d_forward(acts.pooled, weights.layers[2])));
  }
  return acts;
}

/// Gradient with respect to the [0,1] input image. `grads[i]` is the
/// gradient of the objective with respect to `acts.features[i]`.
template <typename Scalar>
Tensor<Scalar> vgg_backward(const std::vector<Tensor<Scalar>>& grads, const VggActivations<Scalar>& acts,
                            const VggWeights<Scalar>& weights) {
  const auto n = acts.features.size();
  if (grads.size() != n) fail(ErrorCode::shape_mismatch, "vgg_backward: one gradient per layer expected");
  for (std::size_t i = 0; i < n; ++i) require_same_shape(grads[i], acts.features[i], "vgg_backward");

  Tensor<Scalar> carry;  // gradient flowing into features[i] from deeper layers
  for (std::size_t i = n; i-- > 0;) {
    Tensor<Scalar> g = grads[i];
    if (carry.size() > 0) g.values() += carry.values();
    g = relu_backward(acts.features[i], g);
    if (i == 2) {
      carry = maxpool_backward(acts.features[1], conv2d_backward_input(g, weights.layers[2]));
    } else if (i == 1) {
      carry = conv2d_backward_input(g, weights.layers[1]);
    } else {
      carry = conv2d_backward_input(g, weights.layers[0]);
    }
  }
  for (Index c = 0; c < 3; ++c) carry.plane(c) /= Scalar(weights.preproc.std[c]);
  return carry;
}

// ---------------------------------------------------------------------------
// Manifest sidecar and parity fixtures

struct FixtureActivation {
  std::string layer;
  std::string file;  ///< raw little-endian f32, (C,H,W) order
  Tensorf::Shape shape;
};

struct ParityFixture {
  std::string name;
  std::string input;  ///< color PFM holding the [0,1] input image
  double tolerance = 1e-4;
  std::vector<FixtureActivation> activations;
};

struct LayerShape {
  std::string name;
  Tensorf::Shape shape;
};

struct VggManifest {
  std::uint32_t crc32 = 0;
  std::vector<LayerShape> layers;
  VggPreproc preproc;
  std::vector<ParityFixture> fixtures;
};

VggManifest parse_manifest(const std::string& json_text);
std::string manifest_to_json(const VggManifest& manifest);

/// Checks the weight file's CRC, layer shapes and preprocessing constants.
void verify_manifest(const VggManifest& manifest, ByteView weight_bytes, const VggWeights<float>& weights);

struct ParityResult {
  std::string fixture;
  std::string layer;
  double max_abs_error = 0.0;
  double tolerance = 0.0;
  bool passed() const { return max_abs_error <= tolerance; }
};

/// Runs every fixture input through the engine and compares activations.
std::vector<ParityResult> check_parity(const VggManifest& manifest, const VggWeights<float>& weights,
                                       const std::filesystem::path& fixture_dir);

/// Deterministic 32x32 card: red ramps left to right, green top to bottom,
/// blue is an 8-pixel checkerboard of 0.2 and 0.8.
Tensorf vgg_test_card(int size = 32);

/// Writes the test card and zero image with their activations beside the
/// weight file, and returns the manifest describing them.
VggManifest write_reference_fixtures(const VggWeights<float>& weights, ByteView weight_bytes,
                                     const std::filesystem::path& dir, const std::string& stem);

Bytes encode_f32_blob(const Tensorf& t);
Tensorf decode_f32_blob(ByteView bytes, const Tensorf::Shape& shape);

}  // namespace fcmtm
