#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "fcmtm/ops.hpp"
#include "fcmtm/random.hpp"
#include "fcmtm/weights_file.hpp"

namespace fcmtm {

// Channel progressions of the three stages. Every layer is 3x3, stride 1.
inline constexpr std::array<Index, 4> kEncoderChannels = {3, 16, 32, 64};
inline constexpr std::array<Index, 3> kFusionChannels = {192, 192, 192};
inline constexpr std::array<Index, 4> kDecoderChannels = {192, 32, 16, 3};
inline constexpr int kExposureCount = 3;
inline const std::array<std::string, 8> kTmLayerNames = {"enc1",  "enc2", "enc3", "fuse1",
                                                        "fuse2", "dec1", "dec2", "dec3"};

/// Trainable parameters. The encoder is stored once and shared by all
/// three exposure branches.
template <typename Scalar>
struct TmParams {
  std::array<ConvParams<Scalar>, 3> encoder;
  std::array<ConvParams<Scalar>, 2> fusion;
  std::array<ConvParams<Scalar>, 3> decoder;

  /// Zero-filled parameters of the fixed topology.
  static TmParams zeros() {
    TmParams p;
    for (std::size_t i = 0; i < 3; ++i) p.encoder[i] = ConvParams<Scalar>(kEncoderChannels[i], kEncoderChannels[i + 1]);
    for (std::size_t i = 0; i < 2; ++i) p.fusion[i] = ConvParams<Scalar>(kFusionChannels[i], kFusionChannels[i + 1]);
    for (std::size_t i = 0; i < 3; ++i) p.decoder[i] = ConvParams<Scalar>(kDecoderChannels[i], kDecoderChannels[i + 1]);
    return p;
  }

  std::array<ConvParams<Scalar>*, 8> layers() {
    return {&encoder[0], &encoder[1], &encoder[2], &fusion[0], &fusion[1], &decoder[0], &decoder[1], &decoder[2]};
  }
  std::array<const ConvParams<Scalar>*, 8> layers() const {
    return {&encoder[0], &encoder[1], &encoder[2], &fusion[0], &fusion[1], &decoder[0], &decoder[1], &decoder[2]};
  }

  /// Weight and bias of every layer, in layer order.
  std::vector<Tensor<Scalar>*> tensors() {
    std::vector<Tensor<Scalar>*> out;
    for (auto* l : layers()) {
      out.push_back(&l->weight);
      out.push_back(&l->bias);
    }
    return out;
  }

  Index parameter_count() const {
    Index n = 0;
    for (const auto* l : layers()) n += l->parameter_count();
    return n;
  }

  void zero_grad() {
    for (auto* t : tensors()) t->zero_grad();
  }

  template <typename Other>
  TmParams<Other> cast() const {
    TmParams<Other> out;
    auto dst = out.layers();
    auto src = layers();
    for (std::size_t i = 0; i < dst.size(); ++i) *dst[i] = src[i]->template cast<Other>();
    return out;
  }
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights with fan_in = in * 9,
/// zero biases. Draws come from SplitMix64 layer by layer in storage order.
template <typename Scalar>
TmParams<Scalar> init_params(std::uint64_t seed) {
  TmParams<Scalar> p = TmParams<Scalar>::zeros();
  SplitMix64 rng(seed);
  for (auto* layer : p.layers()) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer->in_channels() * 9));
    for (Index i = 0; i < layer->weight.size(); ++i) layer->weight[i] = static_cast<Scalar>(rng.symmetric(bound));
  }
  return p;
}

template <typename Scalar>
using Exposures = std::array<Tensor<Scalar>, kExposureCount>;

/// Post-ReLU activations of one encoder branch.
template <typename Scalar>
struct EncoderCache {
  std::array<Tensor<Scalar>, 3> acts;
};

template <typename Scalar>
struct TmCache {
  Exposures<Scalar> inputs;
  std::array<EncoderCache<Scalar>, kExposureCount> branches;
  Tensor<Scalar> fused_input;                 ///< 192-channel concatenation
  std::array<Tensor<Scalar>, 2> fusion;       ///< post-ReLU
  std::array<Tensor<Scalar>, 2> decoder;      ///< post-ReLU hidden decoder layers
  Tensor<Scalar> output;                      ///< sigmoid(dec3 + mean of inputs)
};

template <typename Scalar>
EncoderCache<Scalar> encoder_forward(const Tensor<Scalar>& input, const TmParams<Scalar>& params) {
  EncoderCache<Scalar> cache;
  cache.acts[0] = relu(conv2d_forward(input, params.encoder[0]));
  cache.acts[1] = relu(conv2d_forward(cache.acts[0], params.encoder[1]));
  cache.acts[2] = relu(conv2d_forward(cache.acts[1], params.encoder[2]));
  return cache;
}

template <typename Scalar>
TmCache<Scalar> tm_forward(const Exposures<Scalar>& exposures, const TmParams<Scalar>& params) {
  for (const auto& e : exposures) {
    require_rank3(e, "tm_forward");
    if (e.channels() != 3) fail(ErrorCode::shape_mismatch, "tm_forward: exposures must have 3 channels");
    require_same_shape(e, exposures[0], "tm_forward");
  }
  TmCache<Scalar> cache;
  cache.inputs = exposures;
  for (int b = 0; b < kExposureCount; ++b) cache.branches[b] = encoder_forward(exposures[b], params);

  const std::array<const Tensor<Scalar>*, 3> parts = {&cache.branches[0].acts[2], &cache.branches[1].acts[2],
                                                      &cache.branches[2].acts[2]};
  cache.fused_input = concat_channels<Scalar>(parts);
  cache.fusion[0] = relu(conv2d_forward(cache.fused_input, params.fusion[0]));
  cache.fusion[1] = relu(conv2d_forward(cache.fusion[0], params.fusion[1]));
  cache.decoder[0] = relu(conv2d_forward(cache.fusion[1], params.decoder[0]));
  cache.decoder[1] = relu(conv2d_forward(cache.decoder[0], params.decoder[1]));

  Tensor<Scalar> z = conv2d_forward(cache.decoder[1], params.decoder[2]);
  z.values() += (exposures[0].values() + exposures[1].values() + exposures[2].values()) / Scalar(3);
  cache.output = sigmoid(z);
  return cache;
}

namespace detail {
template <typename Scalar>
void accumulate(ConvParams<Scalar>& params, const ConvGrads<Scalar>& grads) {
  params.weight.grad() += grads.weight.values();
  params.bias.grad() += grads.bias.values();
}
}  // namespace detail

/// Backpropagates one branch's 64-channel gradient into the shared encoder.
template <typename Scalar>
void encoder_backward(const Tensor<Scalar>& upstream, const Tensor<Scalar>& input, const EncoderCache<Scalar>& cache,
                      TmParams<Scalar>& params) {
  Tensor<Scalar> g = relu_backward(cache.acts[2], upstream);
  for (int l = 2; l >= 0; --l) {
    const Tensor<Scalar>& layer_input = l == 0 ? input : cache.acts[l - 1];
    auto grads = conv2d_backward(layer_input, params.encoder[l], g);
    detail::accumulate(params.encoder[l], grads);
    if (l > 0) g = relu_backward(layer_input, grads.input);
  }
}

/// Adds d loss / d params into each parameter's grad slot, given
/// `upstream` = d loss / d output.
template <typename Scalar>
void tm_backward(const Tensor<Scalar>& upstream, const TmCache<Scalar>& cache, TmParams<Scalar>& params) {
  require_same_shape(upstream, cache.output, "tm_backward");
  Tensor<Scalar> g = sigmoid_backward(cache.output, upstream);

  auto step = [&](ConvParams<Scalar>& layer, const Tensor<Scalar>& layer_input) {
    auto grads = conv2d_backward(layer_input, layer, g);
    detail::accumulate(layer, grads);
    g = relu_backward(layer_input, grads.input);
  };
  step(params.decoder[2], cache.decoder[1]);
  step(params.decoder[1], cache.decoder[0]);
  step(params.decoder[0], cache.fusion[1]);
  step(params.fusion[1], cache.fusion[0]);
  {
    auto grads = conv2d_backward(cache.fused_input, params.fusion[0], g);
    detail::accumulate(params.fusion[0], grads);
    g = std::move(grads.input);
  }
  const std::array<Index, 3> split = {kEncoderChannels[3], kEncoderChannels[3], kEncoderChannels[3]};
  auto branch_grads = concat_backward<Scalar>(g, split);
  for (int b = 0; b < kExposureCount; ++b)
    encoder_backward(branch_grads[static_cast<std::size_t>(b)], cache.inputs[b], cache.branches[b], params);
}

// Checkpoints reuse the FCMW container with the layer names above.
template <typename Scalar>
std::vector<LayerRecord> tm_to_records(const TmParams<Scalar>& params) {
  std::vector<LayerRecord> records;
  const auto layers = params.layers();
  for (std::size_t i = 0; i < layers.size(); ++i)
    records.push_back({kTmLayerNames[i], layers[i]->weight.template cast<float>(), layers[i]->bias.template cast<float>()});
  return records;
}

template <typename Scalar>
TmParams<Scalar> tm_from_records(const std::vector<LayerRecord>& records) {
  TmParams<Scalar> params = TmParams<Scalar>::zeros();
  auto layers = params.layers();
  if (records.size() != layers.size()) fail(ErrorCode::layer_mismatch, "checkpoint must hold 8 layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (records[i].name != kTmLayerNames[i] || records[i].weight.shape() != layers[i]->weight.shape())
      fail(ErrorCode::layer_mismatch, "checkpoint layer '" + records[i].name + "' does not fit the network");
    *layers[i] = ConvParams<Scalar>(records[i].weight.template cast<Scalar>(), records[i].bias.template cast<Scalar>());
  }
  return params;
}

}  // namespace fcmtm
