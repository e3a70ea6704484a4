#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "fcmtm/tensor.hpp"

namespace fcmtm {

/// Convolution layer parameters: stride 1, zero "same" padding.
template <typename Scalar>
struct ConvParams {
  Tensor<Scalar> weight;  ///< (out, in, kh, kw), kh and kw odd
  Tensor<Scalar> bias;    ///< (out)

  ConvParams() = default;
  ConvParams(Index in_channels, Index out_channels, Index kernel = 3)
      : weight({out_channels, in_channels, kernel, kernel}), bias({out_channels}) {}
  ConvParams(Tensor<Scalar> w, Tensor<Scalar> b) : weight(std::move(w)), bias(std::move(b)) {
    if (weight.rank() != 4 || bias.rank() != 1 || bias.dim(0) != weight.dim(0))
      fail(ErrorCode::shape_mismatch, "convolution weight/bias shapes disagree");
    if (weight.dim(2) % 2 == 0 || weight.dim(3) % 2 == 0)
      fail(ErrorCode::shape_mismatch, "convolution kernel size must be odd");
  }

  Index out_channels() const { return weight.dim(0); }
  Index in_channels() const { return weight.dim(1); }
  Index kernel_height() const { return weight.dim(2); }
  Index kernel_width() const { return weight.dim(3); }
  Index parameter_count() const { return weight.size() + bias.size(); }

  template <typename Other>
  ConvParams<Other> cast() const {
    return {weight.template cast<Other>(), bias.template cast<Other>()};
  }
};

template <typename Scalar>
struct ConvGrads {
  Tensor<Scalar> input;
  Tensor<Scalar> weight;
  Tensor<Scalar> bias;
};

namespace detail {

// Column buffers are built a band of rows at a time to bound memory on
// large frames.
inline Index rows_per_band(Index col_rows, Index width, Index height) {
  constexpr Index kBudget = Index{1} << 22;
  return std::clamp<Index>(kBudget / std::max<Index>(1, col_rows * width), 1, height);
}

template <typename Scalar>
using ColMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
void im2col(const Tensor<Scalar>& in, Index kh, Index kw, Index y0, Index y1, ColMatrix<Scalar>& cols) {
  const Index C = in.channels(), H = in.height(), W = in.width();
  const Index ry = kh / 2, rx = kw / 2, band = y1 - y0;
  cols.resize(C * kh * kw, band * W);
  for (Index c = 0; c < C; ++c)
    for (Index ky = 0; ky < kh; ++ky)
      for (Index kx = 0; kx < kw; ++kx) {
        Scalar* row = cols.row((c * kh + ky) * kw + kx).data();
        const Index dx = kx - rx;
        for (Index y = y0; y < y1; ++y) {
          Scalar* dst = row + (y - y0) * W;
          const Index sy = y + ky - ry;
          if (sy < 0 || sy >= H) {
            std::fill(dst, dst + W, Scalar(0));
            continue;
          }
          const Scalar* src = in.data() + (c * H + sy) * W;
          const Index x_lo = std::max<Index>(0, -dx), x_hi = std::min<Index>(W, W - dx);
          std::fill(dst, dst + x_lo, Scalar(0));
          std::copy(src + x_lo + dx, src + x_hi + dx, dst + x_lo);
          std::fill(dst + x_hi, dst + W, Scalar(0));
        }
      }
}

template <typename Scalar>
void col2im_add(const ColMatrix<Scalar>& cols, Index kh, Index kw, Index y0, Index y1, Tensor<Scalar>& out) {
  const Index C = out.channels(), H = out.height(), W = out.width();
  const Index ry = kh / 2, rx = kw / 2;
  for (Index c = 0; c < C; ++c)
    for (Index ky = 0; ky < kh; ++ky)
      for (Index kx = 0; kx < kw; ++kx) {
        const Scalar* row = cols.row((c * kh + ky) * kw + kx).data();
        const Index dx = kx - rx;
        for (Index y = y0; y < y1; ++y) {
          const Index sy = y + ky - ry;
          if (sy < 0 || sy >= H) continue;
          const Scalar* src = row + (y - y0) * W;
          Scalar* dst = out.data() + (c * H + sy) * W;
          const Index x_lo = std::max<Index>(0, -dx), x_hi = std::min<Index>(W, W - dx);
          for (Index x = x_lo; x < x_hi; ++x) dst[x + dx] += src[x];
        }
      }
}

template <typename Scalar>
void check_conv_input(const Tensor<Scalar>& input, const ConvParams<Scalar>& params) {
  require_rank3(input, "conv2d");
  if (input.channels() != params.in_channels())
    fail(ErrorCode::shape_mismatch, "conv2d: input has " + std::to_string(input.channels()) +
                                        " channels, kernel expects " + std::to_string(params.in_channels()));
}

}  // namespace detail

/// Cross-correlation with zero padding; output keeps the input's spatial size.
template <typename Scalar>
Tensor<Scalar> conv2d_forward(const Tensor<Scalar>& input, const ConvParams<Scalar>& params) {
  detail::check_conv_input(input, params);
  const Index H = input.height(), W = input.width();
  const Index kh = params.kernel_height(), kw = params.kernel_width();
  Tensor<Scalar> out({params.out_channels(), H, W});
  auto weights = params.weight.matrix();
  auto out_mat = out.matrix();
  const auto bias = params.bias.values().matrix();
  const Index band = detail::rows_per_band(input.channels() * kh * kw, W, H);
  detail::ColMatrix<Scalar> cols;
  for (Index y0 = 0; y0 < H; y0 += band) {
    const Index y1 = std::min(H, y0 + band);
    detail::im2col(input, kh, kw, y0, y1, cols);
    auto block = out_mat.middleCols(y0 * W, (y1 - y0) * W);
    block.noalias() = weights * cols;
    block.colwise() += bias;
  }
  return out;
}

/// Gradient with respect to the input only (frozen weights).
template <typename Scalar>
Tensor<Scalar> conv2d_backward_input(const Tensor<Scalar>& upstream, const ConvParams<Scalar>& params) {
  require_rank3(upstream, "conv2d_backward");
  if (upstream.channels() != params.out_channels())
    fail(ErrorCode::shape_mismatch, "conv2d_backward: upstream channel count mismatch");
  const Index H = upstream.height(), W = upstream.width();
  const Index kh = params.kernel_height(), kw = params.kernel_width();
  Tensor<Scalar> grad_input({params.in_channels(), H, W});
  auto weights = params.weight.matrix();
  auto up = upstream.matrix();
  const Index band = detail::rows_per_band(params.in_channels() * kh * kw, W, H);
  detail::ColMatrix<Scalar> cols;
  for (Index y0 = 0; y0 < H; y0 += band) {
    const Index y1 = std::min(H, y0 + band);
    cols.noalias() = weights.transpose() * up.middleCols(y0 * W, (y1 - y0) * W);
    detail::col2im_add(cols, kh, kw, y0, y1, grad_input);
  }
  return grad_input;
}

template <typename Scalar>
ConvGrads<Scalar> conv2d_backward(const Tensor<Scalar>& input, const ConvParams<Scalar>& params,
                                  const Tensor<Scalar>& upstream) {
  detail::check_conv_input(input, params);
  if (upstream.rank() != 3 || upstream.channels() != params.out_channels() || upstream.height() != input.height() ||
      upstream.width() != input.width())
    fail(ErrorCode::shape_mismatch, "conv2d_backward: upstream gradient does not match forward output");
  const Index H = input.height(), W = input.width();
  const Index kh = params.kernel_height(), kw = params.kernel_width();
  ConvGrads<Scalar> grads{Tensor<Scalar>({params.in_channels(), H, W}), Tensor<Scalar>::zeros_like(params.weight),
                          Tensor<Scalar>::zeros_like(params.bias)};
  auto weights = params.weight.matrix();
  auto up = upstream.matrix();
  auto grad_w = grads.weight.matrix();
  grads.bias.values() = up.rowwise().sum().array();
  const Index band = detail::rows_per_band(input.channels() * kh * kw, W, H);
  detail::ColMatrix<Scalar> cols, grad_cols;
  for (Index y0 = 0; y0 < H; y0 += band) {
    const Index y1 = std::min(H, y0 + band);
    detail::im2col(input, kh, kw, y0, y1, cols);
    auto up_band = up.middleCols(y0 * W, (y1 - y0) * W);
    grad_w.noalias() += up_band * cols.transpose();
    grad_cols.noalias() = weights.transpose() * up_band;
    detail::col2im_add(grad_cols, kh, kw, y0, y1, grads.input);
  }
  return grads;
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x) {
  return {x.shape(), x.values().max(Scalar(0))};
}

/// Passes the gradient where the activation is positive; the subgradient at 0 is 0.
/// Works with either the pre- or post-activation tensor since both share sign.
template <typename Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& activation, const Tensor<Scalar>& upstream) {
  require_same_shape(activation, upstream, "relu_backward");
  return {upstream.shape(), (activation.values() > Scalar(0)).select(upstream.values(), Scalar(0))};
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

template <typename Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& x) {
  return {x.shape(), x.values().unaryExpr([](Scalar v) { return sigmoid(v); })};
}

/// Takes the forward output s and returns upstream * s * (1 - s).
template <typename Scalar>
Tensor<Scalar> sigmoid_backward(const Tensor<Scalar>& output, const Tensor<Scalar>& upstream) {
  require_same_shape(output, upstream, "sigmoid_backward");
  const auto& s = output.values();
  return {upstream.shape(), upstream.values() * s * (Scalar(1) - s)};
}

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_same_shape(a, b, "add");
  return {a.shape(), a.values() + b.values()};
}

template <typename Scalar>
std::pair<Tensor<Scalar>, Tensor<Scalar>> add_backward(const Tensor<Scalar>& upstream) {
  return {upstream, upstream};
}

/// Stacks rank-3 tensors along the channel axis, in argument order.
template <typename Scalar>
Tensor<Scalar> concat_channels(std::span<const Tensor<Scalar>* const> parts) {
  if (parts.empty()) fail(ErrorCode::invalid_argument, "concat_channels: nothing to concatenate");
  const Index H = parts[0]->height(), W = parts[0]->width();
  Index channels = 0;
  for (const auto* p : parts) {
    require_rank3(*p, "concat_channels");
    if (p->height() != H || p->width() != W)
      fail(ErrorCode::shape_mismatch, "concat_channels: spatial sizes differ");
    channels += p->channels();
  }
  Tensor<Scalar> out({channels, H, W});
  Index offset = 0;
  for (const auto* p : parts) {
    out.values().segment(offset, p->size()) = p->values();
    offset += p->size();
  }
  return out;
}

template <typename Scalar>
std::vector<Tensor<Scalar>> concat_backward(const Tensor<Scalar>& upstream, std::span<const Index> channel_counts) {
  require_rank3(upstream, "concat_backward");
  const Index plane = upstream.plane_size();
  Index total = 0;
  for (Index c : channel_counts) total += c;
  if (total != upstream.channels()) fail(ErrorCode::shape_mismatch, "concat_backward: channel split mismatch");
  std::vector<Tensor<Scalar>> parts;
  Index offset = 0;
  for (Index c : channel_counts) {
    parts.emplace_back(typename Tensor<Scalar>::Shape{c, upstream.height(), upstream.width()},
                       upstream.values().segment(offset, c * plane));
    offset += c * plane;
  }
  return parts;
}

namespace detail {
// Row-major first maximum of a 2x2 window.
template <typename Scalar>
Index argmax_2x2(const Tensor<Scalar>& in, Index c, Index oy, Index ox) {
  Index best = ((c * in.height()) + 2 * oy) * in.width() + 2 * ox;
  const Index candidates[3] = {best + 1, best + in.width(), best + in.width() + 1};
  for (Index idx : candidates)
    if (in[idx] > in[best]) best = idx;
  return best;
}
}  // namespace detail

/// 2x2 max pooling, stride 2; odd trailing rows/columns are dropped.
template <typename Scalar>
Tensor<Scalar> maxpool2x2(const Tensor<Scalar>& input) {
  require_rank3(input, "maxpool2x2");
  const Index C = input.channels(), OH = input.height() / 2, OW = input.width() / 2;
  Tensor<Scalar> out({C, OH, OW});
  for (Index c = 0; c < C; ++c)
    for (Index y = 0; y < OH; ++y)
      for (Index x = 0; x < OW; ++x) out(c, y, x) = input[detail::argmax_2x2(input, c, y, x)];
  return out;
}

/// Routes each pooled gradient to the first maximal element of its window.
template <typename Scalar>
Tensor<Scalar> maxpool_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& upstream) {
  require_rank3(input, "maxpool_backward");
  const Index C = input.channels(), OH = input.height() / 2, OW = input.width() / 2;
  if (upstream.rank() != 3 || upstream.channels() != C || upstream.height() != OH || upstream.width() != OW)
    fail(ErrorCode::shape_mismatch, "maxpool_backward: upstream gradient does not match pooled shape");
  Tensor<Scalar> grad = Tensor<Scalar>::zeros_like(input);
  for (Index c = 0; c < C; ++c)
    for (Index y = 0; y < OH; ++y)
      for (Index x = 0; x < OW; ++x) grad[detail::argmax_2x2(input, c, y, x)] += upstream(c, y, x);
  return grad;
}

}  // namespace fcmtm
