#pragma once

#include <Eigen/Core>

#include <functional>
#include <initializer_list>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fcmtm/error.hpp"

namespace fcmtm {

using Index = Eigen::Index;

/// Dense channel-major array. Rank 3 tensors are (channels, height, width)
/// feature maps; rank 4 tensors are (out, in, kh, kw) convolution kernels.
/// Values live in an Eigen array so kernels can use expressions and GEMM
/// directly. The optional gradient slot is only allocated for parameters.
template <typename Scalar_>
class Tensor {
 public:
  using Scalar = Scalar_;
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using Shape = std::vector<Index>;
  using PlaneMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    check_shape();
    values_ = Array::Zero(volume(shape_));
  }

  Tensor(Shape shape, Array values) : shape_(std::move(shape)), values_(std::move(values)) {
    check_shape();
    if (values_.size() != volume(shape_)) fail(ErrorCode::shape_mismatch, "tensor values do not match shape");
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor constant(Shape shape, Scalar value) {
    Tensor t(std::move(shape));
    t.values_.setConstant(value);
    return t;
  }
  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(Index i) const { return shape_[static_cast<std::size_t>(i)]; }
  Index size() const { return values_.size(); }

  // rank-3 accessors
  Index channels() const { return shape_[0]; }
  Index height() const { return shape_[1]; }
  Index width() const { return shape_[2]; }
  Index plane_size() const { return shape_[1] * shape_[2]; }

  Array& values() { return values_; }
  const Array& values() const { return values_; }
  Scalar* data() { return values_.data(); }
  const Scalar* data() const { return values_.data(); }

  Scalar& operator[](Index i) { return values_[i]; }
  Scalar operator[](Index i) const { return values_[i]; }

  Scalar& operator()(Index c, Index y, Index x) { return values_[(c * shape_[1] + y) * shape_[2] + x]; }
  Scalar operator()(Index c, Index y, Index x) const { return values_[(c * shape_[1] + y) * shape_[2] + x]; }

  Scalar& operator()(Index o, Index i, Index ky, Index kx) {
    return values_[((o * shape_[1] + i) * shape_[2] + ky) * shape_[3] + kx];
  }
  Scalar operator()(Index o, Index i, Index ky, Index kx) const {
    return values_[((o * shape_[1] + i) * shape_[2] + ky) * shape_[3] + kx];
  }

  /// Rank-3 tensor viewed as a (channels x height*width) row-major matrix.
  /// Rank-4 kernels view as (out x in*kh*kw).
  Eigen::Map<PlaneMatrix> matrix() { return {values_.data(), shape_[0], values_.size() / shape_[0]}; }
  Eigen::Map<const PlaneMatrix> matrix() const { return {values_.data(), shape_[0], values_.size() / shape_[0]}; }

  /// One channel plane as a (height x width) row-major matrix.
  Eigen::Map<PlaneMatrix> plane(Index c) { return {values_.data() + c * plane_size(), shape_[1], shape_[2]}; }
  Eigen::Map<const PlaneMatrix> plane(Index c) const {
    return {values_.data() + c * plane_size(), shape_[1], shape_[2]};
  }

  bool has_grad() const { return grad_.has_value(); }
  /// Gradient slot, allocated as zeros on first access.
  Array& grad() {
    if (!grad_) grad_ = Array::Zero(values_.size());
    return *grad_;
  }
  const Array& grad() const {
    if (!grad_) fail(ErrorCode::invalid_argument, "tensor has no gradient");
    return *grad_;
  }
  void zero_grad() { grad().setZero(); }
  void drop_grad() { grad_.reset(); }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const { return values_.isFinite().all(); }

  template <typename Other>
  Tensor<Other> cast() const {
    Tensor<Other> out(shape_, values_.template cast<Other>());
    return out;
  }

  std::string shape_string() const {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
    os << ')';
    return os.str();
  }

  static Index volume(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
  }

 private:
  void check_shape() const {
    if (shape_.empty() || shape_.size() > 4) fail(ErrorCode::shape_mismatch, "tensor rank must be 1..4");
    for (Index d : shape_)
      if (d < 0) fail(ErrorCode::shape_mismatch, "negative tensor dimension");
  }

  Shape shape_;
  Array values_;
  std::optional<Array> grad_;
};

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

template <typename Scalar>
void require_same_shape(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* what) {
  if (!a.same_shape(b))
    fail(ErrorCode::shape_mismatch, std::string(what) + ": shape " + a.shape_string() + " vs " + b.shape_string());
}

template <typename Scalar>
void require_rank3(const Tensor<Scalar>& t, const char* what) {
  if (t.rank() != 3) fail(ErrorCode::shape_mismatch, std::string(what) + ": expected a (C,H,W) tensor");
}

}  // namespace fcmtm
