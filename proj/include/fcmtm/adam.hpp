#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "fcmtm/tensor.hpp"

namespace fcmtm {

/// Bias-corrected Adam. Gradients are read from each parameter's grad slot.
template <typename Scalar>
class Adam {
 public:
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  long step_count() const { return step_; }

  /// Applies one update with learning rate `lr`. A non-finite gradient
  /// aborts before any parameter is touched.
  void step(std::span<Tensor<Scalar>* const> params, double lr) {
    if (!(lr > 0.0)) fail(ErrorCode::invalid_argument, "learning rate must be positive");
    if (first_.empty()) {
      for (auto* p : params) {
        first_.push_back(Eigen::ArrayXd::Zero(p->size()));
        second_.push_back(Eigen::ArrayXd::Zero(p->size()));
      }
    }
    if (first_.size() != params.size()) fail(ErrorCode::shape_mismatch, "Adam: parameter list changed");
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params[i]->size() != first_[i].size()) fail(ErrorCode::shape_mismatch, "Adam: parameter shape changed");
      if (params[i]->has_grad() && !params[i]->grad().isFinite().all())
        fail(ErrorCode::divergence, "divergence: non-finite gradient");
    }
    ++step_;
    const double correction1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
    const double correction2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor<Scalar>& p = *params[i];
      if (!p.has_grad()) continue;
      const Eigen::ArrayXd g = p.grad().template cast<double>();
      first_[i] = beta1 * first_[i] + (1.0 - beta1) * g;
      second_[i] = beta2 * second_[i] + (1.0 - beta2) * g.square();
      const Eigen::ArrayXd update =
          lr * (first_[i] / correction1) / ((second_[i] / correction2).sqrt() + epsilon);
      p.values() = (p.values().template cast<double>() - update).template cast<Scalar>();
    }
  }

 private:
  long step_ = 0;
  std::vector<Eigen::ArrayXd> first_;
  std::vector<Eigen::ArrayXd> second_;
};

}  // namespace fcmtm
