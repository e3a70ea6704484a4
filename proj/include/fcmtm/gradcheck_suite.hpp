#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "fcmtm/gradcheck.hpp"

namespace fcmtm {

struct GradcheckOptions {
  double tolerance = 1e-3;
  double step = kGradcheckStep;
  std::uint64_t seed = 1;
  Index max_probes = 24;  ///< coordinates sampled per checked tensor
};

/// Checks every differentiable kernel, the masking transform, the loss, the
/// VGG prefix and the tone mapping network, each on three random shapes, in
/// double precision. `on_result` sees each entry as it completes.
std::vector<GradcheckResult> run_gradcheck_suite(const GradcheckOptions& opts = {},
                                                 const std::function<void(const GradcheckResult&)>& on_result = {});

}  // namespace fcmtm
