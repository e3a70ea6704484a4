#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fcmtm/exposure.hpp"
#include "fcmtm/fcm_loss.hpp"

namespace fcmtm {

struct DumpOptions {
  int layers = 3;
  std::vector<int> channels = {0, 1, 2, 3};  ///< channels dumped per layer (out-of-range ones are skipped)
  FcmConfig fcm;
};

struct DumpSummary {
  double median = 0.0;
  double mu = 0.0;
  ExposureStops stops;
  std::vector<std::filesystem::path> files;
};

/// Writes the three exposures, the mu-law guidance, and the C, M_s, M_n and f
/// maps of the guidance features (alpha_hdr) as PFM files into `dir`.
DumpSummary dump_diagnostics(const HdrImage& src, const VggWeights<float>& weights, const DumpOptions& opts,
                             const std::filesystem::path& dir);

}  // namespace fcmtm
