#include "fcmtm/diagnostics.hpp"

#include "fcmtm/hdr_io.hpp"
#include "fcmtm/image_tensor.hpp"
#include "fcmtm/trainer.hpp"

namespace fcmtm {
namespace {

HdrImage as_float_map(const LdrImage& image) {
  HdrImage out(image.width, image.height);
  out.data = image.data;
  return out;
}

GrayMap channel_map(const Tensorf& t, Index c) {
  GrayMap map{static_cast<int>(t.width()), static_cast<int>(t.height()), {}};
  map.data = Eigen::Map<const Eigen::ArrayXf>(t.data() + c * t.plane_size(), t.plane_size());
  return map;
}

}  // namespace

DumpSummary dump_diagnostics(const HdrImage& src, const VggWeights<float>& weights, const DumpOptions& opts,
                             const std::filesystem::path& dir) {
  opts.fcm.validate();
  if (opts.layers < 1 || opts.layers > weights.layer_count())
    fail(ErrorCode::invalid_argument, "dump: layer count out of range");
  std::filesystem::create_directories(dir);

  DumpSummary summary;
  const NormalizedHdr normalized = normalize(src);
  summary.median = normalized.median_intensity;
  const ExposureSet set = make_exposure_set(normalized);
  summary.stops = set.stops;
  auto emit = [&](const std::string& name, const Bytes& bytes) {
    const auto path = dir / name;
    write_file(path, bytes);
    summary.files.push_back(path);
  };

  const std::array<const char*, 3> tags = {"low", "mid", "high"};
  for (std::size_t i = 0; i < 3; ++i)
    emit(std::string("exposure_") + tags[i] + ".pfm", write_pfm(as_float_map(set.images[i])));
  const LdrImage guidance = guidance_image(normalized, &summary.mu);
  emit("guidance_mu.pfm", write_pfm(as_float_map(guidance)));

  const auto acts = vgg_forward(to_tensor<float>(guidance), weights, opts.layers);
  for (int l = 0; l < opts.layers; ++l) {
    const Tensorf& features = acts.features[static_cast<std::size_t>(l)];
    const auto maps = contrast_maps(features, opts.fcm.alpha_hdr, opts.fcm);
    for (int c : opts.channels) {
      if (c < 0 || c >= features.channels()) continue;
      const std::string stem = kVggLayerNames[static_cast<std::size_t>(l)] + "_c" + std::to_string(c) + "_";
      emit(stem + "C.pfm", write_pfm_gray(channel_map(maps.contrast, c)));
      emit(stem + "Ms.pfm", write_pfm_gray(channel_map(maps.self_mask, c)));
      emit(stem + "Mn.pfm", write_pfm_gray(channel_map(maps.neighborhood_mask, c)));
      emit(stem + "f.pfm", write_pfm_gray(channel_map(maps.masked, c)));
    }
  }
  return summary;
}

}  // namespace fcmtm
