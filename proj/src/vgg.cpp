#include "fcmtm/vgg.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "json.hpp"

#include "fcmtm/image_tensor.hpp"
#include "fcmtm/random.hpp"

namespace fcmtm {

using json = nlohmann::json;

namespace {

Tensorf::Shape expected_shape(int layer) {
  const auto [in, out] = kVggLayerChannels[static_cast<std::size_t>(layer)];
  return {out, in, 3, 3};
}

}  // namespace

VggWeights<float> vgg_from_records(std::vector<LayerRecord> records) {
  if (records.empty() || records.size() > kVggMaxLayers)
    fail(ErrorCode::layer_mismatch, "VGG weight file must hold 1 to 3 layers");
  VggWeights<float> weights;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto& r = records[i];
    if (r.name != kVggLayerNames[i])
      fail(ErrorCode::layer_mismatch, "expected layer '" + kVggLayerNames[i] + "', found '" + r.name + "'");
    if (r.weight.shape() != expected_shape(static_cast<int>(i)))
      fail(ErrorCode::layer_mismatch, "layer '" + r.name + "' has shape " + r.weight.shape_string());
    weights.layers.emplace_back(std::move(r.weight), std::move(r.bias));
  }
  return weights;
}

std::vector<LayerRecord> vgg_to_records(const VggWeights<float>& weights) {
  std::vector<LayerRecord> records;
  for (int i = 0; i < weights.layer_count(); ++i)
    records.push_back({kVggLayerNames[static_cast<std::size_t>(i)], weights.layers[static_cast<std::size_t>(i)].weight,
                       weights.layers[static_cast<std::size_t>(i)].bias});
  return records;
}

VggWeights<float> load_vgg_weights(ByteView bytes) { return vgg_from_records(decode_fcmw(bytes)); }

VggWeights<float> load_vgg_weights_file(const std::filesystem::path& path) {
  return load_vgg_weights(read_file(path));
}

Bytes save_vgg_weights(const VggWeights<float>& weights) { return encode_fcmw(vgg_to_records(weights)); }

VggWeights<float> random_vgg_weights(std::uint64_t seed, int n_layers) {
  if (n_layers < 1 || n_layers > kVggMaxLayers) fail(ErrorCode::invalid_argument, "VGG layer count out of range");
  SplitMix64 rng(seed);
  VggWeights<float> weights;
  for (int l = 0; l < n_layers; ++l) {
    const auto [in, out] = kVggLayerChannels[static_cast<std::size_t>(l)];
    ConvParams<float> layer(in, out);
    const double bound = std::sqrt(6.0 / static_cast<double>(in * 9));
    for (Index i = 0; i < layer.weight.size(); ++i) layer.weight[i] = static_cast<float>(rng.symmetric(bound));
    for (Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = static_cast<float>(0.1 * rng.uniform());
    weights.layers.push_back(std::move(layer));
  }
  return weights;
}

// ---------------------------------------------------------------------------

Bytes encode_f32_blob(const Tensorf& t) {
  Bytes out(static_cast<std::size_t>(t.size()) * 4);
  for (Index i = 0; i < t.size(); ++i) {
    auto bits = std::bit_cast<std::uint32_t>(t[i]);
    for (int b = 0; b < 4; ++b) out[static_cast<std::size_t>(4 * i + b)] = static_cast<std::uint8_t>(bits >> (8 * b));
  }
  return out;
}

Tensorf decode_f32_blob(ByteView bytes, const Tensorf::Shape& shape) {
  Tensorf t(shape);
  if (bytes.size() != static_cast<std::size_t>(t.size()) * 4)
    fail(ErrorCode::truncated_data, "activation blob size does not match its manifest shape");
  for (Index i = 0; i < t.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= std::uint32_t{bytes[static_cast<std::size_t>(4 * i + b)]} << (8 * b);
    t[i] = std::bit_cast<float>(bits);
  }
  return t;
}

VggManifest parse_manifest(const std::string& json_text) {
  VggManifest m;
  try {
    const json j = json::parse(json_text);
    m.crc32 = j.at("crc32").get<std::uint32_t>();
    for (const auto& l : j.at("layers")) m.layers.push_back({l.at("name"), l.at("shape").get<Tensorf::Shape>()});
    if (j.contains("preprocessing")) {
      m.preproc.mean = j["preprocessing"].at("mean").get<std::array<double, 3>>();
      m.preproc.std = j["preprocessing"].at("std").get<std::array<double, 3>>();
    }
    for (const auto& f : j.value("fixtures", json::array())) {
      ParityFixture fixture;
      fixture.name = f.at("name");
      fixture.input = f.at("input");
      fixture.tolerance = f.value("tolerance", 1e-4);
      for (const auto& a : f.at("activations"))
        fixture.activations.push_back({a.at("layer"), a.at("file"), a.at("shape").get<Tensorf::Shape>()});
      m.fixtures.push_back(std::move(fixture));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::malformed_header, std::string("invalid weight manifest: ") + e.what());
  }
  return m;
}

std::string manifest_to_json(const VggManifest& m) {
  json j;
  j["format"] = "FCMW";
  j["version"] = kFcmwVersion;
  j["crc32"] = m.crc32;
  j["layers"] = json::array();
  for (const auto& l : m.layers) j["layers"].push_back({{"name", l.name}, {"shape", l.shape}});
  j["preprocessing"] = {{"mean", m.preproc.mean}, {"std", m.preproc.std}, {"order", "RGB"}, {"range", {0.0, 1.0}}};
  j["fixtures"] = json::array();
  for (const auto& f : m.fixtures) {
    json fj = {{"name", f.name}, {"input", f.input}, {"tolerance", f.tolerance}, {"activations", json::array()}};
    for (const auto& a : f.activations)
      fj["activations"].push_back({{"layer", a.layer}, {"file", a.file}, {"shape", a.shape}});
    j["fixtures"].push_back(std::move(fj));
  }
  return j.dump(2);
}

void verify_manifest(const VggManifest& manifest, ByteView weight_bytes, const VggWeights<float>& weights) {
  if (crc32_of(weight_bytes.first(weight_bytes.size() - 4)) != manifest.crc32)
    fail(ErrorCode::manifest_mismatch, "weight file CRC does not match the manifest");
  if (static_cast<int>(manifest.layers.size()) != weights.layer_count())
    fail(ErrorCode::manifest_mismatch, "manifest layer count differs from the weight file");
  for (std::size_t i = 0; i < manifest.layers.size(); ++i)
    if (manifest.layers[i].name != kVggLayerNames[i] || manifest.layers[i].shape != weights.layers[i].weight.shape())
      fail(ErrorCode::manifest_mismatch, "manifest layer '" + manifest.layers[i].name + "' disagrees with the weights");
  for (int c = 0; c < 3; ++c)
    if (std::abs(manifest.preproc.mean[c] - weights.preproc.mean[c]) > 1e-7 ||
        std::abs(manifest.preproc.std[c] - weights.preproc.std[c]) > 1e-7)
      fail(ErrorCode::manifest_mismatch, "manifest preprocessing constants differ from the engine's");
}

std::vector<ParityResult> check_parity(const VggManifest& manifest, const VggWeights<float>& weights,
                                       const std::filesystem::path& fixture_dir) {
  std::vector<ParityResult> results;
  for (const auto& fixture : manifest.fixtures) {
    const HdrImage input = read_pfm(read_file(fixture_dir / fixture.input));
    const Tensorf image = to_tensor<float>(input);
    const auto acts = vgg_forward(image, weights, static_cast<int>(fixture.activations.size()));
    for (std::size_t i = 0; i < fixture.activations.size(); ++i) {
      const auto& ref = fixture.activations[i];
      const Tensorf expected = decode_f32_blob(read_file(fixture_dir / ref.file), ref.shape);
      ParityResult r{fixture.name, ref.layer, 0.0, fixture.tolerance};
      if (!expected.same_shape(acts.features[i]))
        fail(ErrorCode::manifest_mismatch, "fixture '" + ref.file + "' has the wrong shape");
      r.max_abs_error = (expected.values() - acts.features[i].values()).abs().maxCoeff();
      results.push_back(r);
    }
  }
  return results;
}

Tensorf vgg_test_card(int size) {
  Tensorf card({3, size, size});
  const float denom = static_cast<float>(std::max(1, size - 1));
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      card(0, y, x) = static_cast<float>(x) / denom;
      card(1, y, x) = static_cast<float>(y) / denom;
      card(2, y, x) = ((x / 8 + y / 8) % 2) ? 0.8f : 0.2f;
    }
  return card;
}

VggManifest write_reference_fixtures(const VggWeights<float>& weights, ByteView weight_bytes,
                                     const std::filesystem::path& dir, const std::string& stem) {
  VggManifest manifest;
  manifest.crc32 = crc32_of(weight_bytes.first(weight_bytes.size() - 4));
  manifest.preproc = weights.preproc;
  for (int i = 0; i < weights.layer_count(); ++i)
    manifest.layers.push_back({kVggLayerNames[static_cast<std::size_t>(i)], weights.layers[static_cast<std::size_t>(i)].weight.shape()});

  const std::pair<std::string, Tensorf> inputs[] = {{"test_card", vgg_test_card(32)},
                                                    {"zero", Tensorf({3, 32, 32})}};
  for (const auto& [name, image] : inputs) {
    ParityFixture fixture;
    fixture.name = name;
    fixture.input = stem + "." + name + ".pfm";
    write_file(dir / fixture.input, write_pfm(to_raster<HdrTag>(image)));
    const auto acts = vgg_forward(image, weights, weights.layer_count());
    for (int i = 0; i < weights.layer_count(); ++i) {
      const auto& layer = kVggLayerNames[static_cast<std::size_t>(i)];
      const std::string file = stem + "." + name + "." + layer + ".f32";
      write_file(dir / file, encode_f32_blob(acts.features[static_cast<std::size_t>(i)]));
      fixture.activations.push_back({layer, file, acts.features[static_cast<std::size_t>(i)].shape()});
    }
    manifest.fixtures.push_back(std::move(fixture));
  }
  return manifest;
}

}  // namespace fcmtm
