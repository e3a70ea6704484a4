#include "doctest.h"
#include "support.hpp"

#include <fstream>

#include "fcmtm/vgg.hpp"

using namespace fcmtm;
using namespace fcmtm::test;

namespace {

VggWeights<float> identity_prefix() {
  VggWeights<float> w;
  w.preproc.mean = {0.0, 0.0, 0.0};
  w.preproc.std = {1.0, 1.0, 1.0};
  for (const auto& [in, out] : kVggLayerChannels) {
    ConvParams<float> layer(in, out);
    for (Index c = 0; c < std::min(in, out); ++c) layer.weight(c, c, 1, 1) = 1.0f;
    w.layers.push_back(std::move(layer));
  }
  return w;
}

}  // namespace

TEST_SUITE("vgg_features") {
  TEST_CASE("crc32 check value") {
    CHECK(crc32_of(bytes_of("123456789")) == 0xCBF43926u);
    CHECK(crc32_of(Bytes{}) == 0u);
  }

  TEST_CASE("fcmw round trip") {
    const auto weights = random_vgg_weights(3);
    const Bytes bytes = save_vgg_weights(weights);
    const auto back = load_vgg_weights(bytes);
    REQUIRE(back.layer_count() == 3);
    for (int l = 0; l < 3; ++l) {
      CHECK((back.layers[l].weight.values() == weights.layers[l].weight.values()).all());
      CHECK((back.layers[l].bias.values() == weights.layers[l].bias.values()).all());
    }
    CHECK(save_vgg_weights(back) == bytes);
  }

  TEST_CASE("fcmw header layout") {
    const Bytes bytes = save_vgg_weights(random_vgg_weights(1, 1));
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "FCMW");
    CHECK(bytes[4] == 1);
    CHECK(bytes[5] == 0);
    CHECK(bytes[6] == 1);
    const std::size_t expected = 4 + 2 + 2 + 2 + 7 + 16 + 4 * (64 * 3 * 9 + 64) + 4;
    CHECK(bytes.size() == expected);
  }

  TEST_CASE("fcmw corruption is detected") {
    const Bytes good = save_vgg_weights(random_vgg_weights(2, 2));
    Bytes crc = good;
    crc.back() ^= 0x01;
    CHECK(error_code_of([&] { load_vgg_weights(crc); }) == ErrorCode::checksum_mismatch);
    Bytes payload = good;
    payload[100] ^= 0x40;
    CHECK(error_code_of([&] { load_vgg_weights(payload); }) == ErrorCode::checksum_mismatch);
    Bytes magic = good;
    magic[0] = 'X';
    CHECK(error_code_of([&] { load_vgg_weights(magic); }) == ErrorCode::bad_magic);
    Bytes version = good;
    version[4] = 2;
    CHECK(error_code_of([&] { load_vgg_weights(version); }) == ErrorCode::version_mismatch);
    const Bytes cut(good.begin(), good.begin() + static_cast<long>(good.size() / 2));
    CHECK(error_code_of([&] { load_vgg_weights(cut); }) == ErrorCode::truncated_data);
  }

  TEST_CASE("layer names and shapes are validated") {
    auto records = vgg_to_records(random_vgg_weights(4, 2));
    records[1].name = "conv9_9";
    CHECK(error_code_of([&] { vgg_from_records(records); }) == ErrorCode::layer_mismatch);
    auto wrong = vgg_to_records(random_vgg_weights(4, 1));
    wrong[0].weight = Tensorf({64, 3, 5, 5});
    CHECK(error_code_of([&] { vgg_from_records(wrong); }) == ErrorCode::layer_mismatch);
    CHECK(error_code_of([] { vgg_from_records({}); }) == ErrorCode::layer_mismatch);
  }

  TEST_CASE("activation shapes") {
    const auto w = random_vgg_weights(5);
    const auto acts = vgg_forward(random_tensor<float>({3, 10, 14}, 1, 0.0, 1.0), w, 3);
    REQUIRE(acts.features.size() == 3);
    CHECK(acts.features[0].shape() == Tensorf::Shape{64, 10, 14});
    CHECK(acts.features[1].shape() == Tensorf::Shape{64, 10, 14});
    CHECK(acts.pooled.shape() == Tensorf::Shape{64, 5, 7});
    CHECK(acts.features[2].shape() == Tensorf::Shape{128, 5, 7});
    CHECK((acts.features[2].values() >= 0.0f).all());
    CHECK(vgg_forward(random_tensor<float>({3, 7, 9}, 1, 0.0, 1.0), w, 3).features[2].shape() ==
          Tensorf::Shape{128, 3, 4});
    CHECK(vgg_forward(random_tensor<float>({3, 4, 4}, 1, 0.0, 1.0), w, 1).features.size() == 1);
  }

  TEST_CASE("forward rejects bad input") {
    const auto w = random_vgg_weights(5, 2);
    CHECK(error_code_of([&] { vgg_forward(Tensorf::constant({3, 4, 4}, 1.5f), w, 1); }) == ErrorCode::invalid_argument);
    CHECK(error_code_of([&] { vgg_forward(Tensorf({1, 4, 4}), w, 1); }) == ErrorCode::shape_mismatch);
    CHECK(error_code_of([&] { vgg_forward(Tensorf({3, 4, 4}), w, 3); }) == ErrorCode::invalid_argument);
  }

  TEST_CASE("identity prefix passes the image through") {
    const auto w = identity_prefix();
    const Tensorf img = random_tensor<float>({3, 6, 8}, 7, 0.0, 1.0);
    const auto acts = vgg_forward(img, w, 3);
    for (Index c = 0; c < 3; ++c) {
      CHECK((acts.features[0].plane(c).array() == img.plane(c).array()).all());
      CHECK((acts.features[1].plane(c).array() == img.plane(c).array()).all());
      for (Index y = 0; y < 3; ++y)
        for (Index x = 0; x < 4; ++x) {
          const float m = std::max({img(c, 2 * y, 2 * x), img(c, 2 * y, 2 * x + 1), img(c, 2 * y + 1, 2 * x),
                                    img(c, 2 * y + 1, 2 * x + 1)});
          CHECK(acts.features[2](c, y, x) == m);
        }
    }
    CHECK(acts.features[0].plane(5).isZero());
  }

  TEST_CASE("zero upstream gives zero image gradient") {
    const auto w = random_vgg_weights(6).cast<double>();
    const auto acts = vgg_forward(random_tensor<double>({3, 8, 8}, 2, 0.0, 1.0), w, 3);
    std::vector<Tensord> grads;
    for (const auto& f : acts.features) grads.push_back(Tensord::zeros_like(f));
    const Tensord g = vgg_backward(grads, acts, w);
    CHECK(g.shape() == Tensord::Shape{3, 8, 8});
    CHECK(g.values().isZero());
  }

  TEST_CASE("float blobs round trip") {
    const Tensorf t = random_tensor<float>({2, 3, 5}, 9);
    const Bytes blob = encode_f32_blob(t);
    CHECK(blob.size() == 4 * 30);
    CHECK((decode_f32_blob(blob, t.shape()).values() == t.values()).all());
    CHECK(error_code_of([&] { decode_f32_blob(blob, {2, 3, 6}); }) == ErrorCode::truncated_data);
  }

  TEST_CASE("test card") {
    const Tensorf card = vgg_test_card();
    CHECK(card.shape() == Tensorf::Shape{3, 32, 32});
    CHECK(card(0, 5, 0) < card(0, 5, 31));
    CHECK(card(1, 0, 5) < card(1, 31, 5));
    CHECK(card(2, 0, 0) != card(2, 0, 8));
    CHECK((card.values() >= 0.0f).all());
    CHECK((card.values() <= 1.0f).all());
  }

  TEST_CASE("manifest and parity fixtures round trip") {
    const auto dir = scratch_dir("vgg_fixtures");
    const auto weights = random_vgg_weights(8);
    const Bytes bytes = save_vgg_weights(weights);
    const VggManifest written = write_reference_fixtures(weights, bytes, dir, "w");
    const VggManifest manifest = parse_manifest(manifest_to_json(written));
    CHECK(manifest.crc32 == crc32_of(ByteView(bytes).first(bytes.size() - 4)));
    CHECK(manifest.layers.size() == 3);
    CHECK_FALSE(manifest.fixtures.empty());
    verify_manifest(manifest, bytes, weights);
    const auto results = check_parity(manifest, weights, dir);
    CHECK_FALSE(results.empty());
    for (const auto& r : results) CHECK(r.passed());

    VggManifest wrong_crc = manifest;
    wrong_crc.crc32 ^= 1u;
    CHECK(error_code_of([&] { verify_manifest(wrong_crc, bytes, weights); }) == ErrorCode::manifest_mismatch);
    VggManifest wrong_pre = manifest;
    wrong_pre.preproc.mean[0] = 0.5;
    CHECK(error_code_of([&] { verify_manifest(wrong_pre, bytes, weights); }) == ErrorCode::manifest_mismatch);
    CHECK(error_code_of([] { parse_manifest("{not json"); }) == ErrorCode::malformed_header);

    const auto other = random_vgg_weights(9);
    bool any_failed = false;
    for (const auto& r : check_parity(manifest, other, dir)) any_failed = any_failed || !r.passed();
    CHECK(any_failed);
  }

  TEST_CASE("weight file on disk") {
    const auto dir = scratch_dir("vgg_file");
    const auto w = random_vgg_weights(10, 2);
    write_file(dir / "w.fcmw", save_vgg_weights(w));
    CHECK(load_vgg_weights_file(dir / "w.fcmw").layer_count() == 2);
    CHECK(error_code_of([&] { load_vgg_weights_file(dir / "missing.fcmw"); }) == ErrorCode::io_failure);
  }
}
