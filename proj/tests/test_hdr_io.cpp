#include "doctest.h"
#include "support.hpp"

#include <cmath>

#include "fcmtm/hdr_io.hpp"

using namespace fcmtm;
using namespace fcmtm::test;

namespace {

Bytes radiance_header(const std::string& resolution) {
  return bytes_of("#?RADIANCE\nFORMAT=32-bit_rle_rgbe\nEXPOSURE=2.0\n\n" + resolution + "\n");
}

Bytes pfm_1x1(const std::string& scale, bool big_endian, float r, float g, float b) {
  Bytes out = bytes_of("PF\n1 1\n" + scale + "\n");
  for (float v : {r, g, b}) big_endian ? append_f32_be(out, v) : append_f32_le(out, v);
  return out;
}

}  // namespace

TEST_SUITE("hdr_io") {
  TEST_CASE("rgbe decode at the unit point and the zero exponent") {
    const auto one = decode_rgbe({128, 0, 0, 129});
    CHECK(one[0] == 1.0f);
    CHECK(one[1] == 0.0f);
    CHECK(one[2] == 0.0f);
    const auto zero = decode_rgbe({0, 0, 0, 0});
    CHECK(zero == std::array<float, 3>{0.0f, 0.0f, 0.0f});
    CHECK(decode_rgbe({200, 7, 9, 0}) == std::array<float, 3>{0.0f, 0.0f, 0.0f});
  }

  TEST_CASE("2x2 uncompressed radiance fixture") {
    Bytes file = radiance_header("-Y 2 +X 2");
    const std::uint8_t quads[4][4] = {{64, 128, 255, 130}, {10, 20, 30, 120}, {200, 100, 50, 136}, {1, 2, 3, 140}};
    for (const auto& q : quads) file.insert(file.end(), q, q + 4);
    const HdrImage img = read_radiance(file);
    REQUIRE(img.width == 2);
    REQUIRE(img.height == 2);
    // m * 2^(e - 136), evaluated by hand
    const float expected[4][3] = {{1.0f, 2.0f, 3.984375f},
                                  {10.0f / 65536.0f, 20.0f / 65536.0f, 30.0f / 65536.0f},
                                  {200.0f, 100.0f, 50.0f},
                                  {16.0f, 32.0f, 48.0f}};
    for (int p = 0; p < 4; ++p)
      for (int c = 0; c < 3; ++c) CHECK(img.at(p % 2, p / 2, c) == expected[p][c]);
  }

  TEST_CASE("old-style run length scanline") {
    Bytes file = radiance_header("-Y 1 +X 5");
    const std::uint8_t quads[3][4] = {{128, 64, 32, 129}, {1, 1, 1, 3}, {0, 0, 0, 0}};
    for (const auto& q : quads) file.insert(file.end(), q, q + 4);
    const HdrImage img = read_radiance(file);
    for (int x = 0; x < 4; ++x) {
      CHECK(img.at(x, 0, 0) == 1.0f);
      CHECK(img.at(x, 0, 1) == 0.5f);
      CHECK(img.at(x, 0, 2) == 0.25f);
    }
    CHECK(img.at(4, 0, 0) == 0.0f);
  }

  TEST_CASE("new-style run length round trip") {
    HdrImage img = random_hdr(37, 5, 11, 0.0, 50.0);
    for (int x = 10; x < 30; ++x)
      for (int c = 0; c < 3; ++c) img.at(x, 2, c) = 4.0f;  // long runs
    const HdrImage rle = read_radiance(write_radiance(img, true));
    const HdrImage flat = read_radiance(write_radiance(img, false));
    CHECK(rle == flat);
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        const auto q = encode_rgbe(img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2));
        const auto d = decode_rgbe(q);
        for (int c = 0; c < 3; ++c) CHECK(rle.at(x, y, c) == d[static_cast<std::size_t>(c)]);
      }
  }

  TEST_CASE("radiance errors are distinct") {
    CHECK(error_code_of([] { read_radiance(bytes_of("P6\n1 1\n255\n")); }) == ErrorCode::malformed_header);
    Bytes flipped = radiance_header("+Y 1 +X 1");
    flipped.insert(flipped.end(), {128, 0, 0, 129});
    CHECK(error_code_of([&] { read_radiance(flipped); }) == ErrorCode::unsupported_orientation);
    Bytes truncated = radiance_header("-Y 2 +X 2");
    truncated.insert(truncated.end(), {128, 0, 0, 129, 128, 0});
    CHECK(error_code_of([&] { read_radiance(truncated); }) == ErrorCode::truncated_data);
    Bytes xyze = bytes_of("#?RADIANCE\nFORMAT=32-bit_rle_xyze\n\n-Y 1 +X 1\n");
    xyze.insert(xyze.end(), {128, 0, 0, 129});
    CHECK(error_code_of([&] { read_radiance(xyze); }) == ErrorCode::unsupported_format);
  }

  TEST_CASE("rgbe quantization bound") {
    SplitMix64 rng(5);
    for (int i = 0; i < 2000; ++i) {
      const float v[3] = {static_cast<float>(std::exp(rng.symmetric(20.0))), static_cast<float>(rng.uniform() * 3.0),
                          static_cast<float>(std::exp(rng.symmetric(5.0)))};
      const auto q = encode_rgbe(v[0], v[1], v[2]);
      const auto d = decode_rgbe(q);
      const double half_step = 0.5 * std::ldexp(1.0, int{q[3]} - 136);
      for (int c = 0; c < 3; ++c) CHECK(std::abs(double{d[c]} - double{v[c]}) <= half_step);
      // decoded values are fixed points of the codec
      CHECK(encode_rgbe(d[0], d[1], d[2]) == q);
    }
  }

  TEST_CASE("pfm fixtures") {
    const HdrImage a = read_pfm(pfm_1x1("-1.0", false, 0.5f, 0.25f, 0.125f));
    CHECK(a.at(0, 0, 0) == 0.5f);
    CHECK(a.at(0, 0, 1) == 0.25f);
    CHECK(a.at(0, 0, 2) == 0.125f);
    const HdrImage b = read_pfm(pfm_1x1("-2.0", false, 0.5f, 0.25f, 0.125f));
    CHECK(b.at(0, 0, 0) == 1.0f);
    CHECK(b.at(0, 0, 1) == 0.5f);
    CHECK(b.at(0, 0, 2) == 0.25f);
    const HdrImage c = read_pfm(pfm_1x1("1.0", true, 0.5f, 0.25f, 0.125f));
    CHECK(c == a);
  }

  TEST_CASE("pfm rows are stored bottom first") {
    Bytes file = bytes_of("PF\n1 2\n-1.0\n");
    for (float v : {1.0f, 1.0f, 1.0f, 2.0f, 2.0f, 2.0f}) append_f32_le(file, v);
    const HdrImage img = read_pfm(file);
    CHECK(img.at(0, 0, 0) == 2.0f);
    CHECK(img.at(0, 1, 0) == 1.0f);
  }

  TEST_CASE("pfm errors") {
    Bytes gray = bytes_of("Pf\n1 1\n-1.0\n");
    append_f32_le(gray, 0.5f);
    CHECK(error_code_of([&] { read_pfm(gray); }) == ErrorCode::grayscale_pfm);
    CHECK(error_code_of([&] { read_pfm(pfm_1x1("-1.0", false, 0.5f, std::nanf(""), 0.1f)); }) == ErrorCode::nan_payload);
    CHECK(error_code_of([&] { read_pfm(pfm_1x1("-1.0", false, -0.5f, 0.1f, 0.1f)); }) == ErrorCode::invalid_pixel);
    Bytes short_payload = bytes_of("PF\n2 2\n-1.0\n");
    append_f32_le(short_payload, 1.0f);
    CHECK(error_code_of([&] { read_pfm(short_payload); }) == ErrorCode::truncated_data);
  }

  TEST_CASE("pfm write-read is bit exact") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      HdrImage img = random_hdr(7 + static_cast<int>(seed), 3 + static_cast<int>(seed), seed, 0.0, 1e4);
      img.data[0] = 0.0f;
      img.data[1] = 1e-30f;
      CHECK(read_pfm(write_pfm(img)) == img);
    }
  }

  TEST_CASE("gray pfm round trip") {
    GrayMap map{3, 2, Eigen::ArrayXf::LinSpaced(6, -1.0f, 4.0f)};
    const GrayMap back = read_pfm_gray(write_pfm_gray(map));
    CHECK(back.width == 3);
    CHECK(back.height == 2);
    CHECK((back.data == map.data).all());
  }

  TEST_CASE("ppm quantization") {
    CHECK(quantize_component(1.0f, 1.0) == 255);
    CHECK(quantize_component(1.0f, 2.2) == 255);
    CHECK(quantize_component(1.0f, 0.4) == 255);
    CHECK(quantize_component(0.5f, 1.0) == 128);
    CHECK(quantize_component(0.5f, 2.2) == 186);  // 255 * 0.5^(1/2.2) = 186.08
    CHECK(quantize_component(-0.3f, 1.0) == 0);
    CHECK(quantize_component(7.0f, 1.0) == 255);

    LdrImage img(2, 1);
    img.data << 0.0f, 0.5f, 1.0f, 1.0f, 0.5f, 0.0f;
    const Bytes ppm = write_ppm(img, 1.0);
    const std::string header = "P6\n2 1\n255\n";
    REQUIRE(ppm.size() == header.size() + 6);
    CHECK(std::string(ppm.begin(), ppm.begin() + static_cast<long>(header.size())) == header);
    CHECK(ppm[header.size() + 1] == 128);
    CHECK(ppm.back() == 0);
    CHECK(error_code_of([&] { write_ppm(img, 0.0); }) == ErrorCode::invalid_argument);
  }

  TEST_CASE("ppm quantization is monotone") {
    for (double gamma : {0.5, 1.0, 1.8, 2.2, 3.0}) {
      std::uint8_t prev = 0;
      for (int i = 0; i <= 4000; ++i) {
        const std::uint8_t q = quantize_component(static_cast<float>(i / 4000.0), gamma);
        CHECK(q >= prev);
        prev = q;
      }
    }
  }

  TEST_CASE("file dispatch") {
    const auto dir = scratch_dir("hdr_io");
    const HdrImage img = random_hdr(9, 4, 3, 0.0, 2.0);
    write_file(dir / "a.pfm", write_pfm(img));
    write_file(dir / "a.hdr", write_radiance(img));
    write_file(dir / "a.txt", bytes_of("hello"));
    CHECK(read_hdr_file(dir / "a.pfm") == img);
    CHECK(read_hdr_file(dir / "a.hdr").width == 9);
    CHECK(error_code_of([&] { read_hdr_file(dir / "a.txt"); }) == ErrorCode::unsupported_format);
    CHECK(error_code_of([&] { read_hdr_file(dir / "missing.hdr"); }) == ErrorCode::io_failure);
  }
}
