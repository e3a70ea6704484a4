#include "doctest.h"
#include "support.hpp"

#include <cmath>
#include <vector>

#include "fcmtm/exposure.hpp"

using namespace fcmtm;
using namespace fcmtm::test;

namespace {

HdrImage constant_hdr(int w, int h, float v) {
  HdrImage img(w, h);
  img.data.setConstant(v);
  return img;
}

NormalizedHdr with_luminances(const std::vector<float>& ys) {
  NormalizedHdr n;
  n.image = HdrImage(static_cast<int>(ys.size()), 1);
  for (std::size_t i = 0; i < ys.size(); ++i)
    for (int c = 0; c < 3; ++c) n.image.at(static_cast<int>(i), 0, c) = ys[i];
  return n;
}

}  // namespace

TEST_SUITE("exposure") {
  TEST_CASE("normalize fixtures") {
    const NormalizedHdr a = normalize(constant_hdr(4, 3, 4.0f));
    CHECK((a.image.data == 0.5f).all());
    CHECK(a.median_intensity == 0.5);
    CHECK(a.original_mean == doctest::Approx(4.0));

    HdrImage half(4, 1);
    for (int x = 0; x < 4; ++x)
      for (int c = 0; c < 3; ++c) half.at(x, 0, c) = x < 2 ? 0.1f : 0.3f;
    const NormalizedHdr b = normalize(half);
    CHECK(b.original_mean == doctest::Approx(0.2));
    CHECK(b.image.at(0, 0, 0) == doctest::Approx(0.25));
    CHECK(b.image.at(3, 0, 2) == doctest::Approx(0.75));
    // lower median of an even sample
    CHECK(b.median_intensity == doctest::Approx(0.25));

    HdrImage one(1, 1);
    one.data << 1.0f, 2.0f, 6.0f;
    const NormalizedHdr c = normalize(one);
    CHECK(c.image.data.cast<double>().mean() == doctest::Approx(0.5));
    CHECK(c.image.data[2] == doctest::Approx(1.0));
  }

  TEST_CASE("normalize rejects degenerate input") {
    CHECK(error_code_of([] { normalize(constant_hdr(3, 3, 0.0f)); }) == ErrorCode::degenerate_input);
    HdrImage bad = constant_hdr(2, 2, 1.0f);
    bad.data[1] = -1.0f;
    CHECK(error_code_of([&] { normalize(bad); }) == ErrorCode::invalid_pixel);
  }

  TEST_CASE("normalize is idempotent under rescaling") {
    const NormalizedHdr a = normalize(random_hdr(8, 6, 11, 0.0, 300.0));
    for (float k : {0.001f, 1.0f, 37.0f}) {
      HdrImage scaled = a.image;
      scaled.data *= k;
      const NormalizedHdr b = normalize(scaled);
      CHECK(((b.image.data - a.image.data).abs() <= 1e-6f * a.image.data.abs().max(1e-6f)).all());
      CHECK(b.median_intensity == doctest::Approx(a.median_intensity).epsilon(1e-6));
    }
  }

  TEST_CASE("lower median and nearest rank") {
    const std::vector<float> odd = {5, 1, 3};
    const std::vector<float> even = {4, 1, 3, 2};
    CHECK(lower_median(odd) == 3.0);
    CHECK(lower_median(even) == 2.0);
    const std::vector<float> sorted = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    CHECK(nearest_rank(sorted, 0.05) == 1.0);
    CHECK(nearest_rank(sorted, 0.95) == 10.0);
    CHECK(nearest_rank(sorted, 0.5) == 5.0);
    CHECK(nearest_rank(sorted, 1.0) == 10.0);
  }

  TEST_CASE("adaptive mu fixtures") {
    CHECK(adaptive_mu(1.0) == 8.759 + 0.1494);
    CHECK(adaptive_mu(0.5) == doctest::Approx(2.602258557515695).epsilon(1e-12));
    CHECK(adaptive_mu(0.1) == doctest::Approx(17.494430870551675).epsilon(1e-12));
    CHECK(adaptive_mu(0.5) < adaptive_mu(0.1));
    CHECK(adaptive_mu(0.5) < adaptive_mu(1.0));
    CHECK(error_code_of([] { adaptive_mu(0.0); }) == ErrorCode::invalid_argument);
  }

  TEST_CASE("adaptive mu has a single interior minimum") {
    int sign_changes = 0;
    double prev = adaptive_mu(0.001), prev_slope = -1.0;
    for (int i = 2; i <= 1000; ++i) {
      const double mu = adaptive_mu(i / 1000.0);
      const double slope = mu - prev;
      if ((slope > 0) != (prev_slope > 0)) ++sign_changes;
      prev = mu;
      prev_slope = slope;
    }
    CHECK(sign_changes == 1);
  }

  TEST_CASE("mu law fixtures") {
    for (double mu : {1e-3, 1.0, 75.56, 5000.0}) {
      CHECK(mu_law(0.0, mu) == 0.0);
      CHECK(mu_law(1.0, mu) == 1.0);
    }
    CHECK(mu_law(0.1, 75.56) == doctest::Approx(0.4948353627684869).epsilon(1e-12));
    CHECK(std::abs(mu_law(0.37, 1e-6) - 0.37) < 1e-5);
    CHECK(mu_law(3.0, 10.0) == 1.0);
    CHECK(error_code_of([] { mu_law(0.5, 0.0); }) == ErrorCode::invalid_argument);
  }

  TEST_CASE("mu law is monotone in value and in mu") {
    for (double mu : {0.01, 1.0, 8.9084, 100.0}) {
      double prev = -1.0;
      for (int i = 0; i <= 1000; ++i) {
        const double v = mu_law(i / 1000.0, mu);
        CHECK(v > prev);
        prev = v;
      }
    }
    for (double v : {0.01, 0.3, 0.9}) CHECK(mu_law(v, 2.0) < mu_law(v, 20.0));
  }

  TEST_CASE("mu law image clamps above one") {
    NormalizedHdr n = with_luminances({0.0f, 0.5f, 4.0f});
    const LdrImage g = mu_law(n, 8.0);
    CHECK(g.at(0, 0, 0) == 0.0f);
    CHECK(g.at(1, 0, 1) == doctest::Approx(mu_law(0.5, 8.0)));
    CHECK(g.at(2, 0, 2) == 1.0f);
  }

  TEST_CASE("exposure selection collapses on a constant image") {
    CHECK(0.5 * std::log2(1.8) == doctest::Approx(0.42399845327747503));
    CHECK(0.5 * std::log2(0.2) == doctest::Approx(-1.1609640474436811));
    const ExposureStops s = select_exposures(normalize(constant_hdr(5, 5, 2.0f)));
    CHECK(s.low == doctest::Approx(-0.36848279708310305).epsilon(1e-12));
    CHECK(s.mid == s.low);
    CHECK(s.high == s.low);
  }

  TEST_CASE("exposure selection from constructed percentiles") {
    std::vector<float> ys(20, 0.5f);
    ys[0] = 0.0125f;
    ys[18] = 3.6f;
    ys[19] = 7.0f;
    const ExposureStops s = select_exposures(with_luminances(ys));
    CHECK(s.low == doctest::Approx(-1.0).epsilon(1e-6));
    CHECK(s.high == doctest::Approx(1.5).epsilon(1e-6));
    CHECK(s.mid == doctest::Approx(0.25).epsilon(1e-6));
  }

  TEST_CASE("zero luminance pixels are excluded") {
    std::vector<float> ys(20, 0.5f);
    ys[0] = 0.0125f;
    ys[18] = 3.6f;
    ys[19] = 7.0f;
    for (int i = 0; i < 10; ++i) ys.push_back(0.0f);
    const ExposureStops s = select_exposures(with_luminances(ys));
    CHECK(s.low == doctest::Approx(-1.0).epsilon(1e-6));
    CHECK(s.high == doctest::Approx(1.5).epsilon(1e-6));
  }

  TEST_CASE("scaling by four shifts the stops by one") {
    NormalizedHdr n;
    n.image = random_hdr(16, 16, 3, 0.0, 20.0);
    for (int i = 0; i < 40; ++i) n.image.data[i] *= 0.001f;
    const ExposureStops a = select_exposures(n);
    n.image.data *= 4.0f;
    const ExposureStops b = select_exposures(n);
    CHECK(a.low < a.high);
    CHECK(b.low == doctest::Approx(a.low - 1.0).epsilon(1e-9));
    CHECK(b.high == doctest::Approx(a.high - 1.0).epsilon(1e-9));
  }

  TEST_CASE("render exposure fixtures") {
    NormalizedHdr n = with_luminances({0.3f, 0.6f});
    CHECK(render_exposure(n, 0.0).at(0, 0, 0) == 0.3f);
    CHECK(render_exposure(n, 1.0).at(1, 0, 0) == 1.0f);
    CHECK(render_exposure(n, -2.0).at(1, 0, 1) == 0.15f);
  }

  TEST_CASE("render exposure composes before the clip") {
    NormalizedHdr n;
    n.image = random_hdr(6, 6, 9, 0.0, 3.0);
    const LdrImage once = render_exposure(n, -1.5);
    NormalizedHdr partial = n;
    partial.image.data *= std::exp2f(-0.5f);
    const LdrImage twice = render_exposure(partial, -1.0);
    CHECK(((once.data - twice.data).abs() < 1e-6f).all());
  }

  TEST_CASE("exposure set is ordered and in range") {
    const ExposureSet set = make_exposure_set(normalize(random_hdr(12, 10, 4, 0.0, 1000.0)));
    CHECK(set.stops.low <= set.stops.mid);
    CHECK(set.stops.mid <= set.stops.high);
    for (const auto& img : set.images) {
      CHECK(img.width == 12);
      CHECK((img.data >= 0.0f).all());
      CHECK((img.data <= 1.0f).all());
    }
    CHECK(set.images[0].data.sum() <= set.images[2].data.sum());
  }
}
