// Acceptance checks. Prints one PASS/FAIL line per criterion; the exit
// status is nonzero when any asserted criterion fails.
//
//   fcmtm_acceptance            run every criterion
//   fcmtm_acceptance 4          run criterion 4 only

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <string>
#include <vector>

#include "fcmtm/exposure.hpp"
#include "fcmtm/fcm_loss.hpp"
#include "fcmtm/gradcheck_suite.hpp"
#include "fcmtm/hdr_io.hpp"
#include "fcmtm/random.hpp"
#include "fcmtm/threading.hpp"
#include "fcmtm/tm_network.hpp"
#include "fcmtm/trainer.hpp"

using namespace fcmtm;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool passed = false;
  std::string detail;
  bool asserted = true;  ///< reported-only criteria do not affect the exit status
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

const VggWeights<float>& vgg() {
  static const VggWeights<float> w = load_vgg_weights(save_vgg_weights(random_vgg_weights(42)));
  return w;
}

// 64x64, left half 0.001 and right half 10.0: four orders of magnitude.
HdrImage training_fixture() {
  HdrImage img(64, 64);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = x < 32 ? 0.001f : 10.0f;
  return img;
}

TrainConfig training_config() {
  TrainConfig cfg;
  cfg.epochs = 100;
  cfg.seed = 7;
  return cfg;
}

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  int failed = 0;
  std::string first_failure;
  const auto results = run_gradcheck_suite({}, [&](const GradcheckResult& r) {
    if (!r.passed()) {
      if (failed++ == 0) first_failure = r.name;
    }
  });
  const double secs = seconds_since(t0);
  Outcome o;
  o.passed = failed == 0 && !results.empty() && secs < 60.0;
  o.detail = fmt("%zu checks, %d failed, %.1f s", results.size(), failed, secs);
  if (failed) o.detail += ", first failure " + first_failure;
  return o;
}

Outcome adaptive_mu_law() {
  const double mu1 = adaptive_mu(1.0), mu_half = adaptive_mu(0.5);
  bool ok = mu1 == 8.9084 && std::abs(mu_half - 2.6024) <= 1e-3;
  bool monotone = true;
  for (double mu : {1e-3, mu_half, mu1, 75.56, 1e4}) {
    ok = ok && mu_law(0.0, mu) == 0.0 && mu_law(1.0, mu) == 1.0;
    double prev = -1.0;
    for (int i = 0; i < 1000; ++i) {
      const double v = mu_law(i / 999.0, mu);
      monotone = monotone && v > prev;
      prev = v;
    }
  }
  return {ok && monotone, fmt("mu(1)=%.4f mu(0.5)=%.6f monotone=%s", mu1, mu_half, monotone ? "yes" : "no")};
}

Outcome sinusoid_ordering() {
  const auto t0 = Clock::now();
  const std::array<double, 3> contrasts = {0.05, 0.15, 0.35};
  const auto p = sinusoid_penalty_probe<float>(contrasts, 0.05, FcmConfig{}, vgg());
  const double secs = seconds_since(t0);
  const bool ordered = p.fcm_deltas[0] > p.fcm_deltas[1] && p.fcm_deltas[1] > p.fcm_deltas[2];
  return {ordered && secs < 30.0,
          fmt("fcm %.5f > %.5f > %.5f; plain %.5f %.5f %.5f; %.1f s", p.fcm_deltas[0], p.fcm_deltas[1],
              p.fcm_deltas[2], p.vgg_deltas[0], p.vgg_deltas[1], p.vgg_deltas[2], secs)};
}

Outcome end_to_end_training() {
  set_thread_count(1);
  const HdrImage src = training_fixture();
  const auto a = train(src, training_config(), vgg());
  const auto b = train(src, training_config(), vgg());
  set_thread_count(0);

  const auto& r = a.report;
  if (r.diverged) return {false, "diverged: " + r.divergence_message};
  const double first = r.loss_trace.front();
  const double ratio = r.final_loss / first;
  const bool inside = (a.image.data > 0.0f).all() && (a.image.data < 1.0f).all();
  const bool deterministic = a.image == b.image && a.report.loss_trace == b.report.loss_trace;
  const bool fast = r.seconds < 300.0;
  return {ratio <= 0.5 && inside && deterministic && fast,
          fmt("epoch-1 loss %.6f, final %.6f, ratio %.3f (need <= 0.5), inside (0,1) %s, deterministic %s, %.1f s",
              first, r.final_loss, ratio, inside ? "yes" : "no", deterministic ? "yes" : "no", r.seconds)};
}

Outcome network_structure() {
  const Index count = TmParams<float>::zeros().parameter_count();
  Index arithmetic = 0;
  const std::array<std::array<Index, 2>, 8> layers = {
      {{3, 16}, {16, 32}, {32, 64}, {192, 192}, {192, 192}, {192, 32}, {32, 16}, {16, 3}}};
  for (const auto& [in, out] : layers) arithmetic += in * out * 9 + out;

  const auto zero = TmParams<double>::zeros();
  SplitMix64 rng(5);
  Exposures<double> ex;
  for (auto& e : ex) {
    e = Tensord({3, 9, 13});
    for (Index i = 0; i < e.size(); ++i) e[i] = rng.uniform();
  }
  const auto out = tm_forward(ex, zero).output;
  bool exact = true;
  for (Index i = 0; i < out.size(); ++i) exact = exact && out[i] == sigmoid((ex[0][i] + ex[1][i] + ex[2][i]) / 3.0);
  return {count == arithmetic && exact,
          fmt("%ld parameters (layer arithmetic %ld; published figure 747887), zero-weight residual exact %s",
              static_cast<long>(count), static_cast<long>(arithmetic), exact ? "yes" : "no")};
}

Outcome masking_invariants() {
  const auto t0 = Clock::now();
  bool mn_ok = true, bound_ok = true, flat_ok = true;
  double equivalence = 0.0;
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    SplitMix64 rng(seed);
    Tensord f({4, 40, 40});
    for (Index c = 0; c < 4; ++c)
      for (Index y = 0; y < 40; ++y)
        for (Index x = 0; x < 40; ++x) f(c, y, x) = x < 20 ? std::max(0.0, rng.symmetric(1.0) + 0.5) : 0.25 * (c + 1);
    for (double alpha : {0.5, 1.0}) {
      const auto m = contrast_maps(f, alpha, FcmConfig{});
      mn_ok = mn_ok && (m.neighborhood_mask.values() >= 0.0).all();
      bound_ok = bound_ok && (m.masked.values().abs() <= m.self_mask.values().abs()).all();
      for (Index c = 0; c < 4; ++c)
        for (Index y = 6; y < 34; ++y)
          for (Index x = 26; x < 34; ++x) flat_ok = flat_ok && m.masked(c, y, x) == m.self_mask(c, y, x);
    }
    FcmConfig plain;
    plain.alpha_hdr = plain.alpha_tm = 1.0;
    plain.neighborhood_masking = false;
    Tensord g({4, 40, 40});
    for (Index i = 0; i < g.size(); ++i) g[i] = rng.uniform() + 0.05;
    const double loss = fcm_loss<double>({g}, {f}, plain, false).value;
    const double l1 = (feature_contrast(f, plain).values() - feature_contrast(g, plain).values()).abs().mean();
    equivalence = std::max(equivalence, std::abs(loss - l1));
  }
  const double secs = seconds_since(t0);
  return {mn_ok && bound_ok && flat_ok && equivalence <= 1e-6 && secs < 10.0,
          fmt("Mn>=0 %s, |f|<=|Ms| %s, flat f=Ms %s, alpha=1 L1 gap %.2e, %.1f s", mn_ok ? "yes" : "no",
              bound_ok ? "yes" : "no", flat_ok ? "yes" : "no", equivalence, secs)};
}

Outcome codec_round_trips() {
  SplitMix64 rng(11);
  bool pfm_ok = true, rgbe_ok = true, ppm_ok = true;
  for (int trial = 0; trial < 8; ++trial) {
    HdrImage img(13 + trial, 7 + trial);
    for (Index i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<float>(std::exp(rng.symmetric(25.0)));
    img.data[0] = 0.0f;
    pfm_ok = pfm_ok && read_pfm(write_pfm(img)) == img;
    const HdrImage back = read_radiance(write_radiance(img));
    for (Index p = 0; p < img.pixel_count(); ++p) {
      const auto q = encode_rgbe(img.data[3 * p], img.data[3 * p + 1], img.data[3 * p + 2]);
      const double half_step = 0.5 * std::ldexp(1.0, int{q[3]} - 136);
      for (int c = 0; c < 3; ++c)
        rgbe_ok = rgbe_ok && std::abs(double{back.data[3 * p + c]} - double{img.data[3 * p + c]}) <= half_step;
    }
  }
  for (double gamma : {1.0, 2.2}) {
    std::uint8_t prev = 0;
    for (int i = 0; i <= 100000; ++i) {
      const std::uint8_t q = quantize_component(static_cast<float>(i / 100000.0), gamma);
      ppm_ok = ppm_ok && q >= prev;
      prev = q;
    }
    ppm_ok = ppm_ok && prev == 255 && quantize_component(0.0f, gamma) == 0;
  }
  return {pfm_ok && rgbe_ok && ppm_ok, fmt("pfm bit-exact %s, rgbe within half step %s, ppm monotone %s",
                                           pfm_ok ? "yes" : "no", rgbe_ok ? "yes" : "no", ppm_ok ? "yes" : "no")};
}

Outcome ablation_directionality() {
  const HdrImage src = training_fixture();
  struct Variant {
    const char* name;
    std::function<void(TrainConfig&)> apply;
  };
  const std::vector<Variant> variants = {
      {"default", [](TrainConfig&) {}},
      {"plain-vgg", [](TrainConfig& c) { c.loss_mode = LossMode::plain_vgg; }},
      {"linear", [](TrainConfig& c) { c.input_mode = InputMode::single_linear; }},
      {"log", [](TrainConfig& c) { c.input_mode = InputMode::single_log; }},
  };
  std::vector<double> losses;
  std::string detail;
  for (const auto& v : variants) {
    TrainConfig cfg = training_config();
    v.apply(cfg);
    const auto r = train(src, cfg, vgg());
    losses.push_back(r.report.final_fcm_loss);
    detail += fmt("%s%s %.6f", detail.empty() ? "" : ", ", v.name, r.report.final_fcm_loss);
  }
  bool best = true;
  for (std::size_t i = 1; i < losses.size(); ++i) best = best && losses[0] <= losses[i];
  return {best, detail + " (reported, not asserted)", false};
}

struct Criterion {
  int id;
  const char* title;
  Outcome (*run)();
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "gradient suite", gradient_suite},
      {2, "adaptive mu-law", adaptive_mu_law},
      {3, "sinusoid penalty ordering", sinusoid_ordering},
      {4, "end-to-end training", end_to_end_training},
      {5, "network structure", network_structure},
      {6, "masking invariants", masking_invariants},
      {7, "codec round trips", codec_round_trips},
      {9, "ablation directionality", ablation_directionality},
  };
  const int only = argc > 1 ? std::atoi(argv[1]) : 0;
  int failures = 0, ran = 0;
  for (const auto& c : criteria) {
    if (only != 0 && c.id != only) continue;
    ++ran;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("criterion %d %-28s %s  %s\n", c.id, c.title, o.passed ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    if (!o.passed && o.asserted) ++failures;
  }
  if (ran == 0) {
    std::fprintf(stderr, "unknown criterion %s\n", argv[1]);
    return 2;
  }
  return failures == 0 ? 0 : 1;
}
