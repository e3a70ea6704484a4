#include "fcmtm/gradcheck_suite.hpp"

#include <sstream>

#include "fcmtm/fcm_loss.hpp"
#include "fcmtm/random.hpp"
#include "fcmtm/tm_network.hpp"

namespace fcmtm {
namespace {

using T = Tensord;

struct Shape3 {
  Index c, h, w;
};

std::string label(const std::string& op, const T::Shape& shape) {
  std::ostringstream os;
  os << op << " (";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ')';
  return os.str();
}

T uniform(T::Shape shape, SplitMix64& rng, double lo, double hi) {
  T t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t[i] = lo + (hi - lo) * rng.uniform();
  return t;
}

// Values in [-1, -margin] U [margin, 1], keeping every entry off a kink at 0.
T off_zero(T::Shape shape, SplitMix64& rng, double margin) {
  T t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) {
    const double u = rng.symmetric(1.0);
    t[i] = (u < 0 ? -1.0 : 1.0) * (margin + (1.0 - margin) * std::abs(u));
  }
  return t;
}

// Distinct values separated by more than the difference step, shuffled.
T distinct(T::Shape shape, SplitMix64& rng) {
  T t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t[i] = 0.01 * static_cast<double>(i);
  for (Index i = t.size() - 1; i > 0; --i) std::swap(t[i], t[static_cast<Index>(rng.next() % static_cast<std::uint64_t>(i + 1))]);
  return t;
}

double dot(const T& a, const T& b) { return (a.values() * b.values()).sum(); }

void append_mask(const T& t, std::vector<std::uint8_t>& pattern) {
  for (Index i = 0; i < t.size(); ++i) pattern.push_back(t[i] > 0.0);
}

void append_sign(const Eigen::ArrayXd& v, std::vector<std::uint8_t>& pattern) {
  for (Index i = 0; i < v.size(); ++i) pattern.push_back(static_cast<std::uint8_t>(v[i] > 0.0 ? 2 : v[i] < 0.0 ? 0 : 1));
}

void append_argmax(const T& t, std::vector<std::uint8_t>& pattern) {
  for (Index c = 0; c < t.channels(); ++c)
    for (Index y = 0; y < t.height() / 2; ++y)
      for (Index x = 0; x < t.width() / 2; ++x) {
        const Index first = (c * t.height() + 2 * y) * t.width() + 2 * x;
        const Index best = detail::argmax_2x2(t, c, y, x) - first;
        pattern.push_back(static_cast<std::uint8_t>(best == 0 ? 0 : best == 1 ? 1 : best == t.width() ? 2 : 3));
      }
}

using Pattern = std::function<void(const T&, const T&, std::vector<std::uint8_t>&)>;

class Suite {
 public:
  Suite(const GradcheckOptions& opts, const std::function<void(const GradcheckResult&)>& sink)
      : opts_(opts), sink_(sink), rng_(opts.seed) {}

  // `eval(x)` returns the scalar functional and its piece pattern;
  // `analytic` is the gradient at x.
  template <typename F>
  void check(const std::string& name, F&& eval, T& x, const Eigen::ArrayXd& analytic) {
    const auto candidates = probe_coordinates(x.size(), x.size(), rng_.next());
    const GuardedError e = guarded_gradient_error(eval, x, analytic, candidates, opts_.max_probes, opts_.step);
    GradcheckResult r;
    r.name = label(name, x.shape());
    r.tolerance = opts_.tolerance;
    r.probes = e.probes;
    r.skipped = e.skipped;
    r.max_rel_error = e.max_rel_error;
    if (sink_) sink_(r);
    results_.push_back(std::move(r));
  }

  // Checks a tensor-valued op through the probe <w, op(x)>.
  template <typename Fwd, typename Bwd>
  void check_map(const std::string& name, T x, Fwd&& fwd, Bwd&& bwd, const Pattern& pattern = {}) {
    const T y = fwd(x);
    const T w = uniform(y.shape(), rng_, -1.0, 1.0);
    const Eigen::ArrayXd analytic = bwd(x, y, w).values();
    check(
        name,
        [&](const T& v) {
          ProbeEval e;
          const T out = fwd(v);
          e.value = dot(w, out);
          if (pattern) pattern(v, out, e.pattern);
          return e;
        },
        x, analytic);
  }

  SplitMix64& rng() { return rng_; }
  std::vector<GradcheckResult> take() { return std::move(results_); }

 private:
  GradcheckOptions opts_;
  std::function<void(const GradcheckResult&)> sink_;
  SplitMix64 rng_;
  std::vector<GradcheckResult> results_;
};

template <typename F>
auto smooth(F&& f) {
  return [f = std::forward<F>(f)](const T& v) { return ProbeEval{f(v), {}}; };
}

ConvParams<double> random_conv(Index in, Index out, SplitMix64& rng) {
  ConvParams<double> p(in, out);
  p.weight = uniform(p.weight.shape(), rng, -0.5, 0.5);
  p.bias = uniform(p.bias.shape(), rng, -0.2, 0.2);
  return p;
}

// A layer whose pre-activations stay at least 0.2 away from the ReLU kink on
// every given input: biases are +-0.5 (one channel in four negative) and each
// kernel is rescaled so that max |W * x| = 0.3.
ConvParams<double> margin_conv(Index in, Index out, const std::vector<T>& inputs, SplitMix64& rng) {
  ConvParams<double> p(in, out);
  p.weight = uniform(p.weight.shape(), rng, -1.0, 1.0);
  for (Index o = 0; o < out; ++o) p.bias[o] = rng.uniform() < 0.25 ? -0.5 : 0.5;
  const ConvParams<double> unbiased(p.weight, T::zeros_like(p.bias));
  Eigen::ArrayXd peak = Eigen::ArrayXd::Zero(out);
  for (const T& x : inputs) {
    const T z = conv2d_forward(x, unbiased);
    peak = peak.max(z.matrix().array().abs().rowwise().maxCoeff());
  }
  auto w = p.weight.matrix();
  for (Index o = 0; o < out; ++o)
    if (peak[o] > 0.0) w.row(o) *= 0.3 / peak[o];
  return p;
}

std::vector<T> relu_conv_all(const std::vector<T>& inputs, const ConvParams<double>& p) {
  std::vector<T> out;
  for (const T& x : inputs) out.push_back(relu(conv2d_forward(x, p)));
  return out;
}

void conv_checks(Suite& s) {
  const std::array<std::array<Index, 4>, 3> cases = {{{2, 3, 5, 4}, {3, 2, 6, 6}, {1, 4, 7, 5}}};
  for (const auto& [in, out, h, w] : cases) {
    ConvParams<double> p = random_conv(in, out, s.rng());
    T x = uniform({in, h, w}, s.rng(), -1.0, 1.0);
    const T up = uniform({out, h, w}, s.rng(), -1.0, 1.0);
    const auto g = conv2d_backward(x, p, up);
    s.check("conv2d.input", smooth([&](const T& v) { return dot(up, conv2d_forward(v, p)); }), x, g.input.values());
    s.check("conv2d.weight",
            smooth([&](const T& v) { return dot(up, conv2d_forward(x, ConvParams<double>(v, p.bias))); }), p.weight,
            g.weight.values());
    s.check("conv2d.bias",
            smooth([&](const T& v) { return dot(up, conv2d_forward(x, ConvParams<double>(p.weight, v))); }), p.bias,
            g.bias.values());
  }
}

const std::array<Shape3, 3> kMapShapes = {{{2, 9, 11}, {1, 16, 16}, {3, 7, 20}}};

void elementwise_checks(Suite& s) {
  for (const auto& [c, h, w] : kMapShapes) {
    s.check_map(
        "relu", off_zero({c, h, w}, s.rng(), 0.05), [](const T& v) { return relu(v); },
        [](const T&, const T& y, const T& up) { return relu_backward(y, up); },
        [](const T& x, const T&, auto& pattern) { append_mask(x, pattern); });
    s.check_map("sigmoid", uniform({c, h, w}, s.rng(), -4.0, 4.0), [](const T& v) { return sigmoid(v); },
                [](const T&, const T& y, const T& up) { return sigmoid_backward(y, up); });
    const T other = uniform({c, h, w}, s.rng(), -1.0, 1.0);
    s.check_map("add", uniform({c, h, w}, s.rng(), -1.0, 1.0), [&](const T& v) { return add(v, other); },
                [](const T&, const T&, const T& up) { return add_backward(up).first; });
    const T tail = uniform({2, h, w}, s.rng(), -1.0, 1.0);
    s.check_map(
        "concat_channels", uniform({c, h, w}, s.rng(), -1.0, 1.0),
        [&](const T& v) {
          const std::array<const T*, 2> parts = {&v, &tail};
          return concat_channels<double>(parts);
        },
        [&](const T&, const T&, const T& up) {
          const std::array<Index, 2> split = {c, 2};
          return concat_backward<double>(up, split)[0];
        });
    s.check_map(
        "maxpool2x2", distinct({c, h, w}, s.rng()), [](const T& v) { return maxpool2x2(v); },
        [](const T& x, const T&, const T& up) { return maxpool_backward(x, up); },
        [](const T& x, const T&, auto& pattern) { append_argmax(x, pattern); });
  }
}

void filter_checks(Suite& s) {
  for (const auto& [c, h, w] : kMapShapes) {
    s.check_map("gaussian_filter", uniform({c, h, w}, s.rng(), -1.0, 1.0),
                [](const T& v) { return gaussian_filter(v, 13, 2.0); },
                [](const T&, const T&, const T& up) { return gaussian_filter_backward(up, 13, 2.0); });
    for (int patch : {3, 13}) {
      const std::string suffix = " patch " + std::to_string(patch);
      s.check_map("box_stats.mean" + suffix, uniform({c, h, w}, s.rng(), 0.1, 1.0),
                  [&](const T& v) { return box_stats(v, patch).mean; },
                  [&](const T& x, const T&, const T& up) {
                    return box_stats_backward(x, box_stats(x, patch), up, T::zeros_like(x), patch);
                  });
      s.check_map("box_stats.std" + suffix, uniform({c, h, w}, s.rng(), 0.1, 1.0),
                  [&](const T& v) { return box_stats(v, patch).std; },
                  [&](const T& x, const T&, const T& up) {
                    return box_stats_backward(x, box_stats(x, patch), T::zeros_like(x), up, patch);
                  });
    }
  }
}

// Jittered high-amplitude checkerboard. Its feature contrast stays well away
// from 0, borders included, where |C|^alpha is too steep for a 1e-3 step.
T contrast_fixture(const Shape3& shape, SplitMix64& rng) {
  T t({shape.c, shape.h, shape.w});
  for (Index c = 0; c < shape.c; ++c)
    for (Index y = 0; y < shape.h; ++y)
      for (Index x = 0; x < shape.w; ++x) t(c, y, x) = 0.5 + ((x + y) % 2 ? 0.45 : -0.45) + rng.symmetric(0.03);
  return t;
}

void masking_checks(Suite& s) {
  FcmConfig cfg;
  FcmConfig contrast_only = cfg;
  contrast_only.neighborhood_masking = false;
  auto contrast_sign = [&](const T& x, const T&, std::vector<std::uint8_t>& pattern) {
    append_sign(feature_contrast(x, cfg).values(), pattern);
  };
  for (const auto& shape : kMapShapes) {
    const T::Shape dims = {shape.c, shape.h, shape.w};
    for (double alpha : {0.5, 1.0}) {
      const std::string a = alpha == 0.5 ? " alpha 0.5" : " alpha 1";
      s.check_map(
          "self_masking" + a, off_zero(dims, s.rng(), 0.05),
          [&](const T& v) { return self_masking(v, alpha, cfg.epsilon); },
          [&](const T& x, const T&, const T& up) { return self_masking_backward(x, alpha, cfg.epsilon, up); });
      for (const FcmConfig* mc : {&contrast_only, &cfg}) {
        const std::string name = mc->neighborhood_masking ? "masked_features" : "masked_features.contrast";
        s.check_map(
            name + a, contrast_fixture(shape, s.rng()), [&](const T& v) { return masked_features(v, alpha, *mc); },
            [&](const T& x, const T&, const T& up) {
              return masked_features_backward(x, contrast_maps(x, alpha, *mc), alpha, *mc, up);
            },
            contrast_sign);
      }
    }
  }
}

void loss_checks(Suite& s) {
  const FcmConfig cfg;
  for (const auto& [c, h, w] : kMapShapes) {
    std::vector<T> guidance = {uniform({c, h, w}, s.rng(), 0.0, 1.0), uniform({c + 1, h, w}, s.rng(), 0.0, 1.0)};
    std::vector<T> outputs = {uniform({c, h, w}, s.rng(), 0.0, 1.0), uniform({c + 1, h, w}, s.rng(), 0.0, 1.0)};
    const auto targets = loss_targets(LossMode::fcm, guidance, cfg);
    const auto loss = feature_loss(LossMode::fcm, targets, outputs, cfg);
    for (std::size_t l = 0; l < outputs.size(); ++l) {
      s.check(
          "fcm_loss.layer" + std::to_string(l),
          [&](const T& v) {
            auto probe = outputs;
            probe[l] = v;
            ProbeEval e{feature_loss(LossMode::fcm, targets, probe, cfg, false).value, {}};
            const auto maps = contrast_maps(v, cfg.alpha_tm, cfg);
            append_sign(maps.masked.values() - targets[l].values(), e.pattern);
            append_sign(maps.contrast.values(), e.pattern);
            return e;
          },
          outputs[l], loss.grads[l].values());
    }
  }
}

T preprocess(const T& image, const VggPreproc& pre) {
  T out = image;
  for (Index c = 0; c < 3; ++c) out.plane(c).array() = (image.plane(c).array() - pre.mean[c]) / pre.std[c];
  return out;
}

// VGG-shaped weights with every ReLU away from its kink on the given images.
VggWeights<double> margin_vgg(const std::vector<T>& images, SplitMix64& rng) {
  VggWeights<double> weights;
  std::vector<T> acts;
  for (const T& im : images) acts.push_back(preprocess(im, weights.preproc));
  for (int l = 0; l < kVggMaxLayers; ++l) {
    const auto [in, out] = kVggLayerChannels[static_cast<std::size_t>(l)];
    if (l == 2)
      for (T& a : acts) a = maxpool2x2(a);
    weights.layers.push_back(margin_conv(in, out, acts, rng));
    acts = relu_conv_all(acts, weights.layers.back());
  }
  return weights;
}

std::vector<T> random_features_weights(const VggActivations<double>& acts, SplitMix64& rng) {
  std::vector<T> w;
  for (const auto& f : acts.features) w.push_back(uniform(f.shape(), rng, -1.0, 1.0));
  return w;
}

void append_vgg_pattern(const VggActivations<double>& acts, std::vector<std::uint8_t>& pattern) {
  for (const T& f : acts.features) append_mask(f, pattern);
  append_argmax(acts.features[1], pattern);
}

void vgg_checks(Suite& s) {
  const FcmConfig cfg;
  const std::array<Shape3, 3> shapes = {{{3, 8, 8}, {3, 10, 6}, {3, 12, 12}}};
  for (const auto& [c, h, w] : shapes) {
    T image = uniform({c, h, w}, s.rng(), 0.05, 0.95);
    T output = uniform({c, h, w}, s.rng(), 0.05, 0.95);
    const T guidance = uniform({c, h, w}, s.rng(), 0.0, 1.0);
    const VggWeights<double> weights = margin_vgg({image, output}, s.rng());

    const auto acts = vgg_forward(image, weights, 3);
    const auto probe = random_features_weights(acts, s.rng());
    auto functional = [&](const T& v) {
      const auto a = vgg_forward(v, weights, 3);
      ProbeEval e;
      for (std::size_t l = 0; l < probe.size(); ++l) e.value += dot(probe[l], a.features[l]);
      append_vgg_pattern(a, e.pattern);
      return e;
    };
    s.check("vgg.input", functional, image, vgg_backward(probe, acts, weights).values());

    const auto targets = loss_targets(LossMode::fcm, vgg_forward(guidance, weights, 3).features, cfg);
    const auto out_acts = vgg_forward(output, weights, 3);
    const auto loss = feature_loss(LossMode::fcm, targets, out_acts.features, cfg);
    s.check(
        "vgg+fcm_loss.image",
        [&](const T& v) {
          const auto a = vgg_forward(v, weights, 3);
          ProbeEval e{feature_loss(LossMode::fcm, targets, a.features, cfg, false).value, {}};
          append_vgg_pattern(a, e.pattern);
          for (std::size_t l = 0; l < targets.size(); ++l) {
            const auto maps = contrast_maps(a.features[l], cfg.alpha_tm, cfg);
            append_sign(maps.masked.values() - targets[l].values(), e.pattern);
            append_sign(maps.contrast.values(), e.pattern);
          }
          return e;
        },
        output, vgg_backward(loss.grads, out_acts, weights).values());
  }
}

// Network parameters with every hidden ReLU away from its kink on `exposures`.
TmParams<double> margin_network(const Exposures<double>& exposures, SplitMix64& rng) {
  TmParams<double> p = TmParams<double>::zeros();
  std::vector<T> acts(exposures.begin(), exposures.end());
  for (std::size_t l = 0; l < 3; ++l) {
    p.encoder[l] = margin_conv(kEncoderChannels[l], kEncoderChannels[l + 1], acts, rng);
    acts = relu_conv_all(acts, p.encoder[l]);
  }
  const std::array<const T*, 3> parts = {&acts[0], &acts[1], &acts[2]};
  acts = {concat_channels<double>(parts)};
  for (std::size_t l = 0; l < 2; ++l) {
    p.fusion[l] = margin_conv(kFusionChannels[l], kFusionChannels[l + 1], acts, rng);
    acts = relu_conv_all(acts, p.fusion[l]);
  }
  for (std::size_t l = 0; l < 2; ++l) {
    p.decoder[l] = margin_conv(kDecoderChannels[l], kDecoderChannels[l + 1], acts, rng);
    acts = relu_conv_all(acts, p.decoder[l]);
  }
  p.decoder[2] = random_conv(kDecoderChannels[2], kDecoderChannels[3], rng);
  return p;
}

void network_checks(Suite& s) {
  const std::array<Shape3, 3> shapes = {{{3, 16, 16}, {3, 8, 8}, {3, 6, 10}}};
  for (const auto& [c, h, w] : shapes) {
    const Exposures<double> exposures = {uniform({c, h, w}, s.rng(), 0.0, 1.0), uniform({c, h, w}, s.rng(), 0.0, 1.0),
                                         uniform({c, h, w}, s.rng(), 0.0, 1.0)};
    TmParams<double> params = margin_network(exposures, s.rng());
    const auto cache = tm_forward(exposures, params);
    const T up = uniform(cache.output.shape(), s.rng(), -1.0, 1.0);
    params.zero_grad();
    tm_backward(up, cache, params);
    auto eval = [&](const T&) {
      const auto fwd = tm_forward(exposures, params);
      ProbeEval e{dot(up, fwd.output), {}};
      for (const auto& b : fwd.branches)
        for (const T& a : b.acts) append_mask(a, e.pattern);
      for (const T& a : fwd.fusion) append_mask(a, e.pattern);
      for (const T& a : fwd.decoder) append_mask(a, e.pattern);
      return e;
    };
    auto layers = params.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
      for (T* t : {&layers[l]->weight, &layers[l]->bias}) {
        const Eigen::ArrayXd analytic = t->grad();
        const std::string name = "tm_network." + kTmLayerNames[l] + (t == &layers[l]->weight ? ".weight" : ".bias");
        s.check(name, eval, *t, analytic);
      }
    }
  }
}

}  // namespace

std::vector<GradcheckResult> run_gradcheck_suite(const GradcheckOptions& opts,
                                                 const std::function<void(const GradcheckResult&)>& on_result) {
  Suite s(opts, on_result);
  conv_checks(s);
  elementwise_checks(s);
  filter_checks(s);
  masking_checks(s);
  loss_checks(s);
  vgg_checks(s);
  network_checks(s);
  return s.take();
}

}  // namespace fcmtm
