// fcmtm: per-image HDR tone mapping with a feature contrast masking loss.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "fcmtm/diagnostics.hpp"
#include "fcmtm/gradcheck_suite.hpp"
#include "fcmtm/hdr_io.hpp"
#include "fcmtm/threading.hpp"
#include "fcmtm/trainer.hpp"

namespace fs = std::filesystem;
using namespace fcmtm;

namespace {

struct LossFlags {
  int patch = 13;
  double sigma = 2.0;
  double alpha_hdr = 0.5;
  double alpha_tm = 1.0;
  int layers = 3;

  void attach(CLI::App& cmd) {
    cmd.add_option("--patch", patch, "Window size of the local mean and neighborhood statistics")
        ->capture_default_str();
    cmd.add_option("--sigma", sigma, "Gaussian sigma of the local mean, pixels")->capture_default_str();
    cmd.add_option("--alpha-hdr", alpha_hdr, "Self-masking exponent of the guidance branch")->capture_default_str();
    cmd.add_option("--alpha-tm", alpha_tm, "Self-masking exponent of the output branch")->capture_default_str();
    cmd.add_option("--layers", layers, "VGG layers used by the loss (1-3)")->capture_default_str();
  }

  FcmConfig config() const {
    FcmConfig cfg;
    cfg.gaussian_size = cfg.box_size = patch;
    cfg.gaussian_sigma = sigma;
    cfg.alpha_hdr = alpha_hdr;
    cfg.alpha_tm = alpha_tm;
    cfg.n_layers = layers;
    cfg.validate();
    return cfg;
  }
};

std::string weights_path(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("FCMW_WEIGHTS"); env && *env) return env;
  fail(ErrorCode::invalid_argument, "no weight file: pass --weights or set FCMW_WEIGHTS");
}

void require_input(const std::string& path) {
  if (!fs::is_regular_file(path)) fail(ErrorCode::io_failure, "input file not found: " + path);
}

fs::path report_path(const fs::path& output) {
  fs::path p = output;
  p.replace_extension(".report.json");
  return p;
}

nlohmann::json stops_json(const ExposureStops& s) { return {{"low", s.low}, {"mid", s.mid}, {"high", s.high}}; }

int cmd_tonemap(const std::string& input, const std::string& output, const std::string& weights_flag,
                TrainConfig cfg, const LossFlags& loss, double gamma, const std::string& dump_dir, bool quiet) {
  cfg.fcm = loss.config();
  cfg.validate();
  if (!(gamma > 0.0)) fail(ErrorCode::invalid_argument, "gamma must be positive");
  const std::string wpath = weights_path(weights_flag);
  require_input(input);

  const VggWeights<float> weights = load_vgg_weights_file(wpath);
  const HdrImage hdr = read_hdr_file(input);
  if (!dump_dir.empty()) {
    DumpOptions opts;
    opts.fcm = cfg.fcm;
    opts.layers = cfg.fcm.n_layers;
    dump_diagnostics(hdr, weights, opts, dump_dir);
  }

  const int report_every = std::max(1, cfg.epochs / 20);
  const TrainResult result = train(hdr, cfg, weights, [&](int epoch, double value) {
    if (!quiet && (epoch % report_every == 0 || epoch + 1 == cfg.epochs))
      std::fprintf(stderr, "epoch %4d/%d  loss %.6f\n", epoch + 1, cfg.epochs, value);
  });
  const TrainReport& r = result.report;

  nlohmann::json report = {
      {"report_version", 1},
      {"input", input},
      {"output", output},
      {"width", hdr.width},
      {"height", hdr.height},
      {"epochs", cfg.epochs},
      {"completed_epochs", r.completed_epochs()},
      {"lr0", cfg.lr0},
      {"seed", cfg.seed},
      {"loss_mode", to_string(cfg.loss_mode)},
      {"input_mode", to_string(cfg.input_mode)},
      {"fcm",
       {{"alpha_hdr", cfg.fcm.alpha_hdr},
        {"alpha_tm", cfg.fcm.alpha_tm},
        {"epsilon", cfg.fcm.epsilon},
        {"patch", cfg.fcm.gaussian_size},
        {"sigma", cfg.fcm.gaussian_sigma},
        {"layers", cfg.fcm.n_layers}}},
      {"median", r.median},
      {"mu", r.mu},
      {"exposures", stops_json(r.stops)},
      {"loss_trace", r.loss_trace},
      {"final_loss", r.diverged ? nlohmann::json(nullptr) : nlohmann::json(r.final_loss)},
      {"final_fcm_loss", r.diverged ? nlohmann::json(nullptr) : nlohmann::json(r.final_fcm_loss)},
      {"diverged", r.diverged},
      {"runtime_seconds", r.seconds},
      {"gamma", gamma},
  };
  if (r.diverged) report["divergence_message"] = r.divergence_message;
  const std::string text = report.dump(2) + "\n";
  write_file(report_path(output), ByteView(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  if (r.diverged) fail(ErrorCode::divergence, r.divergence_message);

  write_file(output, write_ppm(result.image, gamma));
  if (!quiet)
    std::fprintf(stderr, "wrote %s (final loss %.6f, mu %.4f, %.1f s)\n", output.c_str(), r.final_loss, r.mu, r.seconds);
  return 0;
}

int cmd_dump(const std::string& input, const std::string& dir, const std::string& weights_flag,
             const LossFlags& loss, const std::vector<int>& channels) {
  DumpOptions opts;
  opts.fcm = loss.config();
  opts.layers = loss.layers;
  opts.channels = channels;
  const std::string wpath = weights_path(weights_flag);
  require_input(input);
  const VggWeights<float> weights = load_vgg_weights_file(wpath);
  const DumpSummary s = dump_diagnostics(read_hdr_file(input), weights, opts, dir);
  std::printf("median %.6f\nmu %.6f\nexposures %.6f %.6f %.6f\nfiles %zu\n", s.median, s.mu, s.stops.low, s.stops.mid,
              s.stops.high, s.files.size());
  return 0;
}

int cmd_gradcheck(double tolerance, std::uint64_t seed) {
  if (!(tolerance > 0.0)) fail(ErrorCode::invalid_argument, "tolerance must be positive");
  GradcheckOptions opts;
  opts.tolerance = tolerance;
  opts.seed = seed;
  int failures = 0;
  const auto results = run_gradcheck_suite(opts, [&](const GradcheckResult& r) {
    if (!r.passed()) ++failures;
    std::printf("%-4s %-48s max_rel_error %.3e  probes %ld  skipped %ld\n", r.passed() ? "ok" : "FAIL",
                r.name.c_str(), r.max_rel_error, static_cast<long>(r.probes), static_cast<long>(r.skipped));
    std::fflush(stdout);
  });
  std::printf("%zu checks, %d failed (tolerance %g)\n", results.size(), failures, tolerance);
  return failures == 0 ? 0 : 1;
}

int cmd_make_weights(const std::string& output, std::uint64_t seed, int layers, bool fixtures) {
  const VggWeights<float> weights = random_vgg_weights(seed, layers);
  const Bytes bytes = save_vgg_weights(weights);
  write_file(output, bytes);
  if (fixtures) {
    const fs::path out(output);
    const fs::path dir = out.has_parent_path() ? out.parent_path() : fs::path(".");
    const VggManifest manifest = write_reference_fixtures(weights, bytes, dir, out.stem().string());
    const std::string text = manifest_to_json(manifest);
    fs::path mpath = out;
    mpath.replace_extension(".manifest.json");
    write_file(mpath, ByteView(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
    std::printf("wrote %s and %s\n", output.c_str(), mpath.c_str());
  } else {
    std::printf("wrote %s\n", output.c_str());
  }
  return 0;
}

int cmd_verify_weights(const std::string& weights_flag, const std::string& manifest_path) {
  const std::string wpath = weights_path(weights_flag);
  require_input(wpath);
  require_input(manifest_path);
  const Bytes bytes = read_file(wpath);
  const VggWeights<float> weights = load_vgg_weights(bytes);
  const Bytes mbytes = read_file(manifest_path);
  const VggManifest manifest = parse_manifest(std::string(mbytes.begin(), mbytes.end()));
  verify_manifest(manifest, bytes, weights);
  std::printf("ok   manifest: crc32 %08x, %zu layers\n", manifest.crc32, manifest.layers.size());
  const fs::path dir = fs::path(manifest_path).has_parent_path() ? fs::path(manifest_path).parent_path() : ".";
  bool all = true;
  for (const auto& r : check_parity(manifest, weights, dir)) {
    all = all && r.passed();
    std::printf("%-4s %s/%s max_abs_error %.3e (tolerance %.0e)\n", r.passed() ? "ok" : "FAIL", r.fixture.c_str(),
                r.layer.c_str(), r.max_abs_error, r.tolerance);
  }
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Per-image HDR tone mapping trained with a feature contrast masking loss"};
  app.require_subcommand(1);
  app.fallthrough();
  int threads = 0;
  app.add_option("--threads", threads, "Kernel threads, 0 = all cores")->capture_default_str();

  // tonemap
  auto* tonemap = app.add_subcommand("tonemap", "Train a network on one HDR image and write the tone mapped PPM");
  std::string input, output, weights, dump_dir, loss_name = "fcm", input_mode_name = "mef";
  TrainConfig train_cfg;
  LossFlags loss;
  double gamma = 1.0;
  bool quiet = false;
  tonemap->add_option("-i,--input", input, "Radiance .hdr or PFM input")->required();
  tonemap->add_option("-o,--output", output, "Output PPM; the report is written beside it")->required();
  tonemap->add_option("--weights", weights, "VGG weight file (FCMW); falls back to $FCMW_WEIGHTS");
  tonemap->add_option("--epochs", train_cfg.epochs, "Optimization steps")->capture_default_str();
  tonemap->add_option("--lr", train_cfg.lr0, "Initial learning rate")->capture_default_str();
  tonemap->add_option("--seed", train_cfg.seed, "Network initialization seed")->capture_default_str();
  loss.attach(*tonemap);
  tonemap->add_option("--loss", loss_name, "Training loss")
      ->check(CLI::IsMember({"fcm", "plain-vgg"}))
      ->capture_default_str();
  tonemap->add_option("--input-mode", input_mode_name, "Network inputs")
      ->check(CLI::IsMember({"mef", "linear", "log"}))
      ->capture_default_str();
  tonemap->add_option("--gamma", gamma, "Display gamma applied when writing the PPM")->capture_default_str();
  tonemap->add_option("--dump", dump_dir, "Also write diagnostic maps into this directory");
  tonemap->add_flag("-q,--quiet", quiet, "No progress output");

  // dump
  auto* dump = app.add_subcommand("dump", "Write exposures, the mu-law guidance and masking maps as PFM");
  std::string dump_input, dump_out, dump_weights;
  LossFlags dump_loss;
  std::vector<int> channels = {0, 1, 2, 3};
  dump->add_option("-i,--input", dump_input, "Radiance .hdr or PFM input")->required();
  dump->add_option("-o,--output,--dump", dump_out, "Output directory")->required();
  dump->add_option("--weights", dump_weights, "VGG weight file (FCMW); falls back to $FCMW_WEIGHTS");
  dump->add_option("--channels", channels, "Feature channels dumped per layer")->capture_default_str();
  dump_loss.attach(*dump);

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "Run the finite-difference gradient suite");
  double tolerance = 1e-3;
  std::uint64_t gc_seed = 1;
  gradcheck->add_option("--tolerance", tolerance, "Maximum relative error")->capture_default_str();
  gradcheck->add_option("--seed", gc_seed, "Fixture seed")->capture_default_str();

  // make-weights
  auto* make_weights = app.add_subcommand("make-weights", "Write a random VGG-prefix weight file for testing");
  std::string mw_out;
  std::uint64_t mw_seed = 0;
  int mw_layers = kVggMaxLayers;
  bool mw_fixtures = false;
  make_weights->add_option("-o,--output", mw_out, "Output .fcmw path")->required();
  make_weights->add_option("--seed", mw_seed, "Generator seed")->capture_default_str();
  make_weights->add_option("--layers", mw_layers, "Layer count (1-3)")->capture_default_str();
  make_weights->add_flag("--fixtures", mw_fixtures, "Also write a manifest and reference activations");

  // verify-weights
  auto* verify = app.add_subcommand("verify-weights", "Check a weight file against its manifest and fixtures");
  std::string vw_weights, vw_manifest;
  verify->add_option("--weights", vw_weights, "VGG weight file (FCMW); falls back to $FCMW_WEIGHTS");
  verify->add_option("--manifest", vw_manifest, "Manifest JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error [config]: %s\n", e.what());
    return 1;
  }

  try {
    set_thread_count(threads);
    if (*tonemap) {
      train_cfg.loss_mode = loss_name == "fcm" ? LossMode::fcm : LossMode::plain_vgg;
      train_cfg.input_mode = input_mode_name == "mef"      ? InputMode::mef
                             : input_mode_name == "linear" ? InputMode::single_linear
                                                           : InputMode::single_log;
      return cmd_tonemap(input, output, weights, train_cfg, loss, gamma, dump_dir, quiet);
    }
    if (*dump) return cmd_dump(dump_input, dump_out, dump_weights, dump_loss, channels);
    if (*gradcheck) return cmd_gradcheck(tolerance, gc_seed);
    if (*make_weights) return cmd_make_weights(mw_out, mw_seed, mw_layers, mw_fixtures);
    if (*verify) return cmd_verify_weights(vw_weights, vw_manifest);
  } catch (const Error& e) {
    std::fprintf(stderr, "error [%s]: %s\n", std::string(to_string(e.category())).c_str(), e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error [io]: %s\n", e.what());
    return 1;
  }
  return 1;
}
