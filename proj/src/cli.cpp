#include "gcfsr/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>

#include "gcfsr/errors.hpp"
#include "gcfsr/infer.hpp"
#include "gcfsr/metrics.hpp"
#include "gcfsr/service.hpp"
#include "gcfsr/trainer.hpp"

namespace gcfsr {

namespace {

namespace fs = std::filesystem;

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), pattern, v);
  return buf;
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

// Every *.png in dir, sorted, resized to side.
std::vector<Image> load_images(const fs::path& dir, int side) {
  if (!fs::is_directory(dir)) throw InvalidArgument("data directory " + dir.string() + " does not exist");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (e.is_regular_file() && ext == ".png") files.push_back(e.path());
  }
  if (files.empty()) throw InvalidArgument("data directory " + dir.string() + " has no PNG files");
  std::sort(files.begin(), files.end());
  std::vector<Image> out;
  for (const auto& f : files) {
    Image img = load_png(f);
    if (!img.square()) throw InvalidArgument(f.string() + " is not square");
    out.push_back(img.width == side ? img : quantized(bicubic_resize(img, side, side)));
  }
  return out;
}

struct TrainArgs {
  std::string config, data, out, resume;
  int synthetic = 0;
  std::uint64_t seed = 0;
  bool adv_only = false;
  double fixed_s = 0;
  int iters = 0;
};

int cmd_train(const TrainArgs& a, const CLI::App& sub, std::ostream& out) {
  std::unique_ptr<Trainer> trainer;
  ModelConfig cfg;
  std::unique_ptr<Checkpoint> resume;
  if (!a.resume.empty()) {
    resume = std::make_unique<Checkpoint>(Checkpoint::load(a.resume));
    cfg = resume->config();
  } else {
    if (!a.config.empty()) cfg = ModelConfig::load(a.config);
    if (sub.count("--seed")) cfg.seed = a.seed;
    if (a.adv_only) cfg.adversarial_only = true;
    if (sub.count("--fixed-s")) cfg.fixed_s = a.fixed_s;
    if (sub.count("--iters")) cfg.total_iters = a.iters;
    cfg.validate();
  }
  const DataSource data =
      a.synthetic > 0 ? DataSource::synthetic(a.synthetic, cfg.side()) : DataSource::directory(a.data, cfg.side());
  trainer = resume ? std::make_unique<Trainer>(*resume, data) : std::make_unique<Trainer>(cfg, data);
  out << "training " << data.description() << " (" << data.size() << " images) from iteration "
      << trainer->iteration() << " to " << cfg.total_iters << "\n";
  trainer->train(a.out, [&](const StepMetrics& m) {
    if (m.iteration % cfg.log_interval == 0)
      out << "iter " << m.iteration << " s=" << m.s << " L_D=" << fmt("%.4f", m.loss_d)
          << " L_G=" << fmt("%.4f", m.loss_g) << " L1=" << fmt("%.4f", m.l1) << std::endl;
  });
  out << "wrote " << (fs::path(a.out) / "final.gcfs").string() << "\n";
  return kExitOk;
}

int cmd_infer(const std::string& ckpt, const std::string& input, double s, const std::string& output,
              std::ostream& out) {
  const SuperResolver model = SuperResolver::load(ckpt);
  const auto r = model.infer(load_png(input), s);
  if (fs::path(output).has_parent_path()) fs::create_directories(fs::path(output).parent_path());
  save_png(r.image, output);
  out << "s_effective=" << r.s_effective << "\n";
  return kExitOk;
}

int cmd_sweep(const std::string& ckpt, const std::string& input, std::optional<double> lo,
              std::optional<double> hi, int steps, const std::string& out_dir, std::ostream& out) {
  if (steps < 2) throw InvalidArgument("--steps must be at least 2, got " + std::to_string(steps));
  const SuperResolver model = SuperResolver::load(ckpt);
  const double a = lo.value_or(model.config().s_min()), b = hi.value_or(model.config().s_max());
  const auto frames = model.sweep(load_png(input), a, b, steps);
  fs::create_directories(out_dir);
  auto tsv = open_output(fs::path(out_dir) / "frames.tsv");
  tsv << "index\ts\ts_effective\tfile\n";
  const auto s_values = log_sweep(a, b, steps);
  std::vector<Image> images;
  for (std::size_t k = 0; k < frames.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%02zu.png", k);
    save_png(frames[k].image, fs::path(out_dir) / name);
    tsv << k << "\t" << fmt("%.10g", s_values[k]) << "\t" << fmt("%.10g", frames[k].s_effective) << "\t" << name
        << "\n";
    images.push_back(frames[k].image);
  }
  save_png(compose_strip(images), fs::path(out_dir) / "strip.png");
  out << "wrote " << frames.size() << " frames and strip.png to " << out_dir << "\n";
  return kExitOk;
}

int cmd_sigma_hist(const std::string& ckpt, std::optional<int> level, const std::string& output,
                   std::ostream& out) {
  const SuperResolver model = SuperResolver::load(ckpt);
  const auto rows = model.sigma_table(level.value_or(model.config().u));
  std::ostringstream text;
  for (const auto& r : rows)
    text << fmt("%g", r.factor) << "\t" << r.channel << "\t" << fmt("%.17g", r.sigma_enc) << "\t"
         << fmt("%.17g", r.sigma_gen) << "\n";
  if (output == "-") {
    out << text.str();
  } else {
    open_output(output) << text.str();
  }
  return kExitOk;
}

int cmd_eval(const std::string& ckpt, const std::string& data_dir, int synthetic, std::vector<int> factors,
             const std::string& output, std::ostream& out) {
  const SuperResolver model = SuperResolver::load(ckpt);
  const auto& cfg = model.config();
  if (factors.empty()) factors = cfg.factors;
  for (int f : factors)
    if (std::find(cfg.factors.begin(), cfg.factors.end(), f) == cfg.factors.end()) {
      std::string valid;
      for (int v : cfg.factors) valid += (valid.empty() ? "" : ",") + std::to_string(v);
      throw InvalidArgument("factor " + std::to_string(f) + " is not in the model's factor set {" + valid + "}");
    }
  std::vector<Image> images;
  if (synthetic > 0) {
    for (int k = 0; k < synthetic; ++k)
      images.push_back(synth_face(DataSource::kValidationSeed + static_cast<std::uint64_t>(k), cfg.side()));
  } else {
    images = load_images(data_dir, cfg.side());
  }
  std::ostringstream text;
  text << "factor\tn\tpsnr\tssim\tbicubic_psnr\tbicubic_ssim\n";
  for (int f : factors) {
    double p = 0, s = 0, bp = 0, bs = 0;
    for (const auto& gt : images) {
      const Image up = degrade(gt, f).lr_upscaled;
      const Image sr = model.infer_prepared(up, f).image;
      p += psnr(sr, gt);
      s += ssim(sr, gt);
      bp += psnr(up, gt);
      bs += ssim(up, gt);
    }
    const double n = static_cast<double>(images.size());
    text << f << "\t" << images.size() << "\t" << fmt("%.6f", p / n) << "\t" << fmt("%.6f", s / n) << "\t"
         << fmt("%.6f", bp / n) << "\t" << fmt("%.6f", bs / n) << "\n";
  }
  if (output == "-") {
    out << text.str();
  } else {
    open_output(output) << text.str();
  }
  return kExitOk;
}

int cmd_serve(const std::string& ckpt, ServiceOptions options, std::ostream& out) {
  auto model = std::make_shared<const SuperResolver>(SuperResolver::load(ckpt));
  Service service(model, options);
  const int port = service.bind();
  out << "listening on http://" << options.host << ":" << port << std::endl;
  service.run();
  return kExitOk;
}

int cmd_synth(int count, int side, std::uint64_t first, const std::string& dir, std::ostream& out) {
  if (count < 1) throw InvalidArgument("--count must be positive");
  fs::create_directories(dir);
  for (int k = 0; k < count; ++k) {
    char name[32];
    std::snprintf(name, sizeof(name), "face_%05d.png", k);
    save_png(synth_face(first + static_cast<std::uint64_t>(k), side), fs::path(dir) / name);
  }
  out << "wrote " << count << " faces to " << dir << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Controllable face super-resolution: train, infer, sweep, inspect and serve."};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a model; writes metrics.tsv and checkpoints to --out");
  train->add_option("--config", ta.config, "Flat key=value config file (defaults when omitted)");
  auto* data_opt = train->add_option("--data", ta.data, "Directory of square PNG faces");
  auto* synth_opt = train->add_option("--synthetic", ta.synthetic, "Use N procedural faces instead of --data");
  data_opt->excludes(synth_opt);
  train->add_option("--out", ta.out, "Output directory")->required();
  auto* resume_opt = train->add_option("--resume", ta.resume, "Continue from a checkpoint (config comes from it)");
  auto* seed_opt = train->add_option("--seed", ta.seed, "Override the config seed");
  auto* adv_opt = train->add_flag("--adv-only", ta.adv_only, "Train with the adversarial loss alone");
  auto* fixed_opt = train->add_option("--fixed-s", ta.fixed_s, "Train at one fixed factor");
  auto* iters_opt = train->add_option("--iters", ta.iters, "Override total_iters");
  for (auto* o : {seed_opt, adv_opt, fixed_opt, iters_opt, train->get_option("--config")}) resume_opt->excludes(o);

  std::string ckpt, input, output;
  double s = 0;
  auto* infer = app.add_subcommand("infer", "Super-resolve one image at factor --s");
  infer->add_option("--checkpoint", ckpt)->required();
  infer->add_option("--input", input)->required();
  infer->add_option("--s", s, "Conditional factor; clamped to the trained range")->required();
  infer->add_option("--out", output)->required();

  std::optional<double> s_lo, s_hi;
  int steps = 9;
  auto* sweep = app.add_subcommand("sweep", "Log-spaced factor sweep: frame PNGs, strip.png, frames.tsv");
  sweep->add_option("--checkpoint", ckpt)->required();
  sweep->add_option("--input", input)->required();
  sweep->add_option("--s-min", s_lo, "First factor (default: trained minimum)");
  sweep->add_option("--s-max", s_hi, "Last factor (default: trained maximum)");
  sweep->add_option("--steps", steps, "Number of frames, >= 2");
  sweep->add_option("--out", output, "Output directory")->required();

  std::optional<int> level;
  auto* sigma = app.add_subcommand("sigma-hist", "Per-channel gates per factor: factor, channel, sigma_enc, sigma_gen");
  sigma->add_option("--checkpoint", ckpt)->required();
  sigma->add_option("--level", level, "Pyramid level in [l, u] (default u)");
  sigma->add_option("--out", output, "TSV path or - for stdout")->required();

  std::vector<int> factors;
  std::string eval_dir;
  int eval_synth = 0;
  auto* eval = app.add_subcommand("eval", "Mean PSNR/SSIM per factor against GT and the bicubic baseline");
  eval->add_option("--checkpoint", ckpt)->required();
  auto* ed = eval->add_option("--data", eval_dir, "Directory of PNG ground truths");
  auto* es = eval->add_option("--synthetic", eval_synth, "Use N held-out procedural faces");
  ed->excludes(es);
  eval->add_option("--factors", factors, "Comma-separated factors (default: all trained)")->delimiter(',');
  eval->add_option("--out", output, "TSV path or - for stdout")->required();

  ServiceOptions so;
  auto* serve = app.add_subcommand("serve", "HTTP inference server");
  serve->add_option("--checkpoint", ckpt)->required();
  serve->add_option("--host", so.host);
  serve->add_option("--port", so.port, "0 picks a free port");
  serve->add_option("--max-body", so.max_body, "Largest accepted request body in bytes");
  serve->add_option("--cors-origin", so.cors_origin, "Allowed browser origin (enables CORS)");

  int count = 0, side = 64;
  std::uint64_t first = 0;
  auto* synth = app.add_subcommand("synth", "Write procedural faces as PNGs");
  synth->add_option("--count", count)->required();
  synth->add_option("--side", side);
  synth->add_option("--first-seed", first);
  synth->add_option("--out", output)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (train->parsed()) {
      if (ta.data.empty() && ta.synthetic <= 0) throw InvalidArgument("train needs --data DIR or --synthetic N");
      return cmd_train(ta, *train, out);
    }
    if (infer->parsed()) return cmd_infer(ckpt, input, s, output, out);
    if (sweep->parsed()) return cmd_sweep(ckpt, input, s_lo, s_hi, steps, output, out);
    if (sigma->parsed()) return cmd_sigma_hist(ckpt, level, output, out);
    if (eval->parsed()) {
      if (eval_dir.empty() && eval_synth <= 0) throw InvalidArgument("eval needs --data DIR or --synthetic N");
      return cmd_eval(ckpt, eval_dir, eval_synth, factors, output, out);
    }
    if (serve->parsed()) return cmd_serve(ckpt, so, out);
    if (synth->parsed()) return cmd_synth(count, side, first, output, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace gcfsr
