#include "gcfsr/infer.hpp"

#include <cmath>

#include "gcfsr/errors.hpp"
#include "gcfsr/generator.hpp"

namespace gcfsr {

std::vector<double> log_sweep(double a, double b, int steps) {
  if (steps < 2) throw InvalidArgument("sweep needs at least 2 steps, got " + std::to_string(steps));
  if (!(a > 0) || !(b > 0) || !std::isfinite(a) || !std::isfinite(b))
    throw InvalidArgument("sweep endpoints must be positive and finite");
  std::vector<double> out(static_cast<std::size_t>(steps));
  const double la = std::log(a), lb = std::log(b);
  for (int k = 0; k < steps; ++k) out[static_cast<std::size_t>(k)] = std::exp(la + (lb - la) * k / (steps - 1));
  out.front() = a;
  out.back() = b;
  return out;
}

Image compose_strip(const std::vector<Image>& frames, int gutter) {
  if (frames.empty()) throw InvalidArgument("strip needs at least one frame");
  const int w = frames[0].width, h = frames[0].height;
  for (const auto& f : frames)
    if (f.width != w || f.height != h) throw InvalidArgument("strip frames must share one size");
  const int k = static_cast<int>(frames.size());
  Image out(k * w + (k - 1) * gutter, h, 1.0f);
  for (int i = 0; i < k; ++i)
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) out.at(c, y, i * (w + gutter) + x) = frames[static_cast<std::size_t>(i)].at(c, y, x);
  return out;
}

SuperResolver::SuperResolver(const Checkpoint& checkpoint) {
  auto model = std::make_shared<GcfsrModel>(checkpoint.config(), 0);
  load_params(checkpoint, "g/", model->params());
  model->params().set_requires_grad(false);
  model_ = std::move(model);
}

SuperResolver SuperResolver::load(const std::filesystem::path& path) {
  return SuperResolver(Checkpoint::load(path));
}

Image SuperResolver::prepare(const Image& lr) const {
  const int side = this->side();
  if (!lr.square())
    throw InvalidArgument("input must be square, got " + std::to_string(lr.width) + "x" + std::to_string(lr.height));
  if (lr.width < 1 || lr.width > side || side % lr.width != 0)
    throw InvalidArgument("input side " + std::to_string(lr.width) + " must divide the model side " +
                          std::to_string(side));
  if (lr.width == side) return lr;
  return bicubic_resize(lr, side, side);
}

InferenceResult SuperResolver::infer_prepared(const Image& x_up, double s) const {
  if (x_up.width != side() || x_up.height != side())
    throw InvalidArgument("prepared input must be " + std::to_string(side()) + " square");
  const auto cond = ConditionFactor::from_raw(s, config());
  const Tensor y = model_->forward(to_tensor(x_up, model_->dtype()), cond.s_norm);
  return {quantized(to_image(y)), cond.s_raw};
}

std::vector<InferenceResult> SuperResolver::sweep(const Image& lr, double s_min, double s_max,
                                                  int steps) const {
  const Image x = prepare(lr);
  std::vector<InferenceResult> out;
  // One forward per frame so each frame matches a single infer() exactly.
  for (double s : log_sweep(s_min, s_max, steps)) out.push_back(infer_prepared(x, s));
  return out;
}

std::vector<SigmaRow> SuperResolver::sigma_table(int level) const {
  const auto& cfg = config();
  if (level < cfg.l() || level > cfg.u)
    throw InvalidArgument("level " + std::to_string(level) + " outside [" + std::to_string(cfg.l()) + ", " +
                          std::to_string(cfg.u) + "]");
  // Offset of this level's block in the raw MLP output.
  std::size_t offset = 0;
  for (int i = cfg.l(); i < level; ++i) offset += 2 * static_cast<std::size_t>(cfg.chan(i));
  const auto ch = static_cast<std::size_t>(cfg.chan(level));
  std::vector<SigmaRow> rows;
  for (int f : cfg.factors) {
    const auto cond = ConditionFactor::from_raw(f, cfg);
    const auto raw = model_->generator().condition_mlp().raw(model_->s_norm_tensor(1, cond.s_norm)).to_vector();
    // The gate normalization redone in double precision so the exported
    // gates satisfy enc^2 + gen^2 <= 1 without float32 rounding slack.
    for (std::size_t c = 0; c < ch; ++c) {
      const double r1 = raw[offset + c], r2 = raw[offset + ch + c];
      const double inv = 1.0 / std::sqrt(r1 * r1 + r2 * r2 + 1e-8);
      rows.push_back({double(f), static_cast<int>(c), std::abs(r1) * inv, std::abs(r2) * inv});
    }
  }
  return rows;
}

}  // namespace gcfsr
