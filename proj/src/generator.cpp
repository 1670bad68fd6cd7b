#include "gcfsr/generator.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gcfsr/errors.hpp"
#include "gcfsr/log.hpp"
#include "gcfsr/ops.hpp"

namespace gcfsr {

ConditionFactor ConditionFactor::from_raw(double s, double s_min, double s_max, SNormMode mode) {
  if (!std::isfinite(s)) throw InvalidArgument("condition factor must be finite");
  if (!(s_min > 0) || s_max < s_min) throw InvalidArgument("condition factor: bad range");
  const double clamped = std::clamp(s, s_min, s_max);
  if (clamped != s) {
    std::ostringstream msg;
    msg << "factor " << s << " outside [" << s_min << ", " << s_max << "], clamped to " << clamped;
    warn(msg.str());
  }
  ConditionFactor c;
  c.s_raw = clamped;
  if (s_max == s_min)
    c.s_norm = 0.0;
  else if (mode == SNormMode::log)
    c.s_norm = (std::log2(clamped) - std::log2(s_min)) / (std::log2(s_max) - std::log2(s_min));
  else
    c.s_norm = (clamped - s_min) / (s_max - s_min);
  // Exact endpoints regardless of rounding in log2.
  if (clamped == s_min) c.s_norm = 0.0;
  if (clamped == s_max) c.s_norm = 1.0;
  return c;
}

const Tensor& ScalingVectors::enc_at(int level) const {
  if (level < l || level >= l + static_cast<int>(enc.size()))
    throw InvalidArgument("ScalingVectors: no level " + std::to_string(level));
  return enc[static_cast<std::size_t>(level - l)];
}

const Tensor& ScalingVectors::gen_at(int level) const {
  if (level < l || level >= l + static_cast<int>(gen.size()))
    throw InvalidArgument("ScalingVectors: no level " + std::to_string(level));
  return gen[static_cast<std::size_t>(level - l)];
}

SigmaPair normalize_sigma(const Tensor& raw1, const Tensor& raw2) {
  const Tensor inv = ops::rsqrt(ops::add_scalar(ops::add(ops::square(raw1), ops::square(raw2)), 1e-8));
  return {ops::mul(ops::abs(raw1), inv), ops::mul(ops::abs(raw2), inv)};
}

ConditionMlp::ConditionMlp(ParamSet& params, const std::string& name, int l,
                           std::vector<int> channels, Rng& rng, int hidden)
    : l_(l), channels_(std::move(channels)) {
  int total = 0;
  for (int c : channels_) total += 2 * c;
  layers_.emplace_back(params, name + ".fc0", 1, hidden, true, rng);
  layers_.emplace_back(params, name + ".fc1", hidden, hidden, true, rng);
  // Bias 1 keeps both gates open at s_norm = 0 instead of the (0,0) state.
  layers_.emplace_back(params, name + ".fc2", hidden, total, false, rng, 1.0);
}

Tensor ConditionMlp::raw(const Tensor& s_norm) const {
  if (s_norm.ndim() != 2 || s_norm.dim(1) != 1)
    throw InvalidArgument("condition_mlp: s_norm must be [N,1], got " + to_string(s_norm.shape()));
  Tensor x = s_norm;
  for (const auto& layer : layers_) x = layer(x);
  return x;
}

ScalingVectors ConditionMlp::operator()(const Tensor& s_norm) const {
  const Tensor r = raw(s_norm);
  ScalingVectors out;
  out.l = l_;
  std::int64_t off = 0;
  for (int c : channels_) {
    const Tensor r1 = ops::slice_cols(r, off, off + c);
    const Tensor r2 = ops::slice_cols(r, off + c, off + 2 * c);
    off += 2 * c;
    auto [enc, gen] = normalize_sigma(r1, r2);
    out.enc.push_back(enc);
    out.gen.push_back(gen);
  }
  return out;
}

namespace {

std::vector<int> level_channels(const ModelConfig& config) {
  std::vector<int> out;
  for (int i = config.l(); i <= config.u; ++i) out.push_back(config.chan(i));
  return out;
}

}  // namespace

Generator::Generator(const ModelConfig& config, ParamSet& params, Rng& rng)
    : u_(config.u),
      l_(config.l()),
      mlp_(params, "gen.mlp", config.l(), level_channels(config), rng) {
  const int d_w = config.d_w;
  modulated_.emplace_back(params, "gen.mod" + std::to_string(l_), config.chan(l_), config.chan(l_),
                          3, d_w, true, true, rng);
  for (int i = l_ + 1; i <= u_; ++i) {
    const std::string base = "gen.mod" + std::to_string(i);
    modulated_.emplace_back(params, base + "_1", config.chan(i - 1), config.chan(i), 3, d_w, true,
                            true, rng);
    modulated_.emplace_back(params, base + "_2", config.chan(i), config.chan(i), 3, d_w, true,
                            true, rng);
  }
  for (int i = l_; i <= u_; ++i)
    skip_convs_.emplace_back(params, "gen.skip" + std::to_string(i), config.chan(i),
                             config.chan(i), 3, 1, true, rng);
  for (int i = l_; i <= u_; ++i)
    trgbs_.emplace_back(params, "gen.trgb" + std::to_string(i), config.chan(i), 3, 1, 1, false,
                        rng);
}

Tensor Generator::style_modulation_step(int level, const Tensor& prev, const LatentCodes& latents,
                                        const NoiseFields* noise) const {
  if (level < l_ || level > u_)
    throw InvalidArgument("style_modulation_step: level " + std::to_string(level) +
                          " outside [" + std::to_string(l_) + ", " + std::to_string(u_) + "]");
  const int first = latent_index(level);
  const int needed = level == l_ ? 1 : 2;
  if (static_cast<int>(latents.size()) < first + needed)
    throw InvalidArgument("style_modulation_step: missing latent vector " +
                          std::to_string(first + needed - 1) + " for level " +
                          std::to_string(level));
  auto noise_for = [&](int j) {
    if (!noise || static_cast<int>(noise->size()) <= j) return Tensor();
    return (*noise)[static_cast<std::size_t>(j)];
  };
  auto idx = [](int j) { return static_cast<std::size_t>(j); };
  if (level == l_) return modulated_[0](prev, latents[0], noise_for(0));
  const Tensor up = ops::upsample2x(prev, ops::UpsampleMode::nearest);
  const Tensor g1 = modulated_[idx(first)](up, latents[idx(first)], noise_for(first));
  return modulated_[idx(first + 1)](g1, latents[idx(first + 1)], noise_for(first + 1));
}

Tensor Generator::feature_modulation(int level, const Tensor& f, const Tensor& g,
                                     const ScalingVectors& sigma) const {
  if (!f.defined() || !g.defined())
    throw InvalidArgument("feature_modulation: level " + std::to_string(level) +
                          " needs both encoder and generated features");
  const Tensor skip = skip_conv(level)(f);
  if (skip.shape() != g.shape())
    throw InvalidArgument("feature_modulation: Conv(f) shape " + to_string(skip.shape()) +
                          " differs from g shape " + to_string(g.shape()));
  return ops::add(ops::scale_channels(skip, sigma.enc_at(level)),
                  ops::scale_channels(g, sigma.gen_at(level)));
}

Tensor Generator::trgb(int level, const Tensor& h) const {
  return trgbs_[static_cast<std::size_t>(level - l_)](h);
}

Tensor Generator::trgb_output(std::span<const Tensor> h) const {
  if (h.empty() || static_cast<int>(h.size()) > u_ - l_ + 1)
    throw InvalidArgument("trgb_output: expected 1.." + std::to_string(u_ - l_ + 1) + " levels");
  Tensor y = trgb(l_, h[0]);
  for (std::size_t j = 1; j < h.size(); ++j)
    y = ops::add(ops::upsample2x(y, ops::UpsampleMode::bilinear),
                 trgb(l_ + static_cast<int>(j), h[j]));
  return y;
}

}  // namespace gcfsr
