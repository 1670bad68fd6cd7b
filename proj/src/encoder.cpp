#include "gcfsr/encoder.hpp"

#include "gcfsr/errors.hpp"
#include "gcfsr/ops.hpp"

namespace gcfsr {

const Tensor& EncoderFeatures::at(int level) const {
  if (level < l || level > u())
    throw InvalidArgument("EncoderFeatures: no level " + std::to_string(level));
  return levels[static_cast<std::size_t>(level - l)];
}

Encoder::Encoder(const ModelConfig& config, ParamSet& params, Rng& rng)
    : u_(config.u), l_(config.l()), d_w_(config.d_w), num_latents_(config.num_latents()) {
  for (int i = u_; i >= l_; --i) {
    const int in = i == u_ ? 3 : config.chan(i + 1);
    level_convs_.emplace_back(params, "enc.f" + std::to_string(i), in, config.chan(i), 3,
                              i == u_ ? 1 : 2, true, rng);
  }
  const int c = config.chan(l_);
  for (int j = 0; j < l_; ++j)
    latent_convs_.emplace_back(params, "enc.latent_conv" + std::to_string(j), c, c, 3, 2, true, rng);
  latent_fc_ = EqualizedLinear(params, "enc.latent_fc", c, num_latents_ * d_w_, false, rng);
}

EncoderFeatures Encoder::encode(const Tensor& x_up) const {
  const std::int64_t side = std::int64_t{1} << u_;
  if (x_up.ndim() != 4 || x_up.dim(1) != 3 || x_up.dim(2) != side || x_up.dim(3) != side)
    throw InvalidArgument("encode: input must be [N,3," + std::to_string(side) + "," +
                          std::to_string(side) + "], got " + to_string(x_up.shape()));
  EncoderFeatures out;
  out.l = l_;
  out.levels.resize(static_cast<std::size_t>(u_ - l_ + 1));
  Tensor f = x_up;
  for (int i = u_; i >= l_; --i) {
    f = level_conv(i)(f);
    out.levels[static_cast<std::size_t>(i - l_)] = f;
  }
  return out;
}

LatentCodes Encoder::estimate_latents(const Tensor& f_l) const {
  const std::int64_t side = std::int64_t{1} << l_;
  const std::int64_t c = latent_fc_.weight.dim(1);
  if (f_l.ndim() != 4 || f_l.dim(1) != c || f_l.dim(2) != side || f_l.dim(3) != side)
    throw InvalidArgument("estimate_latents: input must be [N," + std::to_string(c) + "," +
                          std::to_string(side) + "," + std::to_string(side) + "], got " +
                          to_string(f_l.shape()));
  Tensor x = f_l;
  for (const auto& conv : latent_convs_) x = conv(x);
  const Tensor flat = latent_fc_(ops::reshape(x, {x.dim(0), c}));
  LatentCodes codes;
  for (int j = 0; j < num_latents_; ++j)
    codes.push_back(ops::slice_cols(flat, std::int64_t{j} * d_w_, std::int64_t{j + 1} * d_w_));
  return codes;
}

}  // namespace gcfsr
