#include "gcfsr/model.hpp"

#include "gcfsr/errors.hpp"

namespace gcfsr {

namespace {

Rng& init_rng(std::uint64_t seed) {
  thread_local Rng rng;
  rng = Rng(seed);
  return rng;
}

}  // namespace

GcfsrModel::GcfsrModel(const ModelConfig& config, std::uint64_t init_seed, DType dtype)
    : config_((config.validate(), config)),
      params_(dtype),
      encoder_(config_, params_, init_rng(init_seed)),
      generator_(config_, params_, init_rng(init_seed ^ 0x5bd1e9955bd1e995ULL)) {
  if (config_.num_latents() != generator_.num_modulated())
    throw InvalidArgument("model: encoder produces " + std::to_string(config_.num_latents()) +
                          " latents but generator consumes " +
                          std::to_string(generator_.num_modulated()));
}

Tensor GcfsrModel::s_norm_tensor(std::int64_t batch, double s_norm) const {
  return Tensor::full({batch, 1}, s_norm, dtype());
}

Tensor GcfsrModel::forward(const Tensor& x_up, double s_norm, const ForwardOptions& opts) const {
  if (x_up.ndim() < 1) throw InvalidArgument("forward: input must be [N,3,H,W]");
  return forward(x_up, s_norm_tensor(x_up.dim(0), s_norm), opts);
}

ForwardTrace GcfsrModel::trace(const Tensor& x_up, const Tensor& s_norm,
                               const ForwardOptions& opts) const {
  const int l = config_.l(), u = config_.u;
  ForwardTrace t;
  t.features = encoder_.encode(x_up);
  const std::int64_t n = x_up.dim(0);
  if (s_norm.ndim() != 2 || s_norm.dim(0) != n || s_norm.dim(1) != 1)
    throw InvalidArgument("forward: s_norm must be [" + std::to_string(n) + ",1], got " +
                          to_string(s_norm.shape()));
  t.latents = opts.latent_override ? *opts.latent_override
                                   : encoder_.estimate_latents(t.features.at(l));
  if (static_cast<int>(t.latents.size()) != generator_.num_modulated())
    throw InvalidArgument("forward: expected " + std::to_string(generator_.num_modulated()) +
                          " latent vectors, got " + std::to_string(t.latents.size()));
  t.sigma = opts.sigma_override ? *opts.sigma_override : generator_.condition_mlp()(s_norm);

  NoiseFields noise;
  if (opts.noise) {
    // Fixed draw order: modulated convs in latent order.
    for (int i = l; i <= u; ++i) {
      const std::int64_t side = std::int64_t{1} << i;
      const int count = i == l ? 1 : 2;
      for (int k = 0; k < count; ++k) {
        Tensor field = Tensor::zeros({n, 1, side, side}, dtype());
        dispatch(dtype(), [&](auto tag) {
          using T = decltype(tag);
          for (auto& v : field.mutable_data<T>()) v = static_cast<T>(opts.noise->normal());
        });
        noise.push_back(field);
      }
    }
  }

  Tensor prev = t.features.at(l);
  for (int i = l; i <= u; ++i) {
    const Tensor g = generator_.style_modulation_step(i, prev, t.latents, opts.noise ? &noise : nullptr);
    const Tensor h = generator_.feature_modulation(i, t.features.at(i), g, t.sigma);
    t.g.push_back(g);
    t.h.push_back(h);
    prev = h;
  }
  t.output = generator_.trgb_output(t.h);
  return t;
}

}  // namespace gcfsr
