#pragma once

#include <cstdint>

#include "gcfsr/config.hpp"
#include "gcfsr/encoder.hpp"
#include "gcfsr/generator.hpp"

namespace gcfsr {

struct ForwardOptions {
  // Draws one noise field per modulated conv; nullptr disables noise.
  Rng* noise = nullptr;
  // Replace the condition MLP output or the estimated latents.
  const ScalingVectors* sigma_override = nullptr;
  const LatentCodes* latent_override = nullptr;
};

struct ForwardTrace {
  EncoderFeatures features;
  LatentCodes latents;
  ScalingVectors sigma;
  std::vector<Tensor> g;  // g[i - l]
  std::vector<Tensor> h;
  Tensor output;
};

// Encoder plus generator: G(x_up, s) -> ŷ.
class GcfsrModel {
 public:
  GcfsrModel(const ModelConfig& config, std::uint64_t init_seed, DType dtype = DType::f32);
  GcfsrModel(const GcfsrModel&) = delete;
  GcfsrModel& operator=(const GcfsrModel&) = delete;

  const ModelConfig& config() const { return config_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  const Encoder& encoder() const { return encoder_; }
  const Generator& generator() const { return generator_; }
  DType dtype() const { return params_.dtype(); }

  // s_norm: [N,1].
  ForwardTrace trace(const Tensor& x_up, const Tensor& s_norm, const ForwardOptions& opts = {}) const;
  Tensor forward(const Tensor& x_up, const Tensor& s_norm, const ForwardOptions& opts = {}) const {
    return trace(x_up, s_norm, opts).output;
  }
  // Same s_norm for every sample.
  Tensor forward(const Tensor& x_up, double s_norm, const ForwardOptions& opts = {}) const;
  Tensor s_norm_tensor(std::int64_t batch, double s_norm) const;

 private:
  ModelConfig config_;
  ParamSet params_;
  Encoder encoder_;
  Generator generator_;
};

}  // namespace gcfsr
