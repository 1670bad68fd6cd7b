#pragma once

#include <span>
#include <vector>

#include "gcfsr/config.hpp"
#include "gcfsr/encoder.hpp"
#include "gcfsr/nn.hpp"

namespace gcfsr {

// Upscaling factor and its [0,1] normalization over [s_min, s_max].
struct ConditionFactor {
  double s_raw = 0;
  double s_norm = 0;

  // Factors outside [s_min, s_max] are clamped with a warning.
  static ConditionFactor from_raw(double s, double s_min, double s_max,
                                  SNormMode mode = SNormMode::log);
  static ConditionFactor from_raw(double s, const ModelConfig& config) {
    return from_raw(s, config.s_min(), config.s_max(), config.s_norm_mode);
  }
};

// Per-level channel gates (σ_enc, σ_gen), each [N,chan(i)].
struct ScalingVectors {
  int l = 0;
  std::vector<Tensor> enc;  // enc[i - l]
  std::vector<Tensor> gen;

  const Tensor& enc_at(int level) const;
  const Tensor& gen_at(int level) const;
};

struct SigmaPair {
  Tensor enc;
  Tensor gen;
};

// σ_enc = |r1| / sqrt(r1² + r2² + 1e-8), σ_gen likewise with |r2|.
SigmaPair normalize_sigma(const Tensor& raw1, const Tensor& raw2);

// s_norm -> 64 -> 64 -> Σ_i 2·chan(i), leaky ReLU between layers. The raw
// output holds, per level from l to u, chan(i) values of r1 then chan(i) of r2.
class ConditionMlp {
 public:
  ConditionMlp(ParamSet& params, const std::string& name, int l, std::vector<int> channels,
               Rng& rng, int hidden = 64);

  // s_norm: [N,1].
  Tensor raw(const Tensor& s_norm) const;
  ScalingVectors operator()(const Tensor& s_norm) const;
  const std::vector<EqualizedLinear>& layers() const { return layers_; }

 private:
  int l_;
  std::vector<int> channels_;  // channels_[i - l]
  std::vector<EqualizedLinear> layers_;
};

// One unit-normal noise field per modulated conv; undefined entries mean no
// noise for that layer.
using NoiseFields = std::vector<Tensor>;

class Generator {
 public:
  Generator(const ModelConfig& config, ParamSet& params, Rng& rng);

  int l() const { return l_; }
  int u() const { return u_; }
  int num_modulated() const { return 2 * (u_ - l_) + 1; }
  // Latent index consumed first at a level.
  int latent_index(int level) const { return level == l_ ? 0 : 2 * (level - l_) - 1; }

  const ConditionMlp& condition_mlp() const { return mlp_; }

  // g^(l) = Conv_sm(f^(l), w^(l)); g^(i) = Conv_sm(Conv_sm(↑₂(h^(i-1)), w1), w2).
  Tensor style_modulation_step(int level, const Tensor& prev, const LatentCodes& latents,
                               const NoiseFields* noise = nullptr) const;
  // h^(i) = σ_enc ⊙ Conv(f^(i)) + σ_gen ⊙ g^(i).
  Tensor feature_modulation(int level, const Tensor& f, const Tensor& g,
                            const ScalingVectors& sigma) const;
  Tensor trgb(int level, const Tensor& h) const;
  // ŷ^(l) = tRGB(h^(l)); ŷ^(i) = ↑₂(ŷ^(i-1)) + tRGB(h^(i)). h[i - l].
  Tensor trgb_output(std::span<const Tensor> h) const;

  // Modulated convs in latent order.
  const std::vector<ModulatedConv>& modulated() const { return modulated_; }
  const EqualizedConv& skip_conv(int level) const { return skip_convs_[static_cast<std::size_t>(level - l_)]; }

 private:
  int u_, l_;
  ConditionMlp mlp_;
  std::vector<ModulatedConv> modulated_;
  std::vector<EqualizedConv> skip_convs_;  // Conv after each f^(i)
  std::vector<EqualizedConv> trgbs_;
};

}  // namespace gcfsr
