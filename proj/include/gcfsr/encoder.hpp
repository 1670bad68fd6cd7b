#pragma once

#include <vector>

#include "gcfsr/config.hpp"
#include "gcfsr/nn.hpp"

namespace gcfsr {

// Feature pyramid f^(i), l <= i <= u; level i has side 2^i.
struct EncoderFeatures {
  int l = 0;
  std::vector<Tensor> levels;  // levels[i - l]

  int u() const { return l + static_cast<int>(levels.size()) - 1; }
  const Tensor& at(int level) const;
};

// [w^(l), w^(l+1)_1, w^(l+1)_2, ..., w^(u)_1, w^(u)_2], each [N,d_w].
using LatentCodes = std::vector<Tensor>;

class Encoder {
 public:
  Encoder(const ModelConfig& config, ParamSet& params, Rng& rng);

  // x_up: [N,3,2^u,2^u].
  EncoderFeatures encode(const Tensor& x_up) const;
  // f_l: [N,chan(l),2^l,2^l].
  LatentCodes estimate_latents(const Tensor& f_l) const;

  // Level i conv producing f^(i) (stride 1 at u, stride 2 below).
  const EqualizedConv& level_conv(int level) const { return level_convs_[static_cast<std::size_t>(u_ - level)]; }
  const std::vector<EqualizedConv>& latent_convs() const { return latent_convs_; }
  const EqualizedLinear& latent_fc() const { return latent_fc_; }

 private:
  int u_, l_, d_w_, num_latents_;
  std::vector<EqualizedConv> level_convs_;  // index u - level
  std::vector<EqualizedConv> latent_convs_;
  EqualizedLinear latent_fc_;
};

}  // namespace gcfsr
