#pragma once

#include <cstdint>
#include <vector>

#include "gcfsr/config.hpp"
#include "gcfsr/nn.hpp"

namespace gcfsr {

// fromRGB, stride-2 conv blocks down to 4x4, flatten, linear -> one logit.
class Discriminator {
 public:
  Discriminator(const ModelConfig& config, std::uint64_t init_seed, DType dtype = DType::f32);
  Discriminator(const Discriminator&) = delete;
  Discriminator& operator=(const Discriminator&) = delete;

  // img: [N,3,2^u,2^u] -> logits [N].
  Tensor operator()(const Tensor& img) const;

  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

 private:
  int u_;
  ParamSet params_;
  EqualizedConv from_rgb_;
  std::vector<EqualizedConv> blocks_;
  EqualizedLinear head_;
};

}  // namespace gcfsr
