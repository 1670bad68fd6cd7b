#pragma once

#include <cstdint>
#include <vector>

#include "gcfsr/config.hpp"
#include "gcfsr/nn.hpp"

namespace gcfsr {

// mean(softplus(-real)) + mean(softplus(fake)).
Tensor adv_loss_d(const Tensor& logits_real, const Tensor& logits_fake);
// mean(softplus(-fake)).
Tensor adv_loss_g(const Tensor& logits_fake);
// Mean absolute error over all elements.
Tensor l1_loss(const Tensor& pred, const Tensor& target);

// Fixed random conv stack standing in for a pretrained perceptual network.
// Four conv blocks (3->16 stride 1, 16->32, 32->64, 64->64 stride 2), tapped
// after each block. Parameters never require gradients.
class FeatureExtractor {
 public:
  explicit FeatureExtractor(std::uint64_t seed = 20220601, DType dtype = DType::f32);
  FeatureExtractor(const FeatureExtractor&) = delete;
  FeatureExtractor& operator=(const FeatureExtractor&) = delete;

  std::vector<Tensor> taps(const Tensor& img) const;
  DType dtype() const { return params_.dtype(); }

 private:
  ParamSet params_;
  std::vector<EqualizedConv> blocks_;
};

// Σ over taps of mean |φ(pred) - φ(target)|; target features carry no grad.
Tensor perceptual_loss(const Tensor& pred, const Tensor& target, const FeatureExtractor& phi);

struct GeneratorLoss {
  Tensor total;
  Tensor l1;
  Tensor perc;
  Tensor adv;
};

// λ_l1·L1 + λ_perc·perc + λ_adv·adv_g; components with zero weight are still
// computed for logging except the adversarial term when logits are undefined.
GeneratorLoss generator_loss(const Tensor& pred, const Tensor& target, const Tensor& logits_fake,
                             const FeatureExtractor& phi, const LossWeights& w);
// λ_adv·adv_d.
Tensor discriminator_loss(const Tensor& logits_real, const Tensor& logits_fake,
                          const LossWeights& w);

}  // namespace gcfsr
