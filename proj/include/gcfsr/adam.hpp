#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gcfsr/tensor.hpp"

namespace gcfsr {

struct AdamConfig {
  double lr = 2e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::int64_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;

  static AdamState zeros_like(std::span<const Tensor> params);
};

// One bias-corrected Adam update, in place on params.
void adam_step(std::span<Tensor> params, std::span<const Tensor> grads,
               AdamState& state, const AdamConfig& config);

}  // namespace gcfsr
