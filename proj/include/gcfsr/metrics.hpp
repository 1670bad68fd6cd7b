#pragma once

#include "gcfsr/image.hpp"

namespace gcfsr {

// 10·log10(1/MSE) over all channels on [0,1] data; +infinity for identical
// images.
double psnr(const Image& a, const Image& b);

// Mean SSIM over the valid 11×11 Gaussian (σ = 1.5) windows of each channel,
// K1 = 0.01, K2 = 0.03, dynamic range 1, averaged over channels.
double ssim(const Image& a, const Image& b);

}  // namespace gcfsr
