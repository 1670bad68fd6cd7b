#pragma once

#include <cstdint>

#include "gcfsr/tensor.hpp"

// Differentiable tensor operations. Every op validates shapes, records
// itself onto the active GradTape when an input requires gradients, and
// rejects non-finite results.
namespace gcfsr::ops {

// Cross-correlation. bias may be undefined.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int stride, int pad);

// input·weightᵀ + bias; bias may be undefined.
Tensor fully_connected(const Tensor& input, const Tensor& weight,
                       const Tensor& bias);

Tensor leaky_relu(const Tensor& input, double slope);

enum class UpsampleMode { nearest, bilinear };
Tensor upsample2x(const Tensor& input, UpsampleMode mode);
Tensor avg_pool2x(const Tensor& input);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);
Tensor square(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor rsqrt(const Tensor& x);
Tensor softplus(const Tensor& x);

// x[N,C,...] * s[N,C], broadcast over trailing dimensions.
Tensor scale_channels(const Tensor& x, const Tensor& s);
// x[N,C,H,W] + b[C].
Tensor add_bias(const Tensor& x, const Tensor& bias);
// x[N,C,H,W] + strength[1] * noise[N,1,H,W]; noise is a constant.
Tensor add_noise(const Tensor& x, const Tensor& noise, const Tensor& strength);

Tensor reshape(const Tensor& x, Shape shape);
// Columns [begin, end) of a 2-D tensor.
Tensor slice_cols(const Tensor& x, std::int64_t begin, std::int64_t end);
// Sum over the last axis.
Tensor sum_last(const Tensor& x);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

}  // namespace gcfsr::ops
