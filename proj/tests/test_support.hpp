#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "gcfsr/config.hpp"
#include "gcfsr/gradcheck.hpp"
#include "gcfsr/ops.hpp"
#include "gcfsr/rng.hpp"
#include "gcfsr/tensor.hpp"

namespace gcfsr::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, DType dtype = DType::f64,
                            double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(static_cast<std::size_t>(numel(shape)));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from_values(std::move(shape), v, dtype);
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  auto x = a.to_vector();
  auto y = b.to_vector();
  double m = 0;
  for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(x[i] - y[i]));
  return m;
}

inline bool bit_identical(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && a.to_vector() == b.to_vector();
}

// Reduces any tensor to a scalar through a fixed random projection so that
// every output element carries a distinct weight in the gradient.
inline Tensor project(const Tensor& t, std::uint64_t seed = 99) {
  Rng rng(seed);
  return ops::sum(ops::mul(t, random_tensor(t.shape(), rng, t.dtype())));
}

// u=4 model small enough for exhaustive finite differences.
inline ModelConfig micro_config() {
  ModelConfig c;
  c.u = 4;
  c.factors = {2, 4};
  c.c_base = 4;
  c.c_max = 8;
  c.d_w = 4;
  c.batch_size = 2;
  return c;
}

// Direct quadruple-loop cross-correlation with zero padding.
inline std::vector<double> naive_conv2d(const Tensor& x, const Tensor& w,
                                        const std::vector<double>& bias,
                                        int stride, int pad) {
  const auto N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const auto O = w.dim(0), k = w.dim(2);
  const auto Ho = (H + 2 * pad - k) / stride + 1, Wo = (W + 2 * pad - k) / stride + 1;
  auto xv = x.to_vector();
  auto wv = w.to_vector();
  std::vector<double> out(static_cast<std::size_t>(N * O * Ho * Wo));
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t o = 0; o < O; ++o)
      for (std::int64_t oy = 0; oy < Ho; ++oy)
        for (std::int64_t ox = 0; ox < Wo; ++ox) {
          double acc = bias.empty() ? 0.0 : bias[static_cast<std::size_t>(o)];
          for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t ky = 0; ky < k; ++ky)
              for (std::int64_t kx = 0; kx < k; ++kx) {
                const auto iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                acc += xv[static_cast<std::size_t>(((n * C + c) * H + iy) * W + ix)] *
                       wv[static_cast<std::size_t>(((o * C + c) * k + ky) * k + kx)];
              }
          out[static_cast<std::size_t>(((n * O + o) * Ho + oy) * Wo + ox)] = acc;
        }
  return out;
}

}  // namespace gcfsr::testing
