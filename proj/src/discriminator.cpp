#include "gcfsr/discriminator.hpp"

#include <algorithm>

#include "gcfsr/errors.hpp"
#include "gcfsr/ops.hpp"

namespace gcfsr {

namespace {

// Channel width at a spatial level; below the generator's coarsest level the
// width stays at c_max.
int width(const ModelConfig& c, int level) {
  const long long w = static_cast<long long>(c.c_base) << (c.u - level);
  return static_cast<int>(std::min<long long>(c.c_max, w));
}

}  // namespace

Discriminator::Discriminator(const ModelConfig& config, std::uint64_t init_seed, DType dtype)
    : u_(config.u), params_(dtype) {
  config.validate();
  Rng rng(init_seed);
  from_rgb_ = EqualizedConv(params_, "disc.from_rgb", 3, width(config, u_), 1, 1, true, rng);
  for (int i = u_; i > 2; --i)
    blocks_.emplace_back(params_, "disc.block" + std::to_string(i), width(config, i),
                         width(config, i - 1), 3, 2, true, rng);
  head_ = EqualizedLinear(params_, "disc.head", width(config, 2) * 16, 1, false, rng);
}

Tensor Discriminator::operator()(const Tensor& img) const {
  const std::int64_t side = std::int64_t{1} << u_;
  if (img.ndim() != 4 || img.dim(1) != 3 || img.dim(2) != side || img.dim(3) != side)
    throw InvalidArgument("discriminate: input must be [N,3," + std::to_string(side) + "," +
                          std::to_string(side) + "], got " + to_string(img.shape()));
  Tensor x = from_rgb_(img);
  for (const auto& b : blocks_) x = b(x);
  const std::int64_t n = x.dim(0);
  const Tensor logits = head_(ops::reshape(x, {n, x.dim(1) * x.dim(2) * x.dim(3)}));
  return ops::reshape(logits, {n});
}

}  // namespace gcfsr
