#include "gcfsr/losses.hpp"

#include "gcfsr/errors.hpp"
#include "gcfsr/ops.hpp"

namespace gcfsr {

namespace {

void require_logits(const Tensor& t, const char* what) {
  if (!t.defined() || t.ndim() != 1)
    throw InvalidArgument(std::string(what) + ": logits must be 1-D [N]");
}

}  // namespace

Tensor adv_loss_d(const Tensor& logits_real, const Tensor& logits_fake) {
  require_logits(logits_real, "adv_loss_d");
  require_logits(logits_fake, "adv_loss_d");
  return ops::add(ops::mean(ops::softplus(ops::scale(logits_real, -1.0))),
                  ops::mean(ops::softplus(logits_fake)));
}

Tensor adv_loss_g(const Tensor& logits_fake) {
  require_logits(logits_fake, "adv_loss_g");
  return ops::mean(ops::softplus(ops::scale(logits_fake, -1.0)));
}

Tensor l1_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape())
    throw InvalidArgument("l1_loss: shape mismatch " + to_string(pred.shape()) + " vs " +
                          to_string(target.shape()));
  return ops::mean(ops::abs(ops::sub(pred, target)));
}

FeatureExtractor::FeatureExtractor(std::uint64_t seed, DType dtype) : params_(dtype) {
  Rng rng(seed);
  const int spec[4][3] = {{3, 16, 1}, {16, 32, 2}, {32, 64, 2}, {64, 64, 2}};
  for (int b = 0; b < 4; ++b)
    blocks_.emplace_back(params_, "phi.block" + std::to_string(b), spec[b][0], spec[b][1], 3,
                         spec[b][2], true, rng);
  params_.set_requires_grad(false);
}

std::vector<Tensor> FeatureExtractor::taps(const Tensor& img) const {
  if (img.ndim() != 4 || img.dim(1) != 3)
    throw InvalidArgument("feature extractor: input must be [N,3,H,W], got " + to_string(img.shape()));
  std::vector<Tensor> out;
  Tensor x = img;
  for (const auto& b : blocks_) {
    x = b(x);
    out.push_back(x);
  }
  return out;
}

Tensor perceptual_loss(const Tensor& pred, const Tensor& target, const FeatureExtractor& phi) {
  if (pred.shape() != target.shape())
    throw InvalidArgument("perceptual_loss: shape mismatch " + to_string(pred.shape()) + " vs " +
                          to_string(target.shape()));
  const auto fp = phi.taps(pred);
  const auto ft = phi.taps(target.detach());
  Tensor total;
  for (std::size_t k = 0; k < fp.size(); ++k) {
    const Tensor term = ops::mean(ops::abs(ops::sub(fp[k], ft[k])));
    total = total.defined() ? ops::add(total, term) : term;
  }
  return total;
}

GeneratorLoss generator_loss(const Tensor& pred, const Tensor& target, const Tensor& logits_fake,
                             const FeatureExtractor& phi, const LossWeights& w) {
  GeneratorLoss out;
  out.l1 = l1_loss(pred, target);
  out.perc = perceptual_loss(pred, target, phi);
  out.total = ops::add(ops::scale(out.l1, w.l1), ops::scale(out.perc, w.perc));
  if (logits_fake.defined()) {
    out.adv = adv_loss_g(logits_fake);
    out.total = ops::add(out.total, ops::scale(out.adv, w.adv));
  }
  return out;
}

Tensor discriminator_loss(const Tensor& logits_real, const Tensor& logits_fake,
                          const LossWeights& w) {
  return ops::scale(adv_loss_d(logits_real, logits_fake), w.adv);
}

}  // namespace gcfsr
