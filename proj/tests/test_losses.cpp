#include <cmath>

#include "doctest.h"
#include "gcfsr/discriminator.hpp"
#include "gcfsr/errors.hpp"
#include "gcfsr/losses.hpp"
#include "gcfsr/model.hpp"
#include "test_support.hpp"

using namespace gcfsr;
using namespace gcfsr::testing;

namespace {

Tensor logits(std::vector<double> v) {
  const auto n = static_cast<std::int64_t>(v.size());
  return Tensor::from({n}, std::move(v));
}

}  // namespace

TEST_CASE("discriminator shape and zero parameters") {
  ModelConfig c;
  Discriminator d(c, 1);
  Rng rng(2);
  for (std::int64_t n : {1, 4}) {
    auto out = d(random_tensor({n, 3, 64, 64}, rng, DType::f32, 0, 1));
    CHECK(out.shape() == Shape{n});
  }
  CHECK_THROWS_AS(d(random_tensor({1, 3, 32, 32}, rng, DType::f32)), InvalidArgument);

  for (auto& t : d.params().tensors()) {
    auto v = t.mutable_data<float>();
    std::fill(v.begin(), v.end(), 0.0f);
  }
  for (double v : d(random_tensor({3, 3, 64, 64}, rng, DType::f32)).to_vector()) CHECK(v == 0.0);
}

TEST_CASE("micro discriminator matches finite differences") {
  auto c = micro_config();
  Discriminator d(c, 3, DType::f64);
  Rng rng(4);
  auto img = random_tensor({2, 3, 16, 16}, rng, DType::f64, 0, 1);
  auto fn = [&](const std::vector<Tensor>& in) { return project(d(in[0]), 5); };
  std::vector<Tensor> inputs{img};
  for (const auto& t : d.params().tensors()) inputs.push_back(t);
  CHECK(grad_check(fn, inputs) < 1e-4);
}

TEST_CASE("adversarial loss values") {
  const double ln2 = std::log(2.0);
  auto z = Tensor::zeros({4}, DType::f64);
  CHECK(std::abs(adv_loss_d(z, z).item() - 2 * ln2) < 1e-9);
  CHECK(std::abs(adv_loss_g(z).item() - ln2) < 1e-9);
  CHECK(adv_loss_d(logits({40, 40}), logits({-40, -40})).item() == doctest::Approx(0).epsilon(1e-12));
  CHECK(adv_loss_d(logits({-40}), logits({40})).item() == doctest::Approx(80));
  CHECK(adv_loss_g(logits({40})).item() < 1e-12);
  CHECK(adv_loss_g(logits({-40})).item() == doctest::Approx(40));
  // Stable far beyond the range where exp overflows.
  CHECK(adv_loss_g(logits({-1e30})).item() == doctest::Approx(1e30));
}

TEST_CASE("stable softplus form matches the literal expression") {
  Rng rng(6);
  double worst = 0;
  for (int t = 0; t < 2000; ++t) {
    const double r = rng.uniform(-20, 20), f = rng.uniform(-20, 20);
    const double literal_d = std::log(1 + std::exp(-r)) + std::log(1 + std::exp(f));
    const double literal_g = std::log(1 + std::exp(-f));
    worst = std::max(worst, std::abs(adv_loss_d(logits({r}), logits({f})).item() - literal_d));
    worst = std::max(worst, std::abs(adv_loss_g(logits({f})).item() - literal_g));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("L1 loss examples and oracle") {
  Rng rng(7);
  auto y = random_tensor({2, 3, 8, 8}, rng, DType::f32, 0, 1);
  CHECK(l1_loss(y, y).item() == 0.0);
  CHECK(l1_loss(ops::add_scalar(y, 0.5), y).item() == doctest::Approx(0.5).epsilon(1e-6));
  for (DType dt : {DType::f32, DType::f64}) {
    auto a = random_tensor({3, 3, 16, 16}, rng, dt, 0, 1);
    auto b = random_tensor({3, 3, 16, 16}, rng, dt, 0, 1);
    auto av = a.to_vector(), bv = b.to_vector();
    double s = 0;
    for (std::size_t i = 0; i < av.size(); ++i) s += std::abs(av[i] - bv[i]);
    CHECK(std::abs(l1_loss(a, b).item() - s / static_cast<double>(av.size())) < 1e-7);
  }
  CHECK_THROWS_AS(l1_loss(y, Tensor::zeros({2, 3, 8, 4})), InvalidArgument);
}

TEST_CASE("perceptual loss") {
  FeatureExtractor phi;
  Rng rng(8);
  auto y = random_tensor({2, 3, 64, 64}, rng, DType::f32, 0, 1);
  auto taps = phi.taps(y);
  REQUIRE(taps.size() == 4);
  CHECK(taps[0].shape() == Shape{2, 16, 64, 64});
  CHECK(taps[3].shape() == Shape{2, 64, 8, 8});
  CHECK(perceptual_loss(y, y, phi).item() == 0.0);
  auto other = random_tensor({2, 3, 64, 64}, rng, DType::f32, 0, 1);
  CHECK(perceptual_loss(other, y, phi).item() > 0.0);
  FeatureExtractor again;
  CHECK(perceptual_loss(other, y, again).item() == perceptual_loss(other, y, phi).item());
}

TEST_CASE("total objectives") {
  FeatureExtractor phi;
  Rng rng(9);
  auto y = random_tensor({2, 3, 32, 32}, rng, DType::f32, 0, 1);
  auto z = Tensor::zeros({2});
  auto lg = generator_loss(y, y, z, phi, LossWeights{});
  CHECK(lg.total.item() == doctest::Approx(0.01 * std::log(2.0)).epsilon(1e-6));

  auto pred = random_tensor({2, 3, 32, 32}, rng, DType::f32, 0, 1);
  auto fake = Tensor::from({2}, std::vector<float>{0.3f, -1.2f});
  auto real = Tensor::from({2}, std::vector<float>{2.0f, 0.1f});
  auto parts = generator_loss(pred, y, fake, phi, LossWeights{1, 0.01, 0.01});
  const double hand = 1 * parts.l1.item() + 0.01 * parts.perc.item() + 0.01 * parts.adv.item();
  CHECK(parts.total.item() == doctest::Approx(hand).epsilon(1e-6));
  CHECK(discriminator_loss(real, fake, LossWeights{}).item() ==
        doctest::Approx(0.01 * adv_loss_d(real, fake).item()).epsilon(1e-6));

  ModelConfig adv;
  adv.adversarial_only = true;
  auto only = generator_loss(pred, y, fake, phi, adv.loss_weights());
  CHECK(only.total.item() == doctest::Approx(0.01 * only.adv.item()).epsilon(1e-6));
  CHECK(only.l1.item() > 0);
}

TEST_CASE("loss gradients match finite differences on micro models") {
  auto c = micro_config();
  GcfsrModel g(c, 10, DType::f64);
  Discriminator d(c, 11, DType::f64);
  FeatureExtractor phi(12, DType::f64);
  Rng rng(13);
  auto x = random_tensor({2, 3, 16, 16}, rng, DType::f64, 0, 1);
  auto y = random_tensor({2, 3, 16, 16}, rng, DType::f64, 0, 1);
  const LossWeights w{1.0, 0.5, 0.5};

  auto lg = [&](const std::vector<Tensor>&) {
    auto pred = g.forward(x, 0.5);
    return generator_loss(pred, y, d(pred), phi, w).total;
  };
  d.params().set_requires_grad(false);
  CHECK(grad_check(lg, g.params().tensors()) < 1e-4);
  d.params().set_requires_grad(true);

  auto fake = g.forward(x, 0.5).detach();
  auto ld = [&](const std::vector<Tensor>&) { return discriminator_loss(d(y), d(fake), w); };
  CHECK(grad_check(ld, d.params().tensors()) < 1e-4);
}
