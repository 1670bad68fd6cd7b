#include <cmath>
#include <limits>

#include "doctest.h"
#include "gcfsr/errors.hpp"
#include "gcfsr/metrics.hpp"
#include "gcfsr/rng.hpp"

using namespace gcfsr;

namespace {

Image random_image(int side, Rng& rng) {
  Image im(side, side);
  for (auto& v : im.pixels) v = static_cast<float>(rng.uniform());
  return im;
}

Image noisy(const Image& im, double amplitude, std::uint64_t seed) {
  Rng rng(seed);
  Image out = im;
  for (auto& v : out.pixels) v = static_cast<float>(v + amplitude * rng.normal());
  return out;
}

// Direct per-window evaluation, no separable filtering.
double ssim_oracle(const Image& a, const Image& b) {
  double g[11], gs = 0;
  for (int i = 0; i < 11; ++i) gs += g[i] = std::exp(-((i - 5) * (i - 5)) / (2 * 1.5 * 1.5));
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0;
  int windows = 0;
  for (int c = 0; c < 3; ++c) {
    double chan = 0;
    int count = 0;
    for (int y = 0; y + 11 <= a.height; ++y)
      for (int x = 0; x + 11 <= a.width; ++x) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int i = 0; i < 11; ++i)
          for (int j = 0; j < 11; ++j) {
            const double w = g[i] * g[j] / (gs * gs);
            const double va = a.at(c, y + i, x + j), vb = b.at(c, y + i, x + j);
            ma += w * va;
            mb += w * vb;
            saa += w * va * va;
            sbb += w * vb * vb;
            sab += w * va * vb;
          }
        const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
        chan += (2 * ma * mb + c1) * (2 * cov + c2) /
                ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++count;
      }
    total += chan / count;
    ++windows;
  }
  return total / windows;
}

}  // namespace

TEST_CASE("psnr closed-form examples") {
  Rng rng(1);
  auto a = random_image(32, rng);
  CHECK(psnr(a, a) == std::numeric_limits<double>::infinity());

  Image flat(16, 16, 0.25f);
  Image shifted(16, 16, 0.25f + 16.0f / 255.0f);
  CHECK(psnr(flat, shifted) == doctest::Approx(10 * std::log10(255.0 * 255.0 / 256.0)).epsilon(1e-6));
  CHECK(std::abs(psnr(flat, shifted) - 24.05) < 0.01);

  auto b = random_image(32, rng);
  CHECK(psnr(a, b) == psnr(b, a));
  CHECK_THROWS_AS(psnr(a, Image(32, 31)), InvalidArgument);
}

TEST_CASE("psnr decreases with noise amplitude") {
  Rng rng(2);
  auto a = random_image(24, rng);
  double prev = std::numeric_limits<double>::infinity();
  for (double amp : {0.001, 0.005, 0.02, 0.05, 0.1, 0.3}) {
    const double p = psnr(noisy(a, amp, 9), a);
    CHECK(p < prev);
    prev = p;
  }
}

TEST_CASE("ssim of identical images is exactly one") {
  Rng rng(3);
  for (int side : {11, 16, 37}) {
    auto a = random_image(side, rng);
    CHECK(ssim(a, a) == 1.0);
  }
  Image flat(20, 20, 0.5f);
  CHECK(ssim(flat, flat) == 1.0);
}

TEST_CASE("ssim agrees with direct window evaluation") {
  Rng rng(4);
  for (int side : {11, 14, 20}) {
    auto a = random_image(side, rng);
    auto b = noisy(a, 0.1, 17);
    CHECK(std::abs(ssim(a, b) - ssim_oracle(a, b)) < 1e-9);
  }
}

TEST_CASE("ssim properties") {
  Rng rng(5);
  Image checker(32, 32);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) checker.at(c, y, x) = ((x / 2 + y / 2) % 2) ? 0.95f : 0.05f;
  Image inverted = checker;
  for (auto& v : inverted.pixels) v = 1.0f - v;
  CHECK(ssim(checker, inverted) < 0.5);

  auto a = random_image(24, rng);
  auto b = noisy(a, 0.2, 3);
  CHECK(ssim(a, b) == ssim(b, a));
  CHECK(ssim(a, b) < 1.0);
  CHECK(ssim(a, b) >= -1.0);
  CHECK(ssim(a, noisy(a, 0.05, 3)) > ssim(a, b));

  CHECK_THROWS_AS(ssim(Image(10, 10), Image(10, 10)), InvalidArgument);
  CHECK_THROWS_AS(ssim(Image(12, 12), Image(12, 11)), InvalidArgument);
}
