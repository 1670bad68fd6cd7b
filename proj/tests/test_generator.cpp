#include <cmath>

#include "doctest.h"
#include "gcfsr/errors.hpp"
#include "gcfsr/log.hpp"
#include "gcfsr/model.hpp"
#include "test_support.hpp"

using namespace gcfsr;
using namespace gcfsr::testing;

namespace {

void fill(Tensor& t, double value) {
  dispatch(t.dtype(), [&](auto tag) {
    using T = decltype(tag);
    for (auto& v : t.mutable_data<T>()) v = static_cast<T>(value);
  });
}

void fill_normal(Tensor& t, Rng& rng, double std = 1.0) {
  dispatch(t.dtype(), [&](auto tag) {
    using T = decltype(tag);
    for (auto& v : t.mutable_data<T>()) v = static_cast<T>(std * rng.normal());
  });
}

double l2(const Tensor& t) {
  double s = 0;
  for (double v : t.to_vector()) s += v * v;
  return std::sqrt(s);
}

ScalingVectors constant_sigma(const ModelConfig& c, std::int64_t n, double enc, double gen,
                              DType dtype = DType::f32) {
  ScalingVectors s;
  s.l = c.l();
  for (int i = c.l(); i <= c.u; ++i) {
    s.enc.push_back(Tensor::full({n, c.chan(i)}, enc, dtype));
    s.gen.push_back(Tensor::full({n, c.chan(i)}, gen, dtype));
  }
  return s;
}

}  // namespace

TEST_CASE("condition factor normalization") {
  auto a = ConditionFactor::from_raw(2, 2, 16);
  auto b = ConditionFactor::from_raw(16, 2, 16);
  auto mid = ConditionFactor::from_raw(4, 2, 16);
  CHECK(a.s_norm == 0.0);
  CHECK(b.s_norm == 1.0);
  CHECK(mid.s_norm == doctest::Approx(1.0 / 3.0));
  CHECK(ConditionFactor::from_raw(9, 2, 16, SNormMode::linear).s_norm == doctest::Approx(0.5));

  int warnings = 0;
  auto prev = set_warning_sink([&](std::string_view) { ++warnings; });
  auto hi = ConditionFactor::from_raw(9999, 2, 16);
  auto lo = ConditionFactor::from_raw(1, 2, 16);
  set_warning_sink(prev);
  CHECK(warnings == 2);
  CHECK(hi.s_raw == 16.0);
  CHECK(hi.s_norm == 1.0);
  CHECK(lo.s_norm == 0.0);
  CHECK_THROWS_AS(ConditionFactor::from_raw(std::nan(""), 2, 16), InvalidArgument);
}

TEST_CASE("sigma normalization examples") {
  auto pair = [](double r1, double r2) {
    auto s = normalize_sigma(Tensor::from({1, 1}, std::vector<double>{r1}),
                             Tensor::from({1, 1}, std::vector<double>{r2}));
    return std::pair{s.enc.item(), s.gen.item()};
  };
  for (double c : {0.3, 1.0, 7.5}) {
    auto [e, g] = pair(c, c);
    CHECK(std::abs(e - 1 / std::sqrt(2.0)) < 1e-6);
    CHECK(std::abs(g - 1 / std::sqrt(2.0)) < 1e-6);
  }
  auto [e1, g1] = pair(1, 0);
  CHECK(e1 == doctest::Approx(1.0));
  CHECK(g1 == 0.0);
  auto [e0, g0] = pair(0, 0);
  CHECK(e0 == 0.0);
  CHECK(g0 == 0.0);
  auto [en, gn] = pair(-3, 4);
  CHECK(en == doctest::Approx(0.6));
  CHECK(gn == doctest::Approx(0.8));
}

TEST_CASE("scaling vector invariant over random MLP parameterizations") {
  const std::vector<int> channels{8, 8, 4};
  Rng rng(11);
  int checked = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    ParamSet params(DType::f64);
    Rng init(1000 + static_cast<std::uint64_t>(trial));
    ConditionMlp mlp(params, "mlp", 2, channels, init);
    for (auto& t : params.tensors()) fill_normal(t, rng, trial % 2 ? 1.0 : 3.0);
    const double s = rng.uniform();
    const Tensor sn = Tensor::from({1, 1}, std::vector<double>{s});
    const auto raw = mlp.raw(sn).to_vector();
    const auto sigma = mlp(sn);
    std::size_t off = 0;
    for (std::size_t lvl = 0; lvl < channels.size(); ++lvl) {
      const auto enc = sigma.enc[lvl].to_vector();
      const auto gen = sigma.gen[lvl].to_vector();
      const auto c = static_cast<std::size_t>(channels[lvl]);
      for (std::size_t j = 0; j < c; ++j) {
        CHECK(enc[j] >= 0);
        CHECK(gen[j] >= 0);
        const double r1 = raw[off + j], r2 = raw[off + c + j];
        const double q = enc[j] * enc[j] + gen[j] * gen[j];
        CHECK(q <= 1.0);
        if (r1 * r1 + r2 * r2 >= 1e-2) {
          CHECK(q >= 1 - 1e-6);
          ++checked;
        }
      }
      off += 2 * c;
    }
  }
  CHECK(checked > 10000);
}

TEST_CASE("default MLP gates are open at both ends of the range") {
  ModelConfig c;
  GcfsrModel m(c, 12);
  for (double s : {0.0, 1.0}) {
    auto sigma = m.generator().condition_mlp()(m.s_norm_tensor(1, s));
    for (std::size_t lvl = 0; lvl < sigma.enc.size(); ++lvl) {
      const auto e = sigma.enc[lvl].to_vector();
      const auto g = sigma.gen[lvl].to_vector();
      for (std::size_t j = 0; j < e.size(); ++j) CHECK(e[j] * e[j] + g[j] * g[j] > 0.99);
    }
  }
}

TEST_CASE("unit style without demodulation is a plain conv") {
  ParamSet params;
  Rng rng(13);
  ModulatedConv mc(params, "m", 5, 7, 3, 6, false, false, rng);
  fill(mc.affine.weight, 0.0);
  fill_normal(mc.bias, rng);
  auto x = random_tensor({2, 5, 9, 9}, rng, DType::f32);
  auto w = random_tensor({2, 6}, rng, DType::f32);
  auto out = mc(x, w, Tensor());
  auto ref = ops::conv2d(x, mc.effective_weight(), mc.bias, 1, 1);
  CHECK(bit_identical(out, ref));
}

TEST_CASE("single-channel demodulation closed form") {
  for (double s : {0.01, 0.5, 3.0, 40.0}) {
    ParamSet params(DType::f64);
    Rng rng(14);
    ModulatedConv mc(params, "m", 1, 1, 1, 1, true, false, rng);
    fill(mc.affine.weight, 0.0);
    fill(mc.affine.bias, s);
    const double wn = std::abs(mc.effective_weight().item());
    // Output for a unit input equals the effective demodulated kernel.
    auto out = mc(Tensor::full({1, 1, 1, 1}, 1.0, DType::f64), Tensor::zeros({1, 1}, DType::f64), Tensor());
    const double expected = s * wn / std::sqrt(s * s * wn * wn + 1e-8);
    CHECK(std::abs(std::abs(out.item()) - expected) < 1e-9);
    if (s * wn > 0.1) CHECK(std::abs(std::abs(out.item()) - 1.0) < 1e-4);
  }
}

TEST_CASE("demodulated conv preserves unit variance") {
  ParamSet params;
  Rng rng(15);
  const int C = 16, O = 8, side = 104;
  ModulatedConv mc(params, "m", C, O, 3, 8, true, false, rng);
  auto x = Tensor::zeros({1, C, side, side});
  fill_normal(x, rng);
  auto latent = Tensor::zeros({1, 8});
  fill_normal(latent, rng);
  auto y = mc(x, latent, Tensor()).to_vector();
  for (int o = 0; o < O; ++o) {
    double s = 0, s2 = 0;
    int n = 0;
    for (int r = 1; r < side - 1; ++r)
      for (int q = 1; q < side - 1; ++q) {
        const double v = y[static_cast<std::size_t>((o * side + r) * side + q)];
        s += v;
        s2 += v * v;
        ++n;
      }
    CHECK(n >= 10000);
    const double mean = s / n;
    const double sd = std::sqrt(s2 / n - mean * mean);
    CHECK(sd >= 0.9);
    CHECK(sd <= 1.1);
  }
}

TEST_CASE("style modulation step contract") {
  ModelConfig c;
  GcfsrModel m(c, 16);
  const auto& gen = m.generator();
  Rng rng(17);
  LatentCodes codes;
  for (int j = 0; j < 9; ++j) codes.push_back(random_tensor({1, 64}, rng, DType::f32));

  auto g0 = gen.style_modulation_step(2, Tensor::zeros({1, 128, 4, 4}), codes);
  for (double v : g0.to_vector()) CHECK(v == 0.0);

  auto h = random_tensor({1, 64, 16, 16}, rng, DType::f32);
  auto g5 = gen.style_modulation_step(5, h, codes);
  CHECK(g5.shape() == Shape{1, 32, 32, 32});
  const auto& mods = gen.modulated();
  auto manual = mods[6](mods[5](ops::upsample2x(h, ops::UpsampleMode::nearest), codes[5], Tensor()),
                        codes[6], Tensor());
  CHECK(bit_identical(g5, manual));

  LatentCodes short_codes(codes.begin(), codes.begin() + 5);
  CHECK_THROWS_AS(gen.style_modulation_step(5, h, short_codes), InvalidArgument);
}

TEST_CASE("feature modulation gates") {
  ModelConfig c;
  GcfsrModel m(c, 18);
  const auto& gen = m.generator();
  Rng rng(19);
  auto f = random_tensor({2, 32, 32, 32}, rng, DType::f32);
  auto g = random_tensor({2, 32, 32, 32}, rng, DType::f32);
  auto skip = gen.skip_conv(5)(f);

  CHECK(bit_identical(gen.feature_modulation(5, f, g, constant_sigma(c, 2, 1, 0)), skip));
  CHECK(bit_identical(gen.feature_modulation(5, f, g, constant_sigma(c, 2, 0, 1)), g));

  const double r = 1 / std::sqrt(2.0);
  auto h = gen.feature_modulation(5, f, g, constant_sigma(c, 2, r, r)).to_vector();
  auto sv = skip.to_vector();
  auto gv = g.to_vector();
  double worst = 0;
  for (std::size_t i = 0; i < h.size(); ++i) worst = std::max(worst, std::abs(h[i] - (r * sv[i] + r * gv[i])));
  CHECK(worst < 1e-6);
  CHECK_THROWS_AS(gen.feature_modulation(5, Tensor(), g, constant_sigma(c, 2, r, r)), InvalidArgument);
}

TEST_CASE("progressive RGB accumulation") {
  ModelConfig c;
  GcfsrModel m(c, 20);
  const auto& gen = m.generator();
  Rng rng(21);
  std::vector<Tensor> h;
  for (int i = 2; i <= 6; ++i) h.push_back(random_tensor({2, c.chan(i), 1 << i, 1 << i}, rng, DType::f32));

  // Base case and unrolled two-level recursion.
  CHECK(bit_identical(gen.trgb_output(std::span(h).first(1)), gen.trgb(2, h[0])));
  auto two = ops::add(ops::upsample2x(gen.trgb(2, h[0]), ops::UpsampleMode::bilinear), gen.trgb(3, h[1]));
  CHECK(bit_identical(gen.trgb_output(std::span(h).first(2)), two));

  // Explicit sum of per-level outputs, each upsampled to the final size.
  auto full = gen.trgb_output(h);
  CHECK(full.shape() == Shape{2, 3, 64, 64});
  Tensor sum;
  for (int i = 2; i <= 6; ++i) {
    Tensor part = gen.trgb(i, h[static_cast<std::size_t>(i - 2)]);
    for (int k = i; k < 6; ++k) part = ops::upsample2x(part, ops::UpsampleMode::bilinear);
    sum = sum.defined() ? ops::add(sum, part) : part;
  }
  CHECK(max_abs_diff(full, sum) < 1e-5);
}

TEST_CASE("forward shape, determinism and noise seeding") {
  ModelConfig c;
  GcfsrModel m(c, 22);
  Rng rng(23);
  for (std::int64_t n : {1, 3}) {
    auto x = random_tensor({n, 3, 64, 64}, rng, DType::f32, 0, 1);
    auto y1 = m.forward(x, 0.4);
    auto y2 = m.forward(x, 0.4);
    CHECK(y1.shape() == Shape{n, 3, 64, 64});
    CHECK(bit_identical(y1, y2));
    Rng n1(5), n2(5);
    CHECK(bit_identical(m.forward(x, 0.4, {.noise = &n1}), m.forward(x, 0.4, {.noise = &n2})));
  }
  GcfsrModel same(c, 22);
  auto x = random_tensor({1, 3, 64, 64}, rng, DType::f32, 0, 1);
  CHECK(bit_identical(m.forward(x, 0.7), same.forward(x, 0.7)));
}

TEST_CASE("every generator parameter receives gradient") {
  auto c = micro_config();
  GcfsrModel m(c, 24);
  // Non-zero noise strengths so the noise path is live.
  for (std::size_t i = 0; i < m.params().size(); ++i)
    if (m.params().names()[i].find("noise_strength") != std::string::npos) fill(m.params().tensors()[i], 0.1);
  Rng rng(25);
  auto x = random_tensor({2, 3, 16, 16}, rng, DType::f32, 0, 1);
  Rng noise(26);
  GradTape tape;
  {
    GradTape::Recording rec(tape);
    tape.backward(project(m.forward(x, 0.3, {.noise = &noise})));
  }
  for (std::size_t i = 0; i < m.params().size(); ++i) {
    double norm = 0;
    for (double v : tape.grad(m.params().tensors()[i]).to_vector()) norm += v * v;
    INFO(m.params().names()[i]);
    CHECK(norm > 0);
  }
}

TEST_CASE("micro generator matches finite differences") {
  auto c = micro_config();
  GcfsrModel m(c, 27, DType::f64);
  for (std::size_t i = 0; i < m.params().size(); ++i)
    if (m.params().names()[i].find("noise_strength") != std::string::npos) fill(m.params().tensors()[i], 0.2);
  Rng rng(28);
  auto x = random_tensor({2, 3, 16, 16}, rng, DType::f64, 0, 1);
  auto s = Tensor::from({2, 1}, std::vector<double>{0.25, 0.8});
  auto fn = [&](const std::vector<Tensor>&) {
    Rng noise(29);
    return project(m.forward(x, s, {.noise = &noise}), 3);
  };
  std::vector<Tensor> inputs = m.params().tensors();
  inputs.push_back(x);
  CHECK(grad_check(fn, inputs) < 1e-4);
}

TEST_CASE("closing the generator gates removes latent dependence") {
  ModelConfig c;
  GcfsrModel m(c, 30);
  Rng rng(31);
  auto x = random_tensor({1, 3, 64, 64}, rng, DType::f32, 0, 1);
  auto sigma = constant_sigma(c, 1, 1, 0);
  auto trace = m.trace(x, m.s_norm_tensor(1, 0.5));
  LatentCodes perturbed;
  for (const auto& w : trace.latents) perturbed.push_back(random_tensor(w.shape(), rng, DType::f32, -5, 5));
  auto a = m.forward(x, 0.5, {.sigma_override = &sigma});
  auto b = m.forward(x, 0.5, {.sigma_override = &sigma, .latent_override = &perturbed});
  CHECK(bit_identical(a, b));
  LatentCodes too_few(perturbed.begin(), perturbed.end() - 1);
  CHECK_THROWS_AS(m.forward(x, 0.5, {.latent_override = &too_few}), InvalidArgument);
}

TEST_CASE("forward is continuous in s") {
  ModelConfig c;
  GcfsrModel m(c, 32);
  Rng rng(33);
  auto x = random_tensor({1, 3, 64, 64}, rng, DType::f32, 0, 1);
  for (double s : {2.0, 5.0, 11.0}) {
    auto a = ConditionFactor::from_raw(s, c);
    auto b = ConditionFactor::from_raw(std::exp2(std::log2(s) + 1e-3), c);
    auto ya = m.forward(x, a.s_norm);
    auto yb = m.forward(x, b.s_norm);
    CHECK(l2(ops::sub(ya, yb)) < 0.01 * l2(ya));
  }
}

TEST_CASE("latent count is consistent") {
  for (int u : {4, 5, 6}) {
    ModelConfig c;
    c.u = u;
    c.factors = {2, 4, 8};
    GcfsrModel m(c, 34);
    CHECK(m.generator().num_modulated() == c.num_latents());
    CHECK(static_cast<int>(m.generator().modulated().size()) == c.num_latents());
    Rng rng(35);
    auto t = m.trace(random_tensor({1, 3, 1 << u, 1 << u}, rng, DType::f32, 0, 1), m.s_norm_tensor(1, 0));
    CHECK(static_cast<int>(t.latents.size()) == 2 * (u - c.l()) + 1);
  }
}

