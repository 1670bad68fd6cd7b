#include <cmath>
#include <filesystem>
#include <bit>
#include <fstream>
#include <map>
#include <sstream>

#include "doctest.h"
#include "gcfsr/errors.hpp"
#include "gcfsr/trainer.hpp"
#include "test_support.hpp"

using namespace gcfsr;
using namespace gcfsr::testing;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("gcfsr_test_trainer_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

const DataSource& micro_data() {
  static const DataSource d = DataSource::synthetic(8, 16);
  return d;
}

std::vector<std::uint8_t> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::uint8_t> state_bytes(const Trainer& t) { return t.checkpoint().serialize(); }

std::vector<std::uint32_t> sorted_bits(const Image& img) {
  std::vector<std::uint32_t> out;
  for (float v : img.pixels) out.push_back(std::bit_cast<std::uint32_t>(v));
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("factor sampling is uniform") {
  FactorSampler sampler(4);
  Rng rng(3);
  std::vector<int> counts(4, 0);
  const int n = 10000;
  for (int i = 0; i < n; ++i) ++counts[sampler.sample(rng)];
  CHECK(sampler.calls() == static_cast<std::uint64_t>(n));
  const double p = 0.25, sigma = std::sqrt(n * p * (1 - p));
  for (int c : counts) CHECK(std::abs(c - n * p) < 5 * sigma);
}

TEST_CASE("trainer batches draw factors uniformly over steps") {
  auto cfg = micro_config();
  cfg.factors = {2, 4, 8};
  cfg.batch_size = 1;
  Trainer t(cfg, micro_data());
  Rng rng(11);
  FactorSampler sampler(cfg.factors.size());
  std::map<int, int> counts;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const Batch b = t.draw_batch(rng, sampler);
    ++counts[b.factor];
    if (i == 0) {
      CHECK(b.gt.size() == 1);
      CHECK(b.lr_upscaled[0].width == 16);
      CHECK(b.lr_upscaled[0].pixels == degrade(b.gt[0], b.factor).lr_upscaled.pixels);
    }
  }
  CHECK(counts.size() == 3);
  const double p = 1.0 / 3, sigma = std::sqrt(n * p * (1 - p));
  for (int f : cfg.factors) CHECK(std::abs(counts[f] - n * p) < 5 * sigma);
}

TEST_CASE("flip augmentation only mirrors") {
  const auto cfg = micro_config();
  Trainer t(cfg, micro_data());
  Rng rng(1);
  FactorSampler sampler(cfg.factors.size());
  int flipped = 0, total = 0;
  for (int k = 0; k < 40; ++k) {
    const Batch b = t.draw_batch(rng, sampler);
    for (const auto& img : b.gt) {
      ++total;
      bool found = false;
      for (std::size_t i = 0; i < micro_data().size(); ++i) {
        const Image& src = micro_data().train(i);
        if (img.pixels == src.pixels) {
          found = true;
        } else if (img.pixels == flip_horizontal(src).pixels) {
          found = true;
          ++flipped;
        }
        if (found) {
          CHECK(sorted_bits(img) == sorted_bits(src));
          break;
        }
      }
      CHECK(found);
    }
  }
  CHECK(flipped > 0);
  CHECK(flipped < total);
}

TEST_CASE("flip can be disabled") {
  auto data = DataSource::synthetic(3, 16);
  data.flip = false;
  const auto cfg = micro_config();
  Trainer t(cfg, data);
  Rng rng(1);
  FactorSampler sampler(cfg.factors.size());
  for (int k = 0; k < 20; ++k)
    for (const auto& img : t.draw_batch(rng, sampler).gt) {
      bool found = false;
      for (std::size_t i = 0; i < data.size(); ++i) found = found || img.pixels == data.train(i).pixels;
      CHECK(found);
    }
}

TEST_CASE("fixed_s never calls the factor sampler") {
  auto cfg = micro_config();
  cfg.fixed_s = 4;
  Trainer t(cfg, micro_data());
  for (int i = 0; i < 3; ++i) CHECK(t.step().s == 4);
  CHECK(t.factor_sampler().calls() == 0);

  Trainer sampled(micro_config(), micro_data());
  sampled.step();
  CHECK(sampled.factor_sampler().calls() == 1);
}

TEST_CASE("pure regression run descends L1 monotonically") {
  auto cfg = micro_config();
  cfg.lambda_adv = 0;
  cfg.lambda_perc = 0;
  cfg.batch_size = 1;
  cfg.fixed_s = 4;
  cfg.lr_g = 2e-4;
  auto data = DataSource::synthetic(1, 16);
  data.flip = false;
  Trainer t(cfg, data);
  std::vector<double> l1;
  for (int i = 0; i < 50; ++i) {
    const auto m = t.step();
    CHECK(m.loss_d == 0);
    CHECK(m.perc >= 0);
    l1.push_back(m.l1);
  }
  int violations = 0;
  for (std::size_t i = 1; i < l1.size(); ++i) violations += l1[i] > l1[i - 1];
  MESSAGE("L1 " << l1.front() << " -> " << l1.back() << ", " << violations << " upticks");
  CHECK(violations == 0);
  CHECK(l1.back() < 0.8 * l1.front());
}

TEST_CASE("identical seeds give identical metrics and checkpoints") {
  const auto cfg = micro_config();
  Trainer a(cfg, micro_data()), b(cfg, micro_data());
  for (int i = 0; i < 10; ++i) CHECK(a.step() == b.step());
  CHECK(a.history() == b.history());
  CHECK(state_bytes(a) == state_bytes(b));

  auto other = cfg;
  other.seed = cfg.seed + 1;
  Trainer c(other, micro_data());
  for (int i = 0; i < 10; ++i) c.step();
  CHECK(state_bytes(a) != state_bytes(c));
}

TEST_CASE("resume continues bit-identically") {
  auto cfg = micro_config();
  cfg.total_iters = 13;
  cfg.log_interval = 5;
  cfg.checkpoint_interval = 3;
  const auto dir_a = scratch_dir("uninterrupted"), dir_b = scratch_dir("resumed");

  Trainer full(cfg, micro_data());
  full.train(dir_a);
  CHECK(full.iteration() == 13);

  // Resume from iteration 3 and run the rest elsewhere.
  const auto ck = Checkpoint::load(dir_a / "checkpoint_000003.gcfs");
  CHECK(ck.iteration == 3);
  Trainer resumed(ck, micro_data());
  CHECK(resumed.iteration() == 3);
  resumed.train(dir_b);
  CHECK(file_bytes(dir_a / "final.gcfs") == file_bytes(dir_b / "final.gcfs"));
  CHECK(state_bytes(full) == state_bytes(resumed));
  for (const auto& [name, t] : full.checkpoint().tensors) CHECK(bit_identical(t, resumed.checkpoint().tensor(name)));
  for (std::size_t i = 0; i < 4; ++i) CHECK(full.history()[3 + i] == resumed.history()[i]);
}

TEST_CASE("train writes the metrics log and checkpoints") {
  auto cfg = micro_config();
  cfg.total_iters = 12;
  cfg.log_interval = 4;
  cfg.checkpoint_interval = 5;
  const auto dir = scratch_dir("log");
  Trainer t(cfg, micro_data());
  int callbacks = 0;
  t.train(dir, [&](const StepMetrics&) { ++callbacks; });
  CHECK(callbacks == 12);
  CHECK(fs::exists(dir / "checkpoint_000005.gcfs"));
  CHECK(fs::exists(dir / "checkpoint_000010.gcfs"));
  CHECK(fs::exists(dir / "final.gcfs"));
  CHECK_FALSE(fs::exists(dir / "checkpoint_000012.gcfs"));

  std::ifstream in(dir / "metrics.tsv");
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  REQUIRE(lines.size() == static_cast<std::size_t>(cfg.total_iters / cfg.log_interval));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::stringstream ss(lines[i]);
    std::vector<std::string> fields;
    for (std::string f; std::getline(ss, f, '\t');) fields.push_back(f);
    REQUIRE(fields.size() == 6 + cfg.factors.size());
    CHECK(std::stoll(fields[0]) == static_cast<long long>(4 * (i + 1)));
    const double s = std::stod(fields[1]);
    CHECK((s == 2 || s == 4));
    for (std::size_t k = 6; k < fields.size(); ++k) CHECK(std::stod(fields[k]) > 0);
  }

  // A fresh trainer in the same directory starts the log over.
  Trainer again(cfg, micro_data());
  again.train(dir);
  std::ifstream in2(dir / "metrics.tsv");
  std::size_t count = 0;
  for (std::string line; std::getline(in2, line);) ++count;
  CHECK(count == lines.size());
}

TEST_CASE("metrics line format") {
  StepMetrics m{.iteration = 100, .s = 8, .loss_d = 1.25, .loss_g = 0.5, .l1 = 0.125, .perc = 2};
  CHECK(format_metrics_line(m, {20.5, 18.25}) ==
        "100\t8\t1.250000\t0.500000\t0.125000\t2.000000\t20.5000\t18.2500");
}

TEST_CASE("validation is deterministic and noise-free") {
  Trainer t(micro_config(), micro_data());
  const auto a = t.validate(), b = t.validate();
  CHECK(a == b);
  CHECK(a.size() == 2);
  t.step();
  CHECK(t.validate() != a);
}

TEST_CASE("trainer rejects mismatched data and bad checkpoints") {
  CHECK_THROWS_AS(Trainer(micro_config(), DataSource::synthetic(2, 32)), InvalidArgument);
  Trainer t(micro_config(), micro_data());
  auto ck = t.checkpoint();
  SUBCASE("shape mismatch") {
    for (auto& [name, tensor] : ck.tensors)
      if (name == "g/enc.latent_fc.weight" || name.starts_with("g/")) {
        tensor = Tensor::zeros({1}, tensor.dtype());
        break;
      }
    CHECK_THROWS_AS(Trainer(ck, micro_data()), CheckpointError);
  }
  SUBCASE("missing tensor") {
    ck.tensors.erase(ck.tensors.begin());
    CHECK_THROWS_AS(Trainer(ck, micro_data()), CheckpointError);
  }
  SUBCASE("bad config") {
    ck.config_text += "bogus=1\n";
    CHECK_THROWS_AS(Trainer(ck, micro_data()), CheckpointError);
  }
}

TEST_CASE("learning-rate schedule") {
  ModelConfig c;
  c.lr_decay = 0;
  for (std::int64_t it : {0, 1000, 1999}) CHECK(c.lr_scale(it) == 1.0);
  c.lr_decay = 0.5;
  CHECK(c.lr_scale(0) == 1.0);
  CHECK(c.lr_scale(1000) == 1.0);
  CHECK(c.lr_scale(1500) == 0.5);
  CHECK(c.lr_scale(1999) == doctest::Approx(1.0 / 1000));
  double prev = 1.0;
  for (std::int64_t it = 0; it < c.total_iters; ++it) {
    CHECK(c.lr_scale(it) <= prev);
    CHECK(c.lr_scale(it) > 0);
    prev = c.lr_scale(it);
  }
  CHECK(ModelConfig::parse(c.canonical()).lr_decay == 0.5);
  CHECK_THROWS_AS(ModelConfig::parse("lr_decay=1.5"), ConfigError);
  CHECK_THROWS_AS(ModelConfig::parse("lr_decay=-0.1"), ConfigError);
}
