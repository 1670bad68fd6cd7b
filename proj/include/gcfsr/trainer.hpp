#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <vector>

#include "gcfsr/adam.hpp"
#include "gcfsr/checkpoint.hpp"
#include "gcfsr/config.hpp"
#include "gcfsr/data.hpp"
#include "gcfsr/discriminator.hpp"
#include "gcfsr/losses.hpp"
#include "gcfsr/model.hpp"

namespace gcfsr {

// Uniform draw of an index into the factor set; counts its calls.
class FactorSampler {
 public:
  explicit FactorSampler(std::size_t count) : count_(count) {}
  std::size_t sample(Rng& rng) {
    ++calls_;
    return static_cast<std::size_t>(rng.below(count_));
  }
  std::uint64_t calls() const { return calls_; }
  void set_calls(std::uint64_t n) { calls_ = n; }

 private:
  std::size_t count_;
  std::uint64_t calls_ = 0;
};

struct StepMetrics {
  std::int64_t iteration = 0;  // after the step
  double s = 0;
  double loss_d = 0;
  double loss_g = 0;
  double l1 = 0;
  double perc = 0;

  bool operator==(const StepMetrics&) const = default;
};

struct Batch {
  std::vector<Image> gt;
  std::vector<Image> lr_upscaled;
  int factor = 0;
};

// Owns both networks, their optimizers and the RNG stream. All randomness
// (batch indices, flips, factors, noise) comes from one seeded generator so a
// checkpoint captures the complete training state.
class Trainer {
 public:
  Trainer(const ModelConfig& config, const DataSource& data);
  // Continues from a checkpoint; the config is taken from the checkpoint.
  Trainer(const Checkpoint& checkpoint, const DataSource& data);

  StepMetrics step();
  // Mean PSNR per factor (config order) on the held-out set, noise-free and
  // on 8-bit quantized outputs.
  std::vector<double> validate() const;

  // Runs until total_iters, appending to out_dir/metrics.tsv every
  // log_interval and writing checkpoints every checkpoint_interval and at
  // the end (out_dir/checkpoint_<iter>.gcfs and out_dir/final.gcfs).
  void train(const std::filesystem::path& out_dir,
             const std::function<void(const StepMetrics&)>& on_step = {});

  Checkpoint checkpoint() const;
  std::int64_t iteration() const { return iteration_; }
  const ModelConfig& config() const { return config_; }
  GcfsrModel& model() { return *generator_; }
  const GcfsrModel& model() const { return *generator_; }
  Discriminator& discriminator() { return *discriminator_; }
  const FactorSampler& factor_sampler() const { return sampler_; }
  const std::vector<StepMetrics>& history() const { return history_; }

  // The batch the next step would draw, without consuming it; exposed for
  // tests of the augmentation contract.
  Batch draw_batch(Rng& rng, FactorSampler& sampler) const;

 private:
  void restore(const Checkpoint& checkpoint);

  ModelConfig config_;
  const DataSource& data_;
  std::unique_ptr<GcfsrModel> generator_;
  std::unique_ptr<Discriminator> discriminator_;
  FeatureExtractor phi_;
  AdamState adam_g_;
  AdamState adam_d_;
  Rng rng_;
  FactorSampler sampler_;
  std::int64_t iteration_ = 0;
  std::vector<StepMetrics> history_;
};

// Formats one metrics log line (no trailing newline).
std::string format_metrics_line(const StepMetrics& m, const std::vector<double>& val_psnr);

}  // namespace gcfsr
