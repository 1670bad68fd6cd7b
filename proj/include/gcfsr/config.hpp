#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gcfsr {

enum class SNormMode { log, linear };

struct LossWeights {
  double l1 = 1.0;
  double perc = 0.01;
  double adv = 0.01;
};

// Flat key=value model and training configuration. Unknown keys are errors.
struct ModelConfig {
  int u = 6;
  std::vector<int> factors{2, 4, 8, 16};
  int c_base = 16;
  int c_max = 128;
  int d_w = 64;
  double lambda_l1 = 1.0;
  double lambda_perc = 0.01;
  double lambda_adv = 0.01;
  double lr_g = 2e-3;
  double lr_d = 2e-3;
  double beta1 = 0.9;
  double beta2 = 0.99;
  // Fraction of the run, at its end, over which both learning rates decay
  // linearly towards zero; 0 keeps them constant.
  double lr_decay = 0.5;
  int batch_size = 8;
  int total_iters = 2000;
  std::uint64_t seed = 1;
  SNormMode s_norm_mode = SNormMode::log;
  bool adversarial_only = false;
  std::optional<double> fixed_s;
  int log_interval = 100;
  int checkpoint_interval = 500;
  // Placeholders; only 0 (disabled) is accepted.
  double r1_gamma = 0.0;
  double ema_decay = 0.0;

  int s_min() const;
  int s_max() const;
  // Coarsest pyramid level: 2^l is the smallest supported input side.
  int l() const;
  int side() const { return 1 << u; }
  int chan(int level) const;
  int num_latents() const { return 2 * (u - l()) + 1; }
  LossWeights loss_weights() const;
  // Learning-rate multiplier for the step that starts at `iteration`.
  double lr_scale(std::int64_t iteration) const;

  // Throws ConfigError naming the offending key.
  void validate() const;
  // Sorted key=value lines; parse(canonical()) reproduces the config.
  std::string canonical() const;

  static ModelConfig parse(std::string_view text);
  static ModelConfig load(const std::filesystem::path& path);
};

}  // namespace gcfsr
