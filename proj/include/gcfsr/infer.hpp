#pragma once

#include <filesystem>
#include <memory>
#include <vector>

#include "gcfsr/checkpoint.hpp"
#include "gcfsr/image.hpp"
#include "gcfsr/model.hpp"

namespace gcfsr {

struct InferenceResult {
  Image image;         // 2^u square, on the 8-bit grid
  double s_effective;  // s after clamping to [s_min, s_max]
};

struct SigmaRow {
  double factor;
  int channel;
  double sigma_enc;
  double sigma_gen;
};

// K values log-spaced from a to b inclusive; the endpoints are exact.
std::vector<double> log_sweep(double a, double b, int steps);

// Frames side by side with a white gutter between neighbors.
Image compose_strip(const std::vector<Image>& frames, int gutter = 4);

// Noise-free inference on an immutable generator snapshot. Every method is
// const and safe to call from several threads at once.
class SuperResolver {
 public:
  explicit SuperResolver(const Checkpoint& checkpoint);
  static SuperResolver load(const std::filesystem::path& path);

  const ModelConfig& config() const { return model_->config(); }
  int side() const { return config().side(); }

  // Bicubic upscale of a square LR image whose side divides 2^u; an input
  // already at 2^u passes through untouched.
  Image prepare(const Image& lr) const;
  // Runs on an already-prepared 2^u input.
  InferenceResult infer_prepared(const Image& x_up, double s) const;
  InferenceResult infer(const Image& lr, double s) const { return infer_prepared(prepare(lr), s); }
  std::vector<InferenceResult> sweep(const Image& lr, double s_min, double s_max, int steps) const;

  // Per-channel gates at one level for every configured factor.
  std::vector<SigmaRow> sigma_table(int level) const;

 private:
  std::shared_ptr<const GcfsrModel> model_;
};

}  // namespace gcfsr
