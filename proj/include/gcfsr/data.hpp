#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gcfsr/image.hpp"

namespace gcfsr {

// Deterministic procedural face: background gradient, hair, skin ellipse,
// eyes, brows, nose shading and a mouth arc, with pose, sizes and colors
// drawn from the seed. side >= 16.
Image synth_face(std::uint64_t seed, int side);

// Training images plus a disjoint held-out validation set, all square,
// side 2^u, on the 8-bit grid.
class DataSource {
 public:
  static constexpr int kValidationCount = 16;
  // Validation seeds start here, disjoint from any training seed.
  static constexpr std::uint64_t kValidationSeed = 1'000'000'000;

  // Training seeds 0 .. count-1.
  static DataSource synthetic(int count, int side);
  // Every *.png in dir (sorted by name); the last 16 are held out. Images
  // must be square and are bicubic-resized to side.
  static DataSource directory(const std::filesystem::path& dir, int side);

  std::size_t size() const { return train_.size(); }
  const Image& train(std::size_t i) const { return train_[i]; }
  const std::vector<Image>& validation() const { return validation_; }
  int side() const { return side_; }
  const std::string& description() const { return description_; }

  bool flip = true;

 private:
  int side_ = 0;
  std::vector<Image> train_;
  std::vector<Image> validation_;
  std::string description_;
};

}  // namespace gcfsr
