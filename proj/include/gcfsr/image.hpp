#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gcfsr/tensor.hpp"

namespace gcfsr {

// Planar RGB image, values nominally in [0,1]. Values are only clamped when
// written to 8-bit storage.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;  // [3][height][width]

  Image() = default;
  Image(int w, int h, float fill = 0.0f);

  float& at(int c, int y, int x) {
    return pixels[static_cast<std::size_t>((c * height + y) * width + x)];
  }
  float at(int c, int y, int x) const {
    return pixels[static_cast<std::size_t>((c * height + y) * width + x)];
  }
  bool square() const { return width == height; }
};

// Keys cubic convolution kernel with a = -0.5.
double keys_cubic(double x);

// Separable bicubic resize with half-pixel centers and edge clamping. When
// shrinking, the kernel is stretched by the scale factor (anti-aliasing).
Image bicubic_resize(const Image& img, int out_w, int out_h);

struct Degraded {
  Image lr;
  Image lr_upscaled;
};

// lr = bicubic down by factor, lr_upscaled = bicubic back up to gt size.
Degraded degrade(const Image& gt, int factor);

Image flip_horizontal(const Image& img);
// Clamped to [0,1] and rounded to the 8-bit grid, as when saved.
Image quantized(const Image& img);

// Stacks images into [N,3,H,W]; all images must share a size.
Tensor to_tensor(std::span<const Image> images, DType dtype = DType::f32);
Tensor to_tensor(const Image& image, DType dtype = DType::f32);
Image to_image(const Tensor& batch, std::int64_t index = 0);

class ImageError : public std::runtime_error {
 public:
  enum class Kind { not_found, malformed, unsupported };
  ImageError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

// 8-bit PNG. Grayscale is replicated to RGB, alpha is dropped with a
// warning, palette and sub-8-bit images are expanded; 16-bit is rejected.
Image decode_png(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_png(const Image& img);
Image load_png(const std::filesystem::path& path);
void save_png(const Image& img, const std::filesystem::path& path);

}  // namespace gcfsr
