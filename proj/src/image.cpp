#include "gcfsr/image.hpp"

#include <algorithm>
#include <cmath>

#include "gcfsr/errors.hpp"

namespace gcfsr {

Image::Image(int w, int h, float fill) : width(w), height(h) {
  if (w < 1 || h < 1)
    throw InvalidArgument("image dimensions must be positive, got " +
                          std::to_string(w) + "x" + std::to_string(h));
  pixels.assign(static_cast<std::size_t>(3) * w * h, fill);
}

double keys_cubic(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x < 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return (((x - 5.0) * x + 8.0) * x - 4.0) * a;
  return 0.0;
}

namespace {

struct Taps {
  std::vector<int> start;  // offset into index/weight arrays per output
  std::vector<int> count;
  std::vector<int> index;
  std::vector<double> weight;
};

Taps resample_taps(int in_size, int out_size) {
  Taps t;
  const double scale = static_cast<double>(in_size) / out_size;
  const double filter_scale = std::max(scale, 1.0);
  const double support = 2.0 * filter_scale;
  for (int o = 0; o < out_size; ++o) {
    const double center = (o + 0.5) * scale;
    const int lo = static_cast<int>(std::floor(center - support));
    const int hi = static_cast<int>(std::ceil(center + support));
    t.start.push_back(static_cast<int>(t.index.size()));
    double total = 0;
    std::vector<std::pair<int, double>> local;
    for (int j = lo; j <= hi; ++j) {
      const double w = keys_cubic((j + 0.5 - center) / filter_scale);
      if (w == 0.0) continue;
      local.emplace_back(std::clamp(j, 0, in_size - 1), w);
      total += w;
    }
    for (auto [j, w] : local) {
      t.index.push_back(j);
      t.weight.push_back(w / total);
    }
    t.count.push_back(static_cast<int>(local.size()));
  }
  return t;
}

}  // namespace

Image bicubic_resize(const Image& img, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1)
    throw InvalidArgument("bicubic_resize: target size must be positive");
  const Taps tx = resample_taps(img.width, out_w);
  const Taps ty = resample_taps(img.height, out_h);
  Image out(out_w, out_h);
  std::vector<double> rows(static_cast<std::size_t>(img.height) * out_w);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < out_w; ++x) {
        double acc = 0;
        const int s = tx.start[static_cast<std::size_t>(x)];
        for (int k = 0; k < tx.count[static_cast<std::size_t>(x)]; ++k)
          acc += tx.weight[static_cast<std::size_t>(s + k)] *
                 img.at(c, y, tx.index[static_cast<std::size_t>(s + k)]);
        rows[static_cast<std::size_t>(y) * out_w + x] = acc;
      }
    for (int y = 0; y < out_h; ++y) {
      const int s = ty.start[static_cast<std::size_t>(y)];
      const int n = ty.count[static_cast<std::size_t>(y)];
      for (int x = 0; x < out_w; ++x) {
        double acc = 0;
        for (int k = 0; k < n; ++k)
          acc += ty.weight[static_cast<std::size_t>(s + k)] *
                 rows[static_cast<std::size_t>(ty.index[static_cast<std::size_t>(s + k)]) * out_w + x];
        out.at(c, y, x) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

Degraded degrade(const Image& gt, int factor) {
  if (!gt.square())
    throw InvalidArgument("degrade: ground truth must be square, got " +
                          std::to_string(gt.width) + "x" + std::to_string(gt.height));
  if (factor < 1 || gt.width % factor != 0)
    throw InvalidArgument("degrade: factor " + std::to_string(factor) +
                          " does not divide side " + std::to_string(gt.width));
  const int side = gt.width / factor;
  Degraded d;
  d.lr = bicubic_resize(gt, side, side);
  d.lr_upscaled = bicubic_resize(d.lr, gt.width, gt.height);
  return d;
}

Image flip_horizontal(const Image& img) {
  Image out = img;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) out.at(c, y, x) = img.at(c, y, img.width - 1 - x);
  return out;
}

Image quantized(const Image& img) {
  Image out = img;
  for (auto& v : out.pixels)
    v = static_cast<float>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)) / 255.0f;
  return out;
}

Tensor to_tensor(std::span<const Image> images, DType dtype) {
  if (images.empty()) throw InvalidArgument("to_tensor: no images");
  const int w = images[0].width, h = images[0].height;
  for (const auto& im : images)
    if (im.width != w || im.height != h)
      throw InvalidArgument("to_tensor: images differ in size");
  const std::int64_t n = static_cast<std::int64_t>(images.size());
  Tensor t = Tensor::zeros({n, 3, h, w}, dtype);
  dispatch(dtype, [&](auto tag) {
    using T = decltype(tag);
    auto d = t.mutable_data<T>();
    std::size_t off = 0;
    for (const auto& im : images)
      for (float v : im.pixels) d[off++] = static_cast<T>(v);
  });
  return t;
}

Tensor to_tensor(const Image& image, DType dtype) {
  return to_tensor(std::span<const Image>(&image, 1), dtype);
}

Image to_image(const Tensor& batch, std::int64_t index) {
  if (batch.ndim() != 4 || batch.dim(1) != 3)
    throw InvalidArgument("to_image: expected [N,3,H,W], got " + to_string(batch.shape()));
  if (index < 0 || index >= batch.dim(0)) throw InvalidArgument("to_image: index out of range");
  Image im(static_cast<int>(batch.dim(3)), static_cast<int>(batch.dim(2)));
  const std::size_t n = im.pixels.size();
  dispatch(batch.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto d = batch.data<T>();
    for (std::size_t i = 0; i < n; ++i)
      im.pixels[i] = static_cast<float>(d[static_cast<std::size_t>(index) * n + i]);
  });
  return im;
}

}  // namespace gcfsr
