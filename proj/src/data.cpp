#include "gcfsr/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "gcfsr/errors.hpp"
#include "gcfsr/rng.hpp"

namespace gcfsr {

namespace {

using Color = std::array<double, 3>;

Color lerp(const Color& a, const Color& b, double t) {
  return {a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t};
}

Color jitter(Color c, Rng& rng, double amount) {
  for (auto& v : c) v = std::clamp(v + rng.uniform(-amount, amount), 0.0, 1.0);
  return c;
}

// Signed "inside" measure for an axis-aligned ellipse: < 1 inside.
double ellipse(double x, double y, double cx, double cy, double rx, double ry) {
  const double dx = (x - cx) / rx, dy = (y - cy) / ry;
  return dx * dx + dy * dy;
}

struct FaceParams {
  Color bg_top, bg_bottom, hair, skin, lips, iris, brow;
  double cx, cy, rx, ry;
  double hair_rx, hair_ry, hairline;
  double eye_dx, eye_dy, eye_rx, eye_ry, iris_r;
  double brow_dy, brow_w;
  double mouth_dy, mouth_w, mouth_curve, mouth_thick;
  double nose_len, light;

  explicit FaceParams(std::uint64_t seed) {
    Rng rng(seed * 0x9E3779B97F4A7C15ULL + 0x632BE59BD9B4E019ULL);
    bg_top = jitter({rng.uniform(0.2, 0.9), rng.uniform(0.2, 0.9), rng.uniform(0.2, 0.9)}, rng, 0.0);
    bg_bottom = jitter(bg_top, rng, 0.25);
    const double tone = rng.uniform();
    skin = jitter(lerp({0.96, 0.80, 0.68}, {0.42, 0.27, 0.18}, tone), rng, 0.04);
    const double hair_tone = rng.uniform();
    hair = jitter(lerp({0.05, 0.04, 0.03}, {0.65, 0.45, 0.2}, hair_tone * hair_tone), rng, 0.04);
    lips = jitter({0.70 * skin[0] + 0.15, 0.35 * skin[1], 0.38 * skin[2]}, rng, 0.05);
    iris = jitter(lerp({0.08, 0.06, 0.05}, {0.25, 0.35, 0.45}, rng.uniform() * 0.6), rng, 0.03);
    brow = lerp(hair, {0.0, 0.0, 0.0}, 0.3);
    cx = rng.uniform(-0.08, 0.08);
    cy = rng.uniform(0.0, 0.1);
    rx = rng.uniform(0.52, 0.64);
    ry = rng.uniform(0.70, 0.82);
    hair_rx = rx * rng.uniform(1.08, 1.22);
    hair_ry = ry * rng.uniform(1.0, 1.12);
    hairline = rng.uniform(0.45, 0.65);
    eye_dx = rng.uniform(0.21, 0.27);
    eye_dy = rng.uniform(0.10, 0.18);
    eye_rx = rng.uniform(0.085, 0.11);
    eye_ry = rng.uniform(0.045, 0.065);
    iris_r = eye_ry * rng.uniform(0.95, 1.15);
    brow_dy = rng.uniform(0.11, 0.15);
    brow_w = rng.uniform(0.025, 0.04);
    mouth_dy = rng.uniform(0.32, 0.42);
    mouth_w = rng.uniform(0.14, 0.22);
    mouth_curve = rng.uniform(-0.8, 1.6);
    mouth_thick = rng.uniform(0.025, 0.045);
    nose_len = rng.uniform(0.14, 0.22);
    light = rng.uniform(-0.2, 0.2);
  }

  Color shade(double x, double y) const {
    Color c = lerp(bg_top, bg_bottom, (y + 1) / 2);
    // Hair mass behind the head.
    if (ellipse(x, y, cx, cy - 0.12, hair_rx, hair_ry) < 1) c = hair;
    const double face = ellipse(x, y, cx, cy, rx, ry);
    if (face < 1) {
      // Soft lighting falloff toward the face boundary plus a side light.
      const double f = 1.0 - 0.18 * face + light * (x - cx);
      c = {skin[0] * f, skin[1] * f, skin[2] * f};
      // Fringe covering the top of the face.
      if (y < cy - ry * hairline + 0.05 * std::sin(9 * x + cx * 7)) c = hair;
      // Nose: shaded vertical strip and a darker tip.
      const double ny = y - (cy - 0.05);
      if (ny > 0 && ny < nose_len && std::abs(x - cx - 0.02) < 0.025)
        c = {c[0] * 0.88, c[1] * 0.88, c[2] * 0.88};
      if (ellipse(x, y, cx, cy - 0.05 + nose_len, 0.07, 0.035) < 1)
        c = {c[0] * 0.8, c[1] * 0.78, c[2] * 0.78};
      // Mouth arc.
      const double mx = (x - cx) / mouth_w;
      if (std::abs(mx) < 1) {
        const double arc = cy + mouth_dy + mouth_curve * 0.05 * (mx * mx - 0.5);
        if (std::abs(y - arc) < mouth_thick * (1 - 0.6 * mx * mx)) c = lips;
      }
      for (double side : {-1.0, 1.0}) {
        const double ex = cx + side * eye_dx, ey = cy - eye_dy;
        // Brows.
        const double bx = (x - ex) / (eye_rx * 1.3);
        if (std::abs(bx) < 1 && std::abs(y - (ey - brow_dy + 0.02 * bx * bx)) < brow_w) c = brow;
        // Eye: sclera ellipse, iris disc, pupil.
        if (ellipse(x, y, ex, ey, eye_rx, eye_ry) < 1) {
          c = {0.92, 0.90, 0.88};
          const double d = ellipse(x, y, ex, ey, iris_r, iris_r);
          if (d < 1) c = iris;
          if (d < 0.2) c = {0.02, 0.02, 0.02};
        }
      }
    }
    return c;
  }
};

}  // namespace

Image synth_face(std::uint64_t seed, int side) {
  if (side < 16) throw InvalidArgument("synth_face: side must be >= 16, got " + std::to_string(side));
  const FaceParams p(seed);
  Image img(side, side);
  // 3x3 supersampling for smooth edges.
  constexpr int ss = 3;
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      Color acc{0, 0, 0};
      for (int sy = 0; sy < ss; ++sy)
        for (int sx = 0; sx < ss; ++sx) {
          const double u = ((x + (sx + 0.5) / ss) / side) * 2 - 1;
          const double v = ((y + (sy + 0.5) / ss) / side) * 2 - 1;
          const Color c = p.shade(u, v);
          for (int k = 0; k < 3; ++k) acc[static_cast<std::size_t>(k)] += c[static_cast<std::size_t>(k)];
        }
      for (int k = 0; k < 3; ++k)
        img.at(k, y, x) = static_cast<float>(std::clamp(acc[static_cast<std::size_t>(k)] / (ss * ss), 0.0, 1.0));
    }
  return quantized(img);
}

DataSource DataSource::synthetic(int count, int side) {
  if (count < 1) throw InvalidArgument("synthetic data source needs at least one image");
  DataSource d;
  d.side_ = side;
  for (int i = 0; i < count; ++i) d.train_.push_back(synth_face(static_cast<std::uint64_t>(i), side));
  for (int k = 0; k < kValidationCount; ++k)
    d.validation_.push_back(synth_face(kValidationSeed + static_cast<std::uint64_t>(k), side));
  d.description_ = "synthetic:" + std::to_string(count);
  return d;
}

DataSource DataSource::directory(const std::filesystem::path& dir, int side) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw InvalidArgument("data directory " + dir.string() + " does not exist");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (ext == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.size() <= static_cast<std::size_t>(kValidationCount))
    throw InvalidArgument("data directory " + dir.string() + " has " + std::to_string(files.size()) +
                          " PNG files; need more than " + std::to_string(kValidationCount) +
                          " (the last " + std::to_string(kValidationCount) + " are held out)");
  DataSource d;
  d.side_ = side;
  for (std::size_t i = 0; i < files.size(); ++i) {
    Image img = load_png(files[i]);
    if (!img.square())
      throw InvalidArgument(files[i].string() + " is not square (" + std::to_string(img.width) + "x" +
                            std::to_string(img.height) + ")");
    if (img.width != side) img = quantized(bicubic_resize(img, side, side));
    if (i + kValidationCount < files.size())
      d.train_.push_back(std::move(img));
    else
      d.validation_.push_back(std::move(img));
  }
  d.description_ = "dir:" + dir.string();
  return d;
}

}  // namespace gcfsr
