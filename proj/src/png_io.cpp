#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <iterator>

#include "gcfsr/image.hpp"
#include "gcfsr/log.hpp"

namespace gcfsr {

namespace {

// State shared with libpng callbacks. Lives in the caller's frame so nothing
// owned by the setjmp frame is touched after a longjmp.
struct PngJob {
  const std::uint8_t* src = nullptr;
  std::size_t size = 0;
  std::size_t pos = 0;
  std::vector<std::uint8_t>* sink = nullptr;
  char message[256] = {};
  bool unsupported = false;
  bool had_alpha = false;
  int width = 0, height = 0;
  std::vector<std::uint8_t> rgb;
  std::vector<png_bytep> rows;
};

[[noreturn]] void on_error(png_structp png, png_const_charp msg) {
  auto* job = static_cast<PngJob*>(png_get_error_ptr(png));
  std::strncpy(job->message, msg, sizeof(job->message) - 1);
  png_longjmp(png, 1);
}

void on_warning(png_structp, png_const_charp) {}

void on_read(png_structp png, png_bytep out, png_size_t n) {
  auto* job = static_cast<PngJob*>(png_get_io_ptr(png));
  if (job->size - job->pos < n) png_error(png, "truncated PNG data");
  std::memcpy(out, job->src + job->pos, n);
  job->pos += n;
}

void on_write(png_structp png, png_bytep data, png_size_t n) {
  auto* job = static_cast<PngJob*>(png_get_io_ptr(png));
  job->sink->insert(job->sink->end(), data, data + n);
}

void on_flush(png_structp) {}

bool decode_into(PngJob* job) {
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, job, on_error, on_warning);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_set_read_fn(png, job, on_read);
  png_read_info(png, info);
  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (depth > 8) {
    job->unsupported = true;
    std::snprintf(job->message, sizeof(job->message),
                  "unsupported PNG bit depth %d (8-bit only)", depth);
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  if (color & PNG_COLOR_MASK_ALPHA) {
    job->had_alpha = true;
    png_set_strip_alpha(png);
  }
  png_set_interlace_handling(png);
  png_read_update_info(png, info);
  if (png_get_rowbytes(png, info) != static_cast<png_size_t>(w) * 3) {
    job->unsupported = true;
    std::snprintf(job->message, sizeof(job->message), "unsupported PNG layout");
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  job->width = static_cast<int>(w);
  job->height = static_cast<int>(h);
  job->rgb.resize(static_cast<std::size_t>(w) * h * 3);
  job->rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y)
    job->rows[y] = job->rgb.data() + static_cast<std::size_t>(y) * w * 3;
  png_read_image(png, job->rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

bool encode_into(PngJob* job) {
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, job, on_error, on_warning);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_set_write_fn(png, job, on_write, on_flush);
  png_set_IHDR(png, info, static_cast<png_uint_32>(job->width),
               static_cast<png_uint_32>(job->height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  png_write_info(png, info);
  png_write_image(png, job->rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

}  // namespace

Image decode_png(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0)
    throw ImageError(ImageError::Kind::malformed, "not a PNG file");
  PngJob job;
  job.src = bytes.data();
  job.size = bytes.size();
  if (!decode_into(&job)) {
    if (job.unsupported) throw ImageError(ImageError::Kind::unsupported, job.message);
    throw ImageError(ImageError::Kind::malformed,
                     std::string("malformed PNG: ") + job.message);
  }
  if (job.had_alpha) warn("PNG alpha channel dropped");
  Image img(job.width, job.height);
  const std::size_t plane = static_cast<std::size_t>(job.width) * job.height;
  for (std::size_t i = 0; i < plane; ++i)
    for (int c = 0; c < 3; ++c)
      img.pixels[c * plane + i] = static_cast<float>(job.rgb[i * 3 + static_cast<std::size_t>(c)]) / 255.0f;
  return img;
}

std::vector<std::uint8_t> encode_png(const Image& img) {
  const Image q = quantized(img);
  PngJob job;
  std::vector<std::uint8_t> out;
  job.sink = &out;
  job.width = img.width;
  job.height = img.height;
  const std::size_t plane = static_cast<std::size_t>(img.width) * img.height;
  job.rgb.resize(plane * 3);
  for (std::size_t i = 0; i < plane; ++i)
    for (int c = 0; c < 3; ++c)
      job.rgb[i * 3 + static_cast<std::size_t>(c)] =
          static_cast<std::uint8_t>(std::lround(q.pixels[c * plane + i] * 255.0f));
  job.rows.resize(static_cast<std::size_t>(img.height));
  for (int y = 0; y < img.height; ++y)
    job.rows[static_cast<std::size_t>(y)] = job.rgb.data() + static_cast<std::size_t>(y) * img.width * 3;
  if (!encode_into(&job))
    throw IoError(std::string("PNG encoding failed: ") + job.message);
  return out;
}

Image load_png(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw ImageError(ImageError::Kind::not_found, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_png(bytes);
  } catch (const ImageError& e) {
    throw ImageError(e.kind(), path.string() + ": " + e.what());
  }
}

void save_png(const Image& img, const std::filesystem::path& path) {
  const auto bytes = encode_png(img);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace gcfsr
