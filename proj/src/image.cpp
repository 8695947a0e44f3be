// Copyright Contributors to the nerfaug project
// SPDX-License-Identifier: Apache-2.0

#include "nerfaug/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>

namespace nerfaug {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

std::uint8_t quantize(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

}  // namespace

Image read_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw std::runtime_error("cannot open image " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("libpng: cannot create read struct");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("libpng: cannot create info struct");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("cannot decode PNG " + path.string());
  }
  png_init_io(png, file.get());
  png_read_info(png, info);

  const int color_type = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_read_update_info(png, info);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int channels = png_get_channels(png, info);
  std::vector<png_byte> buffer(static_cast<std::size_t>(width) * height * channels);
  std::vector<png_bytep> rows(height);
  for (int j = 0; j < height; ++j) rows[j] = buffer.data() + static_cast<std::size_t>(j) * width * channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image image(width, height, channels);
  for (std::size_t k = 0; k < buffer.size(); ++k) image.data[k] = buffer[k] / 255.0;
  return image;
}

void write_png(const std::filesystem::path& path, const Image& image) {
  if (image.channels < 1 || image.channels > 4) throw std::invalid_argument("write_png: 1 to 4 channels supported");
  static constexpr int kColorTypes[] = {PNG_COLOR_TYPE_GRAY, PNG_COLOR_TYPE_GRAY_ALPHA, PNG_COLOR_TYPE_RGB,
                                        PNG_COLOR_TYPE_RGB_ALPHA};
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw std::runtime_error("cannot create image " + path.string());

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("libpng: cannot create write struct");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("libpng: cannot create info struct");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("cannot encode PNG " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, image.width, image.height, 8, kColorTypes[image.channels - 1], PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(static_cast<std::size_t>(image.width) * image.channels);
  for (int j = 0; j < image.height; ++j) {
    const double* src = image.data.data() + static_cast<std::size_t>(j) * row.size();
    for (std::size_t k = 0; k < row.size(); ++k) row[k] = quantize(src[k]);
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image to_gray(const Image& image) {
  if (image.channels == 1) return image;
  const int color = image.channels == 2 || image.channels == 4 ? image.channels - 1 : image.channels;
  Image out(image.width, image.height, 1);
  for (std::size_t p = 0; p < image.pixel_count(); ++p) {
    double acc = 0.0;
    for (int c = 0; c < color; ++c) acc += image.data[p * image.channels + c];
    out.data[p] = acc / color;
  }
  return out;
}

Image to_rgb(const Image& image) {
  if (image.channels == 3) return image;
  Image out(image.width, image.height, 3);
  for (std::size_t p = 0; p < image.pixel_count(); ++p) {
    for (int c = 0; c < 3; ++c) {
      const int src = image.channels >= 3 ? c : 0;
      out.data[p * 3 + c] = image.data[p * image.channels + src];
    }
  }
  return out;
}

Image with_alpha(const Image& color, const Image& alpha) {
  if (!color.same_size(alpha) || alpha.channels != 1) throw std::invalid_argument("with_alpha: size mismatch");
  Image out(color.width, color.height, color.channels + 1);
  for (std::size_t p = 0; p < color.pixel_count(); ++p) {
    for (int c = 0; c < color.channels; ++c) out.data[p * out.channels + c] = color.data[p * color.channels + c];
    out.data[p * out.channels + color.channels] = alpha.data[p];
  }
  return out;
}

namespace {

// Overlap weights of each destination cell with the source cells.
struct Span1d {
  int first;
  std::vector<double> weights;
};

std::vector<Span1d> area_spans(int src, int dst) {
  std::vector<Span1d> spans(dst);
  const double scale = static_cast<double>(src) / dst;
  for (int o = 0; o < dst; ++o) {
    const double a = o * scale;
    const double b = (o + 1) * scale;
    const int first = static_cast<int>(std::floor(a));
    const int last = std::min(src - 1, static_cast<int>(std::ceil(b)) - 1);
    spans[o].first = first;
    for (int s = first; s <= last; ++s) {
      const double overlap = std::min(b, s + 1.0) - std::max(a, static_cast<double>(s));
      spans[o].weights.push_back(std::max(overlap, 0.0) / scale);
    }
  }
  return spans;
}

}  // namespace

Image resize_area(const Image& image, int width, int height) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("resize_area: target size must be positive");
  if (width == image.width && height == image.height) return image;
  const auto xs = area_spans(image.width, width);
  const auto ys = area_spans(image.height, height);
  const int ch = image.channels;
  Image horizontal(width, image.height, ch);
  for (int j = 0; j < image.height; ++j)
    for (int i = 0; i < width; ++i)
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (std::size_t k = 0; k < xs[i].weights.size(); ++k) acc += xs[i].weights[k] * image.at(xs[i].first + k, j, c);
        horizontal.at(i, j, c) = acc;
      }
  Image out(width, height, ch);
  for (int j = 0; j < height; ++j)
    for (int i = 0; i < width; ++i)
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (std::size_t k = 0; k < ys[j].weights.size(); ++k)
          acc += ys[j].weights[k] * horizontal.at(i, ys[j].first + k, c);
        out.at(i, j, c) = acc;
      }
  return out;
}

}  // namespace nerfaug
