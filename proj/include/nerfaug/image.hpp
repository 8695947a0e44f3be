// Copyright Contributors to the nerfaug project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace nerfaug {

/// Interleaved floating-point image with values nominally in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, int c, double fill = 0.0)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

  double& at(int i, int j, int c = 0) { return data[(static_cast<std::size_t>(j) * width + i) * channels + c]; }
  double at(int i, int j, int c = 0) const {
    return data[(static_cast<std::size_t>(j) * width + i) * channels + c];
  }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  bool same_size(const Image& o) const { return width == o.width && height == o.height; }
  bool operator==(const Image&) const = default;
};

/// Reads an 8-bit PNG (gray, gray+alpha, RGB or RGBA) into [0, 1] values.
Image read_png(const std::filesystem::path& path);

/// Writes 1 to 4 channels as 8-bit PNG, rounding after clamping to [0, 1].
void write_png(const std::filesystem::path& path, const Image& image);

/// Channel-mean conversion to a single channel; identity for 1 channel.
Image to_gray(const Image& image);
/// Replicates a gray image into 3 channels; identity for 3 channels.
Image to_rgb(const Image& image);
/// Stacks `alpha` (1 channel) onto `color`.
Image with_alpha(const Image& color, const Image& alpha);

/// Area-averaging resample to the target size.
Image resize_area(const Image& image, int width, int height);

}  // namespace nerfaug
