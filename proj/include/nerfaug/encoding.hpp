// Copyright Contributors to the nerfaug project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "nerfaug/geometry.hpp"

#include <cstddef>
#include <span>

namespace nerfaug {

struct GridShape {
  int resolution = 128;
  int channels = 16;
  Aabb bounds;

  std::size_t parameter_count() const {
    return 3u * static_cast<std::size_t>(resolution) * resolution * channels;
  }
  int feature_dim() const { return 3 * channels; }
};

/// Three axis-aligned feature planes (xy, xz, yz), each resolution x
/// resolution nodes of `channels` values. Node (0, 0) sits on the box minimum
/// and node (R-1, R-1) on the maximum. Non-owning view over the grid values,
/// laid out plane-major, then row, column, channel.
class PlaneGridEncoder {
 public:
  PlaneGridEncoder(const GridShape& shape, std::span<const double> values);

  const GridShape& shape() const { return shape_; }
  int feature_dim() const { return shape_.feature_dim(); }

  /// Concatenated bilinear lookups of the three planes. Positions outside the
  /// box are clamped to it; the return value reports whether that happened.
  bool encode(const Vec3& p, std::span<double> features) const;

  /// Accumulates d(loss)/d(grid) into `d_grid` and, when `d_position` is
  /// non-null, adds d(loss)/d(p) to it. Clamped axes get zero position
  /// gradient.
  void backward(const Vec3& p, std::span<const double> d_features, std::span<double> d_grid,
                Vec3* d_position) const;

  /// Offset of node (u, v) on `plane` within the value array.
  std::size_t node_offset(int plane, int u, int v) const {
    const auto r = static_cast<std::size_t>(shape_.resolution);
    return ((static_cast<std::size_t>(plane) * r + v) * r + u) * shape_.channels;
  }

  /// World position of a node for the two axes of `plane`; the third
  /// coordinate is taken from `fill`.
  Vec3 node_position(int plane, int u, int v, const Vec3& fill) const;

  static constexpr int kPlaneAxes[3][2] = {{0, 1}, {0, 2}, {1, 2}};

 private:
  struct AxisCoord {
    int cell;
    double frac;
    bool clamped;
  };
  AxisCoord locate(double x, int axis) const;

  GridShape shape_;
  std::span<const double> values_;
  Vec3 scale_;  // (R - 1) / extent
};

/// Real spherical harmonics up to `degree` (0..3), evaluated on unit vectors.
class DirectionEncoder {
 public:
  static constexpr int kMaxDegree = 3;

  explicit DirectionEncoder(int degree);

  int degree() const { return degree_; }
  int output_dim() const { return (degree_ + 1) * (degree_ + 1); }

  void encode(const Vec3& d, std::span<double> out) const;
  void encode(double theta, double phi, std::span<double> out) const;

  /// Adds d(loss)/d(direction) for the polynomial form of the basis.
  void backward(const Vec3& d, std::span<const double> d_out, Vec3& d_direction) const;

  /// sqrt((2l + 1) / 4pi): bound on every band-l basis value.
  static double band_bound(int l);

 private:
  int degree_;
};

}  // namespace nerfaug
