// Copyright Contributors to the nerfaug project
// SPDX-License-Identifier: Apache-2.0

#include "nerfaug/encoding.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace nerfaug {

PlaneGridEncoder::PlaneGridEncoder(const GridShape& shape, std::span<const double> values)
    : shape_(shape), values_(values) {
  if (shape.resolution < 2 || shape.channels < 1) throw std::invalid_argument("PlaneGridEncoder: bad grid shape");
  if (values.size() != shape.parameter_count())
    throw std::invalid_argument("PlaneGridEncoder: value count does not match the grid shape");
  const Vec3 extent = shape.bounds.extent();
  if (!(extent.array() > 0.0).all()) throw std::invalid_argument("PlaneGridEncoder: empty bounding box");
  scale_ = Vec3::Constant(shape.resolution - 1).cwiseQuotient(extent);
}

PlaneGridEncoder::AxisCoord PlaneGridEncoder::locate(double x, int axis) const {
  const double last = shape_.resolution - 1;
  double g = (x - shape_.bounds.min[axis]) * scale_[axis];
  bool clamped = false;
  if (!(g >= 0.0)) {
    g = 0.0;
    clamped = true;
  } else if (g > last) {
    g = last;
    clamped = true;
  }
  int cell = static_cast<int>(g);
  if (cell > shape_.resolution - 2) cell = shape_.resolution - 2;
  return {cell, g - cell, clamped};
}

bool PlaneGridEncoder::encode(const Vec3& p, std::span<double> features) const {
  const int c_count = shape_.channels;
  bool clamped = false;
  for (int k = 0; k < 3; ++k) {
    const auto u = locate(p[kPlaneAxes[k][0]], kPlaneAxes[k][0]);
    const auto v = locate(p[kPlaneAxes[k][1]], kPlaneAxes[k][1]);
    clamped = clamped || u.clamped || v.clamped;
    const double w00 = (1.0 - u.frac) * (1.0 - v.frac);
    const double w10 = u.frac * (1.0 - v.frac);
    const double w01 = (1.0 - u.frac) * v.frac;
    const double w11 = u.frac * v.frac;
    const double* g00 = values_.data() + node_offset(k, u.cell, v.cell);
    const double* g10 = g00 + c_count;
    const double* g01 = values_.data() + node_offset(k, u.cell, v.cell + 1);
    const double* g11 = g01 + c_count;
    double* out = features.data() + k * c_count;
    for (int c = 0; c < c_count; ++c) out[c] = w00 * g00[c] + w10 * g10[c] + w01 * g01[c] + w11 * g11[c];
  }
  return clamped;
}

void PlaneGridEncoder::backward(const Vec3& p, std::span<const double> d_features, std::span<double> d_grid,
                                Vec3* d_position) const {
  const int c_count = shape_.channels;
  for (int k = 0; k < 3; ++k) {
    const int axis_u = kPlaneAxes[k][0];
    const int axis_v = kPlaneAxes[k][1];
    const auto u = locate(p[axis_u], axis_u);
    const auto v = locate(p[axis_v], axis_v);
    const double w00 = (1.0 - u.frac) * (1.0 - v.frac);
    const double w10 = u.frac * (1.0 - v.frac);
    const double w01 = (1.0 - u.frac) * v.frac;
    const double w11 = u.frac * v.frac;
    const std::size_t o00 = node_offset(k, u.cell, v.cell);
    const std::size_t o01 = node_offset(k, u.cell, v.cell + 1);
    const double* df = d_features.data() + k * c_count;
    double* a00 = d_grid.data() + o00;
    double* a10 = a00 + c_count;
    double* a01 = d_grid.data() + o01;
    double* a11 = a01 + c_count;
    for (int c = 0; c < c_count; ++c) {
      a00[c] += w00 * df[c];
      a10[c] += w10 * df[c];
      a01[c] += w01 * df[c];
      a11[c] += w11 * df[c];
    }
    if (d_position) {
      const double* g00 = values_.data() + o00;
      const double* g10 = g00 + c_count;
      const double* g01 = values_.data() + o01;
      const double* g11 = g01 + c_count;
      double du = 0.0;
      double dv = 0.0;
      for (int c = 0; c < c_count; ++c) {
        du += df[c] * ((1.0 - v.frac) * (g10[c] - g00[c]) + v.frac * (g11[c] - g01[c]));
        dv += df[c] * ((1.0 - u.frac) * (g01[c] - g00[c]) + u.frac * (g11[c] - g10[c]));
      }
      if (!u.clamped) (*d_position)[axis_u] += du * scale_[axis_u];
      if (!v.clamped) (*d_position)[axis_v] += dv * scale_[axis_v];
    }
  }
}

Vec3 PlaneGridEncoder::node_position(int plane, int u, int v, const Vec3& fill) const {
  Vec3 p = fill;
  const int a = kPlaneAxes[plane][0];
  const int b = kPlaneAxes[plane][1];
  p[a] = shape_.bounds.min[a] + u / scale_[a];
  p[b] = shape_.bounds.min[b] + v / scale_[b];
  return p;
}

namespace {

constexpr double kC0 = 0.28209479177387814;
constexpr double kC1 = 0.48860251190291987;
constexpr double kC2a = 1.0925484305920792;
constexpr double kC2b = 0.94617469575755997;
constexpr double kC2c = 0.31539156525251999;
constexpr double kC2d = 0.54627421529603959;
constexpr double kC3a = 0.59004358992664352;
constexpr double kC3b = 2.8906114426405538;
constexpr double kC3c = 0.45704579946446572;
constexpr double kC3d = 0.3731763325901154;
constexpr double kC3e = 1.4453057213202769;

}  // namespace

DirectionEncoder::DirectionEncoder(int degree) : degree_(degree) {
  if (degree < 0 || degree > kMaxDegree) throw std::invalid_argument("DirectionEncoder: degree must be in [0, 3]");
}

double DirectionEncoder::band_bound(int l) { return std::sqrt((2.0 * l + 1.0) / (4.0 * std::numbers::pi)); }

void DirectionEncoder::encode(double theta, double phi, std::span<double> out) const {
  encode(direction_from_angles(theta, phi), out);
}

void DirectionEncoder::encode(const Vec3& d, std::span<double> out) const {
  const double x = d.x(), y = d.y(), z = d.z();
  out[0] = kC0;
  if (degree_ < 1) return;
  out[1] = -kC1 * y;
  out[2] = kC1 * z;
  out[3] = -kC1 * x;
  if (degree_ < 2) return;
  const double xx = x * x, yy = y * y, zz = z * z;
  out[4] = kC2a * x * y;
  out[5] = -kC2a * y * z;
  out[6] = kC2b * zz - kC2c;
  out[7] = -kC2a * x * z;
  out[8] = kC2d * (xx - yy);
  if (degree_ < 3) return;
  out[9] = kC3a * y * (-3.0 * xx + yy);
  out[10] = kC3b * x * y * z;
  out[11] = kC3c * y * (1.0 - 5.0 * zz);
  out[12] = kC3d * z * (5.0 * zz - 3.0);
  out[13] = kC3c * x * (1.0 - 5.0 * zz);
  out[14] = kC3e * z * (xx - yy);
  out[15] = kC3a * x * (-xx + 3.0 * yy);
}

void DirectionEncoder::backward(const Vec3& d, std::span<const double> g, Vec3& dd) const {
  if (degree_ < 1) return;
  const double x = d.x(), y = d.y(), z = d.z();
  dd.x() += -kC1 * g[3];
  dd.y() += -kC1 * g[1];
  dd.z() += kC1 * g[2];
  if (degree_ < 2) return;
  dd.x() += kC2a * y * g[4] - kC2a * z * g[7] + 2.0 * kC2d * x * g[8];
  dd.y() += kC2a * x * g[4] - kC2a * z * g[5] - 2.0 * kC2d * y * g[8];
  dd.z() += -kC2a * y * g[5] + 2.0 * kC2b * z * g[6] - kC2a * x * g[7];
  if (degree_ < 3) return;
  const double xx = x * x, yy = y * y, zz = z * z;
  dd.x() += kC3a * (-6.0 * x * y) * g[9] + kC3b * y * z * g[10] + kC3c * (1.0 - 5.0 * zz) * g[13] +
            2.0 * kC3e * x * z * g[14] + kC3a * (-3.0 * xx + 3.0 * yy) * g[15];
  dd.y() += kC3a * (-3.0 * xx + 3.0 * yy) * g[9] + kC3b * x * z * g[10] + kC3c * (1.0 - 5.0 * zz) * g[11] -
            2.0 * kC3e * y * z * g[14] + kC3a * 6.0 * x * y * g[15];
  dd.z() += kC3b * x * y * g[10] - 10.0 * kC3c * y * z * g[11] + kC3d * (15.0 * zz - 3.0) * g[12] -
            10.0 * kC3c * x * z * g[13] + kC3e * (xx - yy) * g[14];
}

}  // namespace nerfaug
