// Copyright Contributors to the nerfaug project
// SPDX-License-Identifier: Apache-2.0

#include "nerfaug/augment.hpp"
#include "nerfaug/gradcheck.hpp"
#include "nerfaug/render.hpp"
#include "nerfaug/toy_scene.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace nerfaug {
namespace {

/// Straightforward compositing recurrence in long double, written
/// independently of the library code.
struct LongComposite {
  long double color[3] = {0, 0, 0};
  long double opacity = 0;
  std::vector<long double> weights;
};

LongComposite long_composite(std::span<const CompositeSample> samples) {
  LongComposite r;
  long double t = 1.0L;
  for (const auto& s : samples) {
    const long double alpha = 1.0L - std::exp(-static_cast<long double>(s.sigma) * s.delta);
    const long double w = t * alpha;
    r.weights.push_back(w);
    for (int c = 0; c < 3; ++c) r.color[c] += w * s.rgb[c];
    r.opacity += w;
    t *= 1.0L - alpha;
  }
  return r;
}

std::vector<CompositeSample> random_ray(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> count(1, 128);
  std::exponential_distribution<double> sigma(0.7);
  std::uniform_real_distribution<double> u(0.0, 1.0), delta(0.001, 0.2);
  std::vector<CompositeSample> s(count(rng));
  for (auto& x : s) {
    x.sigma = u(rng) < 0.3 ? 0.0 : sigma(rng) * 10.0;
    x.rgb = Vec3(u(rng), u(rng), u(rng));
    x.delta = delta(rng);
  }
  return s;
}

TEST(Composite, TransparentRay) {
  std::vector<CompositeSample> s(5, CompositeSample{0.0, Vec3(1, 1, 1), 0.1});
  const auto r = composite(s);
  EXPECT_EQ(r.color, Vec3::Zero());
  EXPECT_EQ(r.opacity, 0.0);
}

TEST(Composite, SaturatedFirstSample) {
  std::vector<CompositeSample> s = {{40.0, Vec3(0.2, 0.4, 0.6), 1.0}, {5.0, Vec3(1, 1, 1), 1.0}};
  const auto r = composite(s);
  EXPECT_LT((r.color - Vec3(0.2, 0.4, 0.6)).norm(), 1e-12);
  EXPECT_NEAR(r.opacity, 1.0, 1e-12);
}

TEST(Composite, TwoSampleWorkedCase) {
  std::vector<CompositeSample> s = {{1.0, Vec3(1, 0, 0), 1.0}, {1.0, Vec3(0, 1, 0), 1.0}};
  const auto r = composite(s);
  const auto ref = long_composite(s);
  EXPECT_NEAR(r.weights[0], static_cast<double>(ref.weights[0]), 1e-15);
  EXPECT_NEAR(r.weights[1], static_cast<double>(ref.weights[1]), 1e-15);
  EXPECT_NEAR(r.weights[0], 0.63212, 5e-6);
  EXPECT_NEAR(r.weights[1], 0.23254, 5e-6);
  EXPECT_NEAR(r.color.x(), 0.63212, 5e-6);
  EXPECT_NEAR(r.color.y(), 0.23254, 5e-6);
  EXPECT_EQ(r.color.z(), 0.0);
}

TEST(Composite, MatchesHighPrecisionRecurrence) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto s = random_ray(rng);
    const auto r = composite(s);
    const auto ref = long_composite(s);
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(r.color[c], static_cast<double>(ref.color[c]), 1e-10);
    EXPECT_NEAR(r.opacity, static_cast<double>(ref.opacity), 1e-10);
  }
}

TEST(Composite, WeightsPlusResidualIsOne) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto r = composite(random_ray(rng));
    ASSERT_EQ(r.transmittance.size(), r.weights.size() + 1);
    EXPECT_NEAR(r.opacity + r.transmittance.back(), 1.0, 1e-12);
    EXPECT_GE(r.opacity, 0.0);
    EXPECT_LE(r.opacity, 1.0 + 1e-15);
  }
}

TEST(Composite, OpacityIsMonotoneInDensity) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> bump(0.0, 3.0);
  for (int trial = 0; trial < 500; ++trial) {
    auto s = random_ray(rng);
    const double before = composite(s).opacity;
    s[rng() % s.size()].sigma += bump(rng);
    // Summed weights may round down by a few ulps once saturated.
    EXPECT_GE(composite(s).opacity, before - 1e-14);
  }
}

TEST(Composite, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    auto s = random_ray(rng);
    for (auto& x : s) x.sigma += 0.1;
    const Vec3 dc(u(rng), u(rng), u(rng));
    const double dop = u(rng);
    const auto objective = [&](const std::vector<CompositeSample>& v) {
      const auto r = composite(v);
      return dc.dot(r.color) + dop * r.opacity;
    };
    const auto g = composite_backward(s, composite(s), dc, dop);
    const double h = 1e-6;
    for (std::size_t n = 0; n < s.size(); n += 7) {
      auto p = s, m = s;
      p[n].sigma += h;
      m[n].sigma -= h;
      const double fd = (objective(p) - objective(m)) / (2 * h);
      if (std::max(std::abs(fd), std::abs(g.d_sigma[n])) > 1e-6) {
        EXPECT_LT(relative_error(g.d_sigma[n], fd), 1e-4);
      }
      for (int c = 0; c < 3; ++c) {
        p = s;
        m = s;
        p[n].rgb[c] += h;
        m[n].rgb[c] -= h;
        const double fdc = (objective(p) - objective(m)) / (2 * h);
        if (std::max(std::abs(fdc), std::abs(g.d_rgb[n][c])) > 1e-6) {
          EXPECT_LT(relative_error(g.d_rgb[n][c], fdc), 1e-4);
        }
      }
    }
  }
}

FieldConfig render_config() {
  FieldConfig c = FieldConfig::compact();
  c.grid_resolution = 12;
  c.grid_channels = 4;
  c.embedding_dim = 4;
  c.num_images = 3;
  return c;
}

const CameraIntrinsics kCamera{20.0, 20.0, 8.0, 6.0, 16, 12};

Pose front_pose() { return look_at(Vec3(0.3, -3.0, 0.8), Vec3::Zero()); }

TEST(Render, BatchedMatchesSerialReference) {
  const FieldParameters p = randomized_parameters(render_config(), 5);
  RenderConfig rc;
  rc.samples_per_ray = 24;
  rc.chunk_rays = 37;
  for (bool jitter : {false, true}) {
    rc.jitter = jitter;
    rc.jitter_seed = 99;
    const auto fast = render_image(p, front_pose(), kCamera, p.embedding(1), rc);
    const auto ref = render_image_reference(p, front_pose(), kCamera, p.embedding(1), rc);
    for (std::size_t k = 0; k < fast.color.data.size(); ++k) EXPECT_NEAR(fast.color.data[k], ref.color.data[k], 1e-10);
    for (std::size_t k = 0; k < fast.opacity.data.size(); ++k)
      EXPECT_NEAR(fast.opacity.data[k], ref.opacity.data[k], 1e-10);
  }
}

TEST(Render, DeterministicAndChunkIndependent) {
  const FieldParameters p = randomized_parameters(render_config(), 6);
  RenderConfig rc;
  rc.samples_per_ray = 16;
  const auto a = render_image(p, front_pose(), kCamera, p.embedding(0), rc);
  const auto b = render_image(p, front_pose(), kCamera, p.embedding(0), rc);
  rc.chunk_rays = 5;
  const auto c = render_image(p, front_pose(), kCamera, p.embedding(0), rc);
  EXPECT_EQ(a.color, b.color);
  EXPECT_EQ(a.opacity, b.opacity);
  EXPECT_EQ(a.color, c.color);
  for (double o : a.opacity.data) {
    EXPECT_GE(o, 0.0);
    EXPECT_LE(o, 1.0);
  }
}

TEST(Render, ZeroDensityFieldGivesEmptyMask) {
  FieldParameters p = randomized_parameters(render_config(), 8);
  const MlpShape shape = p.config().density_shape();
  const int last = shape.layer_count() - 1;
  auto dens = p.group(ParamGroup::kDensityMlp);
  for (int col = 0; col < shape.widths[last]; ++col) dens[shape.weight_offset(last) + col * shape.widths[last + 1]] = 0.0;
  dens[shape.bias_offset(last)] = -1000.0;
  RenderConfig rc;
  rc.samples_per_ray = 16;
  const Image mask = render_mask(p, front_pose(), kCamera, rc);
  for (double m : mask.data) EXPECT_EQ(m, 0.0);
}

TEST(Render, MaskIgnoresAppearance) {
  const FieldParameters p = randomized_parameters(render_config(), 9);
  RenderConfig rc;
  rc.samples_per_ray = 16;
  Rng rng(10);
  std::vector<Coloring> colorings;
  for (int k = 0; k < 3; ++k) {
    const auto e = p.embedding(k);
    colorings.push_back({{e.begin(), e.end()}, {}});
  }
  colorings.push_back({colorings[0].embedding, perturb_color_network(p, 0.1, rng)});
  const auto shared = render_appearances(p, front_pose(), kCamera, colorings, rc);
  const Image opacity = render_opacity(p, front_pose(), kCamera, rc);
  EXPECT_EQ(shared.opacity, opacity);
  for (const auto& c : colorings) {
    const auto single = render_image(p, front_pose(), kCamera, c.embedding, rc);
    EXPECT_EQ(single.opacity, opacity);
  }
  EXPECT_NE(shared.colors[0], shared.colors[1]);
  EXPECT_NE(shared.colors[0], shared.colors[3]);
}

TEST(Render, ThresholdIsInclusive) {
  Image o(3, 1, 1);
  o.data = {0.49, 0.5, 0.51};
  EXPECT_EQ(threshold_mask(o, 0.5).data, (std::vector<double>{0.0, 1.0, 1.0}));
}

TEST(Render, RejectsWrongEmbeddingSize) {
  const FieldParameters p = randomized_parameters(render_config(), 11);
  const std::vector<double> e(7, 0.0);
  EXPECT_THROW(render_image(p, front_pose(), kCamera, e, RenderConfig{}), std::invalid_argument);
}

TEST(Render, MaskIou) {
  Image a(2, 2, 1), b(2, 2, 1);
  a.data = {1, 1, 0, 0};
  b.data = {1, 0, 1, 0};
  EXPECT_DOUBLE_EQ(mask_iou(a, b), 1.0 / 3.0);
  EXPECT_EQ(mask_iou(Image(2, 2, 1), Image(2, 2, 1)), 1.0);
  EXPECT_THROW(mask_iou(a, Image(3, 2, 1)), std::invalid_argument);
}

TEST(RayChunkKernel, ColorGradientMatchesFiniteDifferences) {
  // Pixel color through the whole chunk: d<c, color>/d(params) for a few rays.
  const FieldParameters p = randomized_parameters(render_config(), 12);
  const auto rays = cast_all_rays(front_pose(), kCamera);
  std::vector<RayQuery> q;
  std::vector<std::uint64_t> ids;
  for (std::size_t k = 70; k < 78; ++k) {
    q.push_back(make_query(rays[k], 1.0, 5.0, p.config().bounds, static_cast<int>(k % 3)));
    ids.push_back(k);
  }
  const Eigen::Matrix3Xd dc = Eigen::Matrix3Xd::Random(3, q.size());
  const auto objective = [&](const FieldParameters& params) {
    RayChunkKernel k(params, 12);
    k.build(q, nullptr, std::nullopt, ids);
    k.forward_density(false);
    k.forward_color({}, false, {}, false);
    k.composite_color();
    return (k.ray_color().array() * dc.array()).sum();
  };
  RayChunkKernel kernel(p, 12);
  kernel.build(q, nullptr, std::nullopt, ids);
  kernel.forward_density(true);
  kernel.forward_color({}, false, {}, true);
  kernel.composite_color();
  std::vector<double> grad(p.flat().size(), 0.0);
  kernel.backward(dc, Eigen::VectorXd::Zero(kernel.sample_count()), grad);

  FieldParameters probe = p;
  std::mt19937_64 rng(13);
  int checked = 0;
  for (int attempt = 0; attempt < 400 && checked < 40; ++attempt) {
    const std::size_t k = rng() % grad.size();
    if (std::abs(grad[k]) < 1e-5) continue;
    const double x = probe.flat()[k], h = 1e-6;
    probe.flat()[k] = x + h;
    const double up = objective(probe);
    probe.flat()[k] = x - h;
    const double down = objective(probe);
    probe.flat()[k] = x;
    const double fd = (up - down) / (2 * h);
    // Skip coordinates whose step crosses a ReLU or grid-cell kink.
    probe.flat()[k] = x + h / 2;
    const double up2 = objective(probe);
    probe.flat()[k] = x - h / 2;
    const double down2 = objective(probe);
    probe.flat()[k] = x;
    if (relative_error(fd, (up2 - down2) / h) > 5e-5) continue;
    EXPECT_LT(relative_error(grad[k], fd), 1e-4) << "coordinate " << k;
    ++checked;
  }
  EXPECT_GE(checked, 20);
}

}  // namespace
}  // namespace nerfaug
