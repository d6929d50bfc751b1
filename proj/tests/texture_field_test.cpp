#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace difftex;
using namespace difftex::testing;

TEST(Weights, InitEqualsQuality) {
  const Instance in = random_instance(5, 10, 3);
  const WeightField wf = init_weights(in.prob.mapped, in.masks, in.prob.chart.polygon.normal);
  const QualityMatrix qm = quality_matrix(in.prob.mapped, in.masks, in.prob.chart.polygon.normal);
  for (std::size_t k = 0; k < wf.slots(); ++k)
    for (std::size_t t = 0; t < wf.theta[k].size(); ++t) {
      EXPECT_DOUBLE_EQ(wf.theta[k][t], qm.q[k][t]);
      if (!in.masks.chart[k][t]) EXPECT_EQ(wf.theta[k][t], 0.0);
    }
}

TEST(Weights, NormalizedSumToOne) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Instance in = random_instance(seed, 12, 4, 40, 0.3);
    // Some texels with all weights zero use the uniform fallback.
    for (std::size_t k = 0; k < in.weights.slots(); ++k) in.weights.theta[k][0] = 0;
    for (std::size_t t = 0; t < in.weights.theta[0].size(); ++t) {
      if (in.masks.active_count(t) == 0) continue;
      double s = 0;
      for (std::size_t k = 0; k < in.weights.slots(); ++k) s += normalized_weight(in.weights, in.masks, k, t);
      EXPECT_NEAR(s, 1.0, 1e-9);
    }
  }
}

TEST(Compose, BruteForceBlend) {
  const Instance in = random_instance(21, 12, 4, 48, 0.3);
  const TextureMap tex = compose_texture(in.weights, in.prob.mapped, in.masks);
  for (std::size_t t = 0; t < tex.rgb.size(); ++t) {
    double sum = 0;
    Vec3 acc = Vec3::Zero();
    for (std::size_t k = 0; k < in.masks.slots(); ++k) {
      if (!in.masks.chart[k][t]) continue;
      sum += in.weights.theta[k][t];
      acc += in.weights.theta[k][t] * in.prob.mapped[k].color[t];
    }
    if (in.masks.active_count(t) == 0) {
      EXPECT_EQ(tex.hole[t], 1);
      continue;
    }
    EXPECT_EQ(tex.hole[t], 0);
    EXPECT_NEAR((tex.rgb[t] - acc / sum).norm(), 0, 1e-12);
  }
}

TEST(Compose, SinglePhotoReproducesMappedColors) {
  Instance in = random_instance(2, 10, 1, 48, 0.0);
  const TextureMap tex = compose_texture(in.weights, in.prob.mapped, in.masks);
  for (std::size_t t = 0; t < tex.rgb.size(); ++t)
    if (!tex.hole[t]) EXPECT_NEAR((tex.rgb[t] - in.prob.mapped[0].color[t]).norm(), 0, 1e-15);
}

TEST(SourceMap, DominantWeight) {
  WeightField wf(2, 1, {7, 9});
  wf.theta[0].data = {0.2, 0.6};
  wf.theta[1].data = {0.5, 0.6};
  MaskSet ms;
  ms.photo_ids = {7, 9};
  ms.chart = {Mask(2, 1, 1), Mask(2, 1, 1)};
  ms.recompute_overlap();
  const Grid<int> src = source_map(wf, ms);
  EXPECT_EQ(src[0], 9);
  EXPECT_EQ(src[1], 7);
  ms.chart[0][0] = ms.chart[1][0] = 0;
  EXPECT_EQ(source_map(wf, ms)[0], -1);
}

TEST(Upscale, ConstantPreserved) {
  const ScalarGrid g(7, 5, 0.37);
  const ScalarGrid up = upscale_bilinear(g);
  ASSERT_EQ(up.width, 14);
  ASSERT_EQ(up.height, 10);
  for (double v : up.data) EXPECT_DOUBLE_EQ(v, 0.37);
}

TEST(Upscale, LinearPreservedInside) {
  ScalarGrid g(8, 6);
  for (int r = 0; r < g.height; ++r)
    for (int c = 0; c < g.width; ++c) g(c, r) = 0.1 + 0.03 * c - 0.02 * r;
  const ScalarGrid up = upscale_bilinear(g);
  for (int r = 1; r < up.height - 1; ++r)
    for (int c = 1; c < up.width - 1; ++c) {
      const double x = 0.5 * c - 0.25, y = 0.5 * r - 0.25;
      EXPECT_NEAR(up(c, r), 0.1 + 0.03 * x - 0.02 * y, 1e-12);
    }
}

TEST(Upscale, MasksFollowParentAndVisibility) {
  MaskSet coarse;
  coarse.photo_ids = {0, 1};
  coarse.chart = {Mask(2, 2, 0), Mask(2, 2, 0)};
  coarse.chart[0].data = {1, 1, 0, 0};
  coarse.chart[1].data = {0, 1, 1, 1};
  coarse.recompute_overlap();
  std::vector<Mask> geo{Mask(4, 4, 1), Mask(4, 4, 1)};
  geo[1](3, 3) = 0;
  const MaskSet fine = upscale_masks(coarse, geo);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) {
      if (c == 3 && r == 3) continue;
      for (std::size_t k = 0; k < 2; ++k)
        EXPECT_EQ(bool(fine.chart[k](c, r)), geo[k](c, r) && coarse.chart[k](c / 2, r / 2)) << c << "," << r;
    }
  // No parent survives at (3,3): the visible slot with a parent in the 3x3 neighbourhood takes over.
  EXPECT_TRUE(fine.chart[0](3, 3));
  EXPECT_FALSE(fine.chart[1](3, 3));
}

TEST(Upscale, FieldResetsMomentsAndClamps) {
  Instance in = random_instance(8, 8, 2, 40, 0.0);
  in.weights.adam_steps = 5;
  in.weights.adam_m[0][0] = 1;
  std::vector<Mask> geo;
  for (const auto& m : in.masks.chart) {
    Mask g(2 * m.width, 2 * m.height, 0);
    for (int r = 0; r < g.height; ++r)
      for (int c = 0; c < g.width; ++c) g(c, r) = m(c / 2, r / 2);
    geo.push_back(g);
  }
  const auto [wf, ms] = upscale_field(in.weights, in.masks, geo);
  EXPECT_EQ(wf.width, 2 * in.weights.width);
  EXPECT_EQ(wf.adam_steps, 0);
  for (std::size_t k = 0; k < wf.slots(); ++k)
    for (std::size_t t = 0; t < wf.theta[k].size(); ++t) {
      EXPECT_EQ(wf.adam_m[k][t], 0.0);
      EXPECT_GE(wf.theta[k][t], 0.0);
      EXPECT_LE(wf.theta[k][t], 1.0);
      if (!ms.chart[k][t]) EXPECT_EQ(wf.theta[k][t], 0.0);
    }
}

TEST(DiffuseFill, FillsHolesFromNeighbours) {
  Image img(5, 5, Vec3::Constant(0.4));
  Mask fill(5, 5, 0);
  fill(2, 2) = fill(3, 2) = fill(4, 4) = 1;
  img(2, 2) = img(3, 2) = img(4, 4) = Vec3::Zero();
  EXPECT_TRUE(diffuse_fill(img, fill));
  for (const auto& p : img.data) EXPECT_NEAR((p - Vec3::Constant(0.4)).norm(), 0, 1e-15);

  Image blank(3, 3, Vec3::Zero());
  EXPECT_FALSE(diffuse_fill(blank, Mask(3, 3, 1)));
}
