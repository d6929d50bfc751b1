#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace difftex;
using namespace difftex::testing;

namespace {

ProxyModel box_model() {
  SynthSpec s = *standard_spec("box24");
  return synth_geometry(s);
}

// Nearest polygon along the pixel ray, by brute-force intersection.
std::pair<int, double> ray_cast(const ProxyModel& m, const Camera& cam, int x, int y) {
  const Vec3 dir_cam((x - cam.cx) / cam.fx, (y - cam.cy) / cam.fy, 1.0);
  const Vec3 dir = cam.rotation.transpose() * dir_cam;
  const Vec3 c = cam.center();
  const double far = 1e4;
  int best = -1;
  double best_z = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < m.polygons.size(); ++i) {
    const auto s = segment_hit(m.polygons[i], c, c + far * dir);
    if (!s) continue;
    const double z = *s * far;  // camera z, since dir_cam.z() == 1
    if (z < best_z) {
      best_z = z;
      best = int(i);
    }
  }
  return {best, best_z};
}

}  // namespace

TEST(DepthBuffer, MatchesRayCast) {
  const ProxyModel m = box_model();
  for (const Vec3& eye : {Vec3(18, -9, 14), Vec3(-5, 20, 4), Vec3(0.5, 0.3, 25)}) {
    const Camera cam = Camera::look_at(eye, {0, 0, 3}, Vec3::UnitZ(), 160, 120, 150);
    const DepthBuffer buf = render_depth(m, cam);
    std::size_t covered = 0, mismatch = 0;
    for (int y = 0; y < cam.height; ++y)
      for (int x = 0; x < cam.width; ++x) {
        const auto [id, z] = ray_cast(m, cam, x, y);
        if (id >= 0 || buf.id(x, y) >= 0) ++covered;
        if (id != buf.id(x, y)) {
          ++mismatch;
          continue;
        }
        if (id >= 0) EXPECT_NEAR(buf.depth(x, y), z, 1e-9 * z);
      }
    ASSERT_GT(covered, 1000u);
    EXPECT_LE(double(mismatch), 0.01 * double(covered));
  }
}

TEST(ChartVisibility, MatchesRayCastWithOccluder) {
  // A floor quad partly shadowed (in view) by a raised smaller quad.
  const ProxyModel m = ProxyModel::from_faces(
      {{-2, -2, 0}, {2, -2, 0}, {2, 2, 0}, {-2, 2, 0}, {-0.5, -0.5, 1}, {0.5, -0.5, 1}, {0.5, 0.5, 1}, {-0.5, 0.5, 1}},
      {{0, 1, 2, 3}, {4, 5, 6, 7}});
  std::vector<Photo> photos(1);
  photos[0].camera = Camera::look_at({3, 1, 6}, {0, 0, 0}, Vec3::UnitZ(), 200, 160, 180);
  photos[0].rgb = Image(200, 160, Vec3::Zero());
  const VisibilityIndex index = build_visibility_index(m, photos);
  const UVChart chart = build_chart(m.polygons[0], 64);
  const Mask vis = chart_visibility(index, 0, 0, chart, photos[0].camera);
  const Vec3 c = photos[0].camera.center();
  std::size_t mismatch = 0, hidden = 0;
  for (int r = 0; r < chart.height; ++r)
    for (int col = 0; col < chart.width; ++col) {
      const Vec3 x = chart.texel_point(col, r);
      const bool blocked = segment_hit(m.polygons[1], c, x).has_value();
      const bool in_view = texel_to_pixel(chart, photos[0].camera, col, r).in_view;
      const bool expect = chart.inside(col, r) && in_view && !blocked;
      hidden += blocked;
      mismatch += expect != bool(vis(col, r));
    }
  EXPECT_GT(hidden, 50u);
  EXPECT_LE(double(mismatch), 0.01 * double(chart.texel_count()));
}

TEST(ChartVisibility, BackFacingIsEmpty) {
  const ProxyModel m = quad_model();
  std::vector<Photo> photos(1);
  photos[0].camera = camera_toward({0.5, 0, -4}, 64, 64);
  const VisibilityIndex index = build_visibility_index(m, photos);
  const UVChart chart = build_chart(m.polygons[0], 16);
  const Mask vis = chart_visibility(index, 0, 0, chart, photos[0].camera);
  for (auto v : vis.data) EXPECT_EQ(v, 0);
  const Mask img = image_visibility(index, 0, 0, photos[0].camera);
  for (auto v : img.data) EXPECT_EQ(v, 0);
}

TEST(ChartVisibility, FrontalQuadFullyVisible) {
  const ProxyModel m = quad_model();
  std::vector<Photo> photos(1);
  photos[0].camera = camera_toward({0, 0, 4}, 64, 64);
  const VisibilityIndex index = build_visibility_index(m, photos);
  const UVChart chart = build_chart(m.polygons[0], 16);
  const Mask vis = chart_visibility(index, 0, 0, chart, photos[0].camera);
  for (auto v : vis.data) EXPECT_EQ(v, 1);
}

TEST(UpdateActivation, ThresholdOracle) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int w = 9, h = 7;
  const std::size_t slots = 4;
  const double tau = 0.2;
  for (int trial = 0; trial < 20; ++trial) {
    MaskSet ms;
    WeightField wf(w, h, {0, 1, 2, 3});
    for (std::size_t k = 0; k < slots; ++k) {
      ms.photo_ids.push_back(int(k));
      Mask m(w, h);
      for (std::size_t t = 0; t < m.size(); ++t) {
        m[t] = u(rng) < 0.8;
        wf.theta[k][t] = m[t] ? 0.35 * u(rng) : 0.0;
      }
      ms.chart.push_back(m);
    }
    ms.recompute_overlap();
    const MaskSet before = ms;
    update_activation(ms, wf, tau);
    for (std::size_t t = 0; t < std::size_t(w * h); ++t) {
      int active = 0, above = 0;
      double best = -1;
      std::size_t best_k = 0;
      for (std::size_t k = 0; k < slots; ++k) {
        if (!before.chart[k][t]) continue;
        ++active;
        above += wf.theta[k][t] > tau;
        if (wf.theta[k][t] > best) {
          best = wf.theta[k][t];
          best_k = k;
        }
      }
      for (std::size_t k = 0; k < slots; ++k) {
        bool expect = before.chart[k][t] && wf.theta[k][t] > tau;
        if (active > 0 && above == 0 && k == best_k) expect = true;
        EXPECT_EQ(bool(ms.chart[k][t]), expect);
        EXPECT_LE(ms.chart[k][t], before.chart[k][t]);
      }
      if (active > 0) EXPECT_GE(ms.active_count(t), 1);
    }
  }
}

TEST(UpdateActivation, TieBreakUsesPreviousWeights) {
  MaskSet ms;
  ms.photo_ids = {0, 1};
  ms.chart = {Mask(1, 1, 1), Mask(1, 1, 1)};
  ms.recompute_overlap();
  WeightField wf(1, 1, {0, 1});
  std::vector<ScalarGrid> prev{ScalarGrid(1, 1, 0.01), ScalarGrid(1, 1, 0.02)};
  update_activation(ms, wf, 1e-3, &prev);
  EXPECT_EQ(ms.chart[0][0], 0);
  EXPECT_EQ(ms.chart[1][0], 1);
}

TEST(Masks, OverlapNeedsTwoPhotos) {
  MaskSet ms;
  ms.photo_ids = {0, 1};
  ms.chart = {Mask(3, 1), Mask(3, 1)};
  ms.chart[0].data = {1, 1, 0};
  ms.chart[1].data = {0, 1, 1};
  ms.recompute_overlap();
  EXPECT_EQ(ms.overlap[0].data, (std::vector<std::uint8_t>{0, 1, 0}));
  EXPECT_EQ(ms.overlap[1].data, (std::vector<std::uint8_t>{0, 1, 0}));
}

TEST(Masks, ImageMaskFollowsChartMask) {
  Instance in = random_instance(11, 12, 2, 48, 0.0);
  for (auto& m : in.masks.chart)
    for (int r = 0; r < m.height; ++r)
      for (int c = 0; c < m.width / 2; ++c) m(c, r) = 0;
  in.masks.recompute_overlap();
  std::vector<Mask> initial = in.masks.image;
  std::vector<Camera> cams;
  for (const Photo* p : in.prob.photos) cams.push_back(p->camera);
  MaskSet a = in.masks;
  pull_image_masks(a, in.prob.chart, initial, cams);
  MaskSet b = in.masks;
  pull_image_masks(b, in.prob);
  for (std::size_t k = 0; k < a.slots(); ++k) {
    EXPECT_EQ(a.image[k].data, b.image[k].data);
    std::size_t on = 0;
    for (std::size_t p = 0; p < a.image[k].size(); ++p) {
      EXPECT_LE(a.image[k][p], initial[k][p]);
      on += a.image[k][p];
    }
    EXPECT_GT(on, 0u);
  }
}
