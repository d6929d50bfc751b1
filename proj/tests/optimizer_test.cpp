#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace difftex;
using namespace difftex::testing;

namespace {

MaskSet full_masks(int w, int h, std::size_t slots) {
  MaskSet ms;
  for (std::size_t k = 0; k < slots; ++k) ms.photo_ids.push_back(int(k));
  ms.chart.assign(slots, Mask(w, h, 1));
  ms.image.assign(slots, Mask(1, 1, 0));
  ms.recompute_overlap();
  return ms;
}

// Textbook Adam on one scalar.
struct ScalarAdam {
  double m = 0, v = 0;
  int t = 0;
  double step(double theta, double g, double lr, double b1, double b2, double eps = 1e-8) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    return theta - lr * mh / (std::sqrt(vh) + eps);
  }
};

// A state with `n` photos whose mapped colors are given per slot.
OptimizationState color_state(const std::vector<Vec3>& colors, int w = 4, int h = 4) {
  OptimizationState st;
  st.masks = full_masks(w, h, colors.size());
  st.weights = WeightField(w, h, st.masks.photo_ids);
  for (std::size_t k = 0; k < colors.size(); ++k) {
    MappedPhoto mp;
    mp.photo_id = int(k);
    mp.color = Image(w, h, colors[k]);
    st.problem.mapped.push_back(mp);
    st.problem.photos.push_back(nullptr);
    st.problem.targets.emplace_back();
    st.photo_index.push_back(k);
    st.geometric.push_back(Mask(w, h, 1));
    st.initial_image.push_back(Mask(1, 1, 0));
    std::fill(st.weights.theta[k].data.begin(), st.weights.theta[k].data.end(), 0.5);
  }
  return st;
}

struct FrontoScene {
  ProxyModel model;
  std::vector<Photo> photos;
  Image truth;
};

// One pixel-aligned photo of a textured quad.
FrontoScene fronto_scene(int n) {
  FrontoScene s;
  s.model = quad_model(1, 1);
  Photo ph;
  ph.camera = Camera::look_at({0, 0, 4}, {0, 0, 0}, Vec3::UnitY(), n, n, 4.0 / (2.0 / n));
  std::mt19937_64 rng(17);
  ph.rgb = random_image(n, n, rng);
  s.truth = ph.rgb;
  s.photos.push_back(ph);
  return s;
}

OptimizerSettings small_settings(int res) {
  OptimizerSettings s;
  s.base_resolution = res;
  s.target_resolution = res;
  return s;
}

}  // namespace

TEST(Adam, ZeroGradientLeavesWeights) {
  WeightField wf(3, 2, {0});
  for (auto& v : wf.theta[0].data) v = 0.3;
  const MaskSet ms = full_masks(3, 2, 1);
  adam_step(wf, {ScalarGrid(3, 2, 0.0)}, ms, 0.005, 0.9, 0.99);
  for (double v : wf.theta[0].data) EXPECT_EQ(v, 0.3);
}

TEST(Adam, MatchesScalarOracle) {
  WeightField wf(2, 1, {0});
  wf.theta[0].data = {0.5, 0.8};
  const MaskSet ms = full_masks(2, 1, 1);
  ScalarAdam a, b;
  double ta = 0.5, tb = 0.8;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int i = 0; i < 30; ++i) {
    const double ga = i == 0 ? 0.7 : u(rng), gb = 1e-3 * u(rng);
    ScalarGrid g(2, 1);
    g.data = {ga, gb};
    adam_step(wf, {g}, ms, 0.005, 0.9, 0.99);
    ta = std::clamp(a.step(ta, ga, 0.005, 0.9, 0.99), 0.0, 1.0);
    tb = std::clamp(b.step(tb, gb, 0.005, 0.9, 0.99), 0.0, 1.0);
    if (i == 0) EXPECT_NEAR(wf.theta[0][0], 0.5 - 0.005 * 0.7 / (0.7 + 1e-8), 1e-12);
    EXPECT_NEAR(wf.theta[0][0], ta, 1e-12);
    EXPECT_NEAR(wf.theta[0][1], tb, 1e-12);
  }
}

TEST(Adam, ClampsAndZeroesOffMask) {
  WeightField wf(2, 1, {0});
  wf.theta[0].data = {0.0005, 0.7};
  MaskSet ms = full_masks(2, 1, 1);
  ms.chart[0][1] = 0;
  ScalarGrid g(2, 1);
  g.data = {1.0, 1.0};
  adam_step(wf, {g}, ms, 0.005, 0.9, 0.99);
  EXPECT_EQ(wf.theta[0][0], 0.0);
  EXPECT_EQ(wf.theta[0][1], 0.0);
}

TEST(Adam, RejectsNonFiniteGradient) {
  WeightField wf(1, 1, {0});
  ScalarGrid g(1, 1, std::numeric_limits<double>::quiet_NaN());
  EXPECT_THROW(adam_step(wf, {g}, full_masks(1, 1, 1), 0.005, 0.9, 0.99), OptimizationError);
}

TEST(Elimination, AgreeingPhotosKeepEverything) {
  OptimizationState st = color_state({Vec3(0.3, 0.4, 0.5), Vec3(0.3, 0.4, 0.5)});
  EXPECT_EQ(eliminate_outlier_pixels(st, 0.05), 0u);
  st = color_state({Vec3(0.3, 0.4, 0.5), Vec3(0.32, 0.41, 0.5), Vec3(0.3, 0.4, 0.52)});
  EXPECT_EQ(eliminate_outlier_pixels(st, 0.05), 0u);
}

TEST(Elimination, OutlierRemovedWhenFiveAgree) {
  std::vector<Vec3> colors(5, Vec3(0.3, 0.4, 0.5));
  colors.push_back(Vec3(0.7, 0.6, 0.5));
  OptimizationState st = color_state(colors);
  EXPECT_EQ(eliminate_outlier_pixels(st, 0.05), 16u);
  for (std::size_t t = 0; t < 16; ++t) {
    EXPECT_EQ(st.masks.chart[5][t], 0);
    EXPECT_EQ(st.weights.theta[5][t], 0.0);
    EXPECT_EQ(st.masks.active_count(t), 5);
  }
}

TEST(Elimination, ThreeSigmaCannotIsolateOneOfThree) {
  // With n photos and one outlier, its distance is at most sqrt(n-1) pooled
  // deviations; for n = 3 that is below 3.
  OptimizationState st = color_state({Vec3(0.3, 0.4, 0.5), Vec3(0.3, 0.4, 0.5), Vec3(0.7, 0.6, 0.5)});
  EXPECT_EQ(eliminate_outlier_pixels(st, 0.05), 0u);
}

TEST(Elimination, NeverEmptiesATexel) {
  OptimizationState st = color_state({Vec3(0.1, 0.1, 0.1)});
  EXPECT_EQ(eliminate_outlier_pixels(st, 0.0), 0u);
  EXPECT_EQ(st.masks.active_count(0), 1);
}

TEST(Elimination, ZeroWeightPhotoDropped) {
  OptimizationState st = color_state({Vec3(0.3, 0.4, 0.5), Vec3(0.3, 0.4, 0.5), Vec3(0.3, 0.4, 0.5)});
  std::fill(st.weights.theta[1].data.begin(), st.weights.theta[1].data.end(), 0.0);
  st.resolution = 4;
  st.iteration = 24;
  eliminate_photos(st, 0.95);
  ASSERT_EQ(st.masks.slots(), 2u);
  EXPECT_EQ(st.masks.photo_ids, (std::vector<int>{0, 2}));
  ASSERT_EQ(st.eliminated.size(), 1u);
  EXPECT_EQ(st.eliminated[0].photo_id, 1);
  EXPECT_DOUBLE_EQ(st.eliminated[0].zero_fraction, 1.0);
  EXPECT_FALSE(st.eliminated[0].reason.empty());
  EXPECT_EQ(st.weights.slots(), 2u);
  EXPECT_EQ(st.problem.mapped.size(), 2u);
}

TEST(Elimination, SoleContributorKept) {
  OptimizationState st = color_state({Vec3(0.3, 0.4, 0.5), Vec3(0.3, 0.4, 0.5)}, 10, 10);
  std::fill(st.weights.theta[1].data.begin(), st.weights.theta[1].data.end(), 0.0);
  st.masks.chart[0][0] = 0;
  st.masks.recompute_overlap();
  eliminate_photos(st, 0.95);
  EXPECT_EQ(st.masks.slots(), 2u);
}

TEST(Convergence, RelativeWindow) {
  std::deque<double> h;
  for (int i = 0; i < 10; ++i) h.push_back(100.0 - i);
  EXPECT_FALSE(detail::converged(h, 10, 1e-3));
  h.push_back(91.0);
  EXPECT_FALSE(detail::converged(h, 10, 1e-3));
  std::deque<double> flat(11, 5.0);
  flat.back() = 5.0 - 4e-3;
  EXPECT_TRUE(detail::converged(flat, 10, 1e-3));
}

TEST(OptimizePolygon, SingleFrontoPhotoStaysExact) {
  const FrontoScene s = fronto_scene(64);
  const VisibilityIndex index = build_visibility_index(s.model, s.photos);
  OptimizerSettings set = small_settings(64);
  std::vector<double> render;
  set.trace = [&](int, int, const LossBreakdown& lb) { render.push_back(lb.render); };
  const PolygonResult r = optimize_polygon(index, 0, s.photos, set);
  ASSERT_EQ(r.report.stages.size(), 1u);
  const StageReport& st = r.report.stages[0];
  // With one photo the blend is scale invariant, so the L1 and smoothness
  // terms keep moving theta without touching the texture.
  EXPECT_LT(st.final_loss, st.initial_loss);
  // Residual part of the first render loss: total minus the L1 sum of the
  // initial weights.
  const UVChart chart = build_chart(s.model.polygons[0], 64, {}, 64);
  const MaskSet ms = polygon_masks(index, 0, chart, s.photos);
  const std::vector<MappedPhoto> mapped{map_photo(chart, s.photos[0])};
  const WeightField init = init_weights(mapped, ms, chart.polygon.normal);
  double l1 = 0;
  for (double v : init.theta[0].data) l1 += v;
  EXPECT_LT(std::abs(render.front() - l1), 1e-6);
  for (std::size_t t = 0; t < r.texture.rgb.size(); ++t) {
    EXPECT_EQ(r.texture.hole[t], 0);
    EXPECT_LT((r.texture.rgb[t] - s.truth[t]).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(OptimizePolygon, NoVisiblePhotoGivesHoles) {
  const ProxyModel m = quad_model(1, 1);
  std::vector<Photo> photos(2);
  for (int k = 0; k < 2; ++k) {
    photos[std::size_t(k)].id = k;
    photos[std::size_t(k)].camera = camera_toward({0.5 * k, 0.3, -4}, 48, 48);
    photos[std::size_t(k)].rgb = Image(48, 48, Vec3::Constant(0.5));
  }
  const VisibilityIndex index = build_visibility_index(m, photos);
  const PolygonResult r = optimize_polygon(index, 0, photos, small_settings(32));
  EXPECT_DOUBLE_EQ(r.report.hole_fraction, 1.0);
  EXPECT_EQ(r.report.hole_texels, r.report.inside_texels);
  EXPECT_FALSE(r.report.warning.empty());
  for (int v : r.source.data) EXPECT_EQ(v, -1);
}

TEST(OptimizePolygon, InvertedPhotoIsDropped) {
  // Three views of a textured quad; the third photo has inverted colors.
  SynthSpec spec = *standard_spec("quad12");
  spec.gt_resolution = 64;
  spec.base_resolution = 64;
  spec.rig.count = 3;
  spec.rig.width = spec.rig.height = 96;
  spec.rig.fronto.reset();
  spec.perturb.corrupted = {2};
  const SynthScene sc = generate_synthetic_scene(spec);
  const VisibilityIndex index = build_visibility_index(sc.model, sc.photos);
  const PolygonResult r = optimize_polygon(index, 0, sc.photos, small_settings(64));
  ASSERT_EQ(r.report.initial_photos.size(), 3u);
  bool dropped = false;
  for (const auto& e : r.report.eliminated) dropped = dropped || e.photo_id == 2;
  EXPECT_TRUE(dropped);
  for (int v : r.source.data) EXPECT_NE(v, 2);
}

TEST(OptimizePolygon, MinimumLossNotAboveInitial) {
  const SynthScene sc = [] {
    SynthSpec spec = *standard_spec("quad12");
    spec.gt_resolution = 64;
    spec.base_resolution = 32;
    spec.rig.count = 4;
    spec.rig.width = spec.rig.height = 96;
    spec.rig.fronto.reset();
    return generate_synthetic_scene(spec);
  }();
  const VisibilityIndex index = build_visibility_index(sc.model, sc.photos);
  OptimizerSettings s;
  s.base_resolution = 32;
  s.target_resolution = 64;
  s.max_iterations = 120;
  const PolygonResult r = optimize_polygon(index, 0, sc.photos, s);
  ASSERT_EQ(r.report.stages.size(), 2u);
  EXPECT_EQ(r.report.stages[0].resolution, 32);
  EXPECT_EQ(r.report.stages[1].resolution, 64);
  EXPECT_EQ(r.chart.width, 64);
  for (const auto& st : r.report.stages) EXPECT_LE(st.min_loss, st.initial_loss);
  // Eliminated photos never appear in the final source map.
  for (const auto& e : r.report.eliminated)
    for (int v : r.source.data) EXPECT_NE(v, e.photo_id);
  // Determinism.
  const PolygonResult again = optimize_polygon(index, 0, sc.photos, s);
  EXPECT_EQ(r.texture.rgb.data, again.texture.rgb.data);
  EXPECT_EQ(r.source.data, again.source.data);
}
