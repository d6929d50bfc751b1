#pragma once

// Per-polygon coarse-to-fine optimization of the blending weights.

#include "difftex/losses.hpp"
#include "difftex/visibility.hpp"

#include <chrono>
#include <cmath>
#include <deque>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace difftex {

struct OptimizationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct OptimizerSettings {
  LossCoefficients coef;
  double lr = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double tau = 1e-3;
  double tau_w = 0.95;
  int base_resolution = 256;
  int target_resolution = 2048;
  int max_iterations = 500;
  int elimination_interval = 25;
  int convergence_window = 10;
  double convergence_tol = 1e-3;
  double outlier_floor = 0.05;
  /// Called after every loss evaluation with (resolution, iteration, losses).
  std::function<void(int, int, const LossBreakdown&)> trace;

  static OptimizerSettings from_config(const SceneConfig& cfg) {
    OptimizerSettings s;
    s.coef = {cfg.alpha, cfg.beta, cfg.omega, cfg.lambda_s};
    s.lr = cfg.lr;
    s.beta1 = cfg.beta1;
    s.beta2 = cfg.beta2;
    s.tau = cfg.tau;
    s.tau_w = cfg.tau_w;
    s.base_resolution = std::min(cfg.base_resolution, cfg.target_resolution);
    s.target_resolution = cfg.target_resolution;
    s.max_iterations = cfg.max_iterations;
    s.elimination_interval = cfg.elimination_interval;
    return s;
  }
};

/// Adam with bias correction on every active texel, then clamp to [0,1]
/// and zero off-mask.
inline void adam_step(WeightField& wf, const std::vector<ScalarGrid>& grad, const MaskSet& masks,
                      double lr, double beta1, double beta2, double eps = 1e-8) {
  for (const auto& g : grad)
    for (double v : g.data)
      if (!std::isfinite(v)) throw OptimizationError("non-finite gradient");
  ++wf.adam_steps;
  const double c1 = 1.0 - std::pow(beta1, wf.adam_steps);
  const double c2 = 1.0 - std::pow(beta2, wf.adam_steps);
  for (std::size_t k = 0; k < wf.slots(); ++k) {
    ScalarGrid& th = wf.theta[k];
    ScalarGrid& m = wf.adam_m[k];
    ScalarGrid& v = wf.adam_v[k];
    for (std::size_t t = 0; t < th.size(); ++t) {
      if (!masks.chart[k][t]) {
        th[t] = 0;
        continue;
      }
      const double g = grad[k][t];
      m[t] = beta1 * m[t] + (1 - beta1) * g;
      v[t] = beta2 * v[t] + (1 - beta2) * g * g;
      th[t] -= lr * (m[t] / c1) / (std::sqrt(v[t] / c2) + eps);
      th[t] = std::clamp(th[t], 0.0, 1.0);
    }
  }
}

struct EliminationEvent {
  int photo_id = -1;
  int resolution = 0;
  int iteration = 0;
  std::string reason;
  double zero_fraction = 0;
};

struct StageReport {
  int resolution = 0;
  int iterations = 0;
  bool converged = false;
  double initial_loss = 0;
  double min_loss = 0;
  double final_loss = 0;
  double render = 0;
  double perspective = 0;
  double parameter = 0;
  std::size_t pixels_eliminated = 0;
  double seconds = 0;
};

struct PolygonReport {
  int polygon = -1;
  std::vector<int> initial_photos;
  std::vector<int> final_photos;
  std::vector<StageReport> stages;
  std::vector<EliminationEvent> eliminated;
  std::size_t inside_texels = 0;
  std::size_t hole_texels = 0;  // inside texels without an active photo
  double hole_fraction = 0;
  std::string warning;
  std::string ordering = "update_activation,eliminate_data";
};

/// Live state of one polygon at one resolution. All per-slot vectors are
/// parallel to masks.photo_ids.
struct OptimizationState {
  PolygonProblem problem;
  std::vector<std::size_t> photo_index;  // slot -> position in the photo list
  MaskSet masks;
  std::vector<Mask> geometric;      // chart visibility at this stage
  std::vector<Mask> initial_image;  // image visibility
  WeightField weights;
  TextureMap texture;
  std::deque<double> history;
  int resolution = 0;
  int iteration = 0;
  std::vector<EliminationEvent> eliminated;

  void remove_slot(std::size_t k) {
    auto drop = [k](auto& v) { v.erase(v.begin() + std::ptrdiff_t(k)); };
    drop(problem.photos);
    drop(problem.mapped);
    drop(problem.targets);
    drop(photo_index);
    drop(masks.photo_ids);
    drop(masks.image);
    drop(masks.chart);
    drop(masks.overlap);
    drop(geometric);
    drop(initial_image);
    drop(weights.photo_ids);
    drop(weights.theta);
    drop(weights.adam_m);
    drop(weights.adam_v);
    masks.recompute_overlap();
  }
};

/// Image masks follow the chart masks: a pixel stays on when the texel
/// nearest to its back-projection is on.
inline void pull_image_masks(MaskSet& masks, const PolygonProblem& prob) {
  for (std::size_t k = 0; k < masks.slots(); ++k) {
    Mask& a = masks.image[k];
    std::fill(a.data.begin(), a.data.end(), std::uint8_t{0});
    const RenderTarget& rt = prob.targets[k];
    const Mask& chart = masks.chart[k];
    const double umax = chart.width - 1;
    const double vmax = chart.height - 1;
    for (std::size_t i = 0; i < rt.pixel.size(); ++i) {
      const int c = int(std::clamp(rt.texel[i].x(), 0.0, umax) + 0.5);
      const int r = int(std::clamp(rt.texel[i].y(), 0.0, vmax) + 0.5);
      a[rt.pixel[i]] = chart(c, r);
    }
  }
}

/// Pixel-level outlier removal. Per texel: mean and pooled deviation s of
/// the active colors; contributions farther than max(3s, floor) from the
/// mean are switched off unless that would leave the texel empty. Returns
/// the number of removed contributions.
inline std::size_t eliminate_outlier_pixels(OptimizationState& st, double floor) {
  std::size_t removed = 0;
  MaskSet& masks = st.masks;
  const std::size_t n = masks.slots() ? masks.chart.front().size() : 0;
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t < n; ++t) {
    const auto [mu, s] = color_stats(st.problem.mapped, masks, t);
    const double limit = std::max(3.0 * s, floor);
    out.clear();
    int active = 0;
    for (std::size_t k = 0; k < masks.slots(); ++k) {
      if (!masks.chart[k][t]) continue;
      ++active;
      if ((st.problem.mapped[k].color[t] - mu).norm() > limit) out.push_back(k);
    }
    if (out.empty() || out.size() >= std::size_t(active)) continue;
    for (std::size_t k : out) {
      masks.chart[k][t] = 0;
      st.weights.theta[k][t] = 0;
    }
    removed += out.size();
  }
  masks.recompute_overlap();
  return removed;
}

/// Photo-level removal: a slot is dropped when its normalized weight is
/// zero on more than tau_w of its stage visibility, unless it is the only
/// active photo at some texel.
inline void eliminate_photos(OptimizationState& st, double tau_w) {
  for (std::size_t k = st.masks.slots(); k-- > 0;) {
    std::size_t visible = 0;
    std::size_t zero = 0;
    bool sole = false;
    for (std::size_t t = 0; t < st.geometric[k].size(); ++t) {
      if (st.masks.chart[k][t] && st.masks.active_count(t) == 1) sole = true;
      if (!st.geometric[k][t]) continue;
      ++visible;
      if (normalized_weight(st.weights, st.masks, k, t) == 0.0) ++zero;
    }
    const double frac = visible ? double(zero) / double(visible) : 1.0;
    if (frac > tau_w && !sole) {
      st.eliminated.push_back({st.masks.photo_ids[k], st.resolution, st.iteration,
                               "zero weight on " + std::to_string(zero) + " of " + std::to_string(visible) +
                                   " visible texels",
                               frac});
      st.remove_slot(k);
    }
  }
}

/// Pixel-level then photo-level elimination.
inline std::size_t eliminate_data(OptimizationState& st, double tau_w, double floor = 0.05) {
  const std::size_t removed = eliminate_outlier_pixels(st, floor);
  eliminate_photos(st, tau_w);
  return removed;
}

namespace detail {

inline void build_stage(OptimizationState& st, const VisibilityIndex& index, int poly_index,
                        std::span<const Photo> photos, int resolution, int layout_base) {
  const ProxyPolygon& poly = index.model->polygons[std::size_t(poly_index)];
  st.resolution = resolution;
  st.problem.chart = build_chart(poly, resolution, {}, layout_base);
  st.geometric.clear();
  st.problem.mapped.clear();
  st.problem.targets.clear();
  for (std::size_t k = 0; k < st.photo_index.size(); ++k) {
    const Photo& ph = photos[st.photo_index[k]];
    st.geometric.push_back(chart_visibility(index, st.photo_index[k], poly_index, st.problem.chart, ph.camera));
    st.problem.mapped.push_back(map_photo(st.problem.chart, ph));
    st.problem.targets.push_back(build_render_target(st.problem.chart, ph.camera, st.initial_image[k]));
  }
}

inline bool converged(const std::deque<double>& h, int window, double tol) {
  if (int(h.size()) <= window) return false;
  const double then = h[h.size() - 1 - std::size_t(window)];
  const double now = h.back();
  const double scale = std::max(std::abs(then), 1e-12);
  return std::abs(now - then) / scale < tol;
}

}  // namespace detail

struct PolygonResult {
  UVChart chart;
  TextureMap texture;
  WeightField weights;
  MaskSet masks;
  std::vector<Mask> geometric;  // final-stage visibility per surviving slot
  std::vector<MappedPhoto> mapped;
  Grid<int> source;
  PolygonReport report;
};

/// Runs one stage to convergence or the iteration cap.
inline StageReport run_stage(OptimizationState& st, const OptimizerSettings& s) {
  StageReport rep;
  rep.resolution = st.resolution;
  const auto t0 = std::chrono::steady_clock::now();
  st.history.clear();
  bool first = true;
  LossContext ctx;
  LossBreakdown lb;
  std::vector<ScalarGrid> before;
  for (int it = 0; it < s.max_iterations; ++it) {
    if (st.masks.slots() == 0) break;
    st.iteration = it;
    compose_texture(st.weights, st.problem.mapped, st.masks, st.texture);
    prepare_loss_context(st.problem, st.masks, st.texture, ctx);
    total_loss_and_grad(st.problem, ctx, st.weights, st.masks, st.texture, s.coef, lb);
    if (!std::isfinite(lb.total)) throw OptimizationError("non-finite loss");
    if (s.trace) s.trace(st.resolution, it, lb);
    if (first) {
      rep.initial_loss = rep.min_loss = lb.total;
      first = false;
    }
    rep.min_loss = std::min(rep.min_loss, lb.total);
    rep.final_loss = lb.total;
    rep.render = lb.render;
    rep.perspective = lb.perspective;
    rep.parameter = lb.parameter;
    st.history.push_back(lb.total);
    if (int(st.history.size()) > s.convergence_window + 1) st.history.pop_front();
    rep.iterations = it + 1;
    if (detail::converged(st.history, s.convergence_window, s.convergence_tol)) {
      rep.converged = true;
      break;
    }

    before = st.weights.theta;
    adam_step(st.weights, lb.gradient, st.masks, s.lr, s.beta1, s.beta2);
    update_activation(st.masks, st.weights, s.tau, &before);
    if (s.elimination_interval > 0 && (it + 1) % s.elimination_interval == 0) {
      rep.pixels_eliminated += eliminate_data(st, s.tau_w, s.outlier_floor);
    }
    pull_image_masks(st.masks, st.problem);
  }
  if (st.masks.slots() > 0) st.texture = compose_texture(st.weights, st.problem.mapped, st.masks);
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

/// Coarse-to-fine optimization of polygon `poly_index`. `usable` lists the
/// photos (positions in `photos`) allowed to contribute; empty means all.
inline PolygonResult optimize_polygon(const VisibilityIndex& index, int poly_index,
                                      std::span<const Photo> photos, const OptimizerSettings& s,
                                      std::span<const std::size_t> usable = {}) {
  const ProxyPolygon& poly = index.model->polygons[std::size_t(poly_index)];
  const int base = std::min(s.base_resolution, s.target_resolution);
  PolygonResult res;
  res.report.polygon = poly_index;

  OptimizationState st;
  st.resolution = base;
  st.problem.chart = build_chart(poly, base, {}, base);
  {
    std::vector<std::size_t> candidates;
    if (usable.empty()) {
      for (std::size_t k = 0; k < photos.size(); ++k) candidates.push_back(k);
    } else {
      candidates.assign(usable.begin(), usable.end());
    }
    for (std::size_t k : candidates) {
      Mask vis = chart_visibility(index, k, poly_index, st.problem.chart, photos[k].camera);
      if (std::none_of(vis.data.begin(), vis.data.end(), [](auto v) { return v != 0; })) continue;
      if (!invert_homography(plane_homography(poly, photos[k].camera))) continue;
      st.photo_index.push_back(k);
      st.problem.photos.push_back(&photos[k]);
      st.masks.photo_ids.push_back(photos[k].id);
      st.masks.chart.push_back(vis);
      st.geometric.push_back(std::move(vis));
      st.initial_image.push_back(image_visibility(index, k, poly_index, photos[k].camera));
    }
  }
  st.masks.image = st.initial_image;
  st.masks.recompute_overlap();
  res.report.initial_photos = st.masks.photo_ids;

  if (st.masks.slots() == 0) {
    res.chart = build_chart(poly, s.target_resolution, {}, base);
    res.texture.rgb = Image(res.chart.width, res.chart.height, Vec3::Zero());
    res.texture.hole = Mask(res.chart.width, res.chart.height, 1);
    res.source = Grid<int>(res.chart.width, res.chart.height, -1);
    res.report.warning = "no visible photos; texture is all holes";
  } else {
    std::vector<Camera> cams;
    for (const Photo* p : st.problem.photos) cams.push_back(p->camera);
    st.problem.guidance = guidance_direction(poly, cams);
    for (std::size_t k = 0; k < st.photo_index.size(); ++k) {
      st.problem.mapped.push_back(map_photo(st.problem.chart, *st.problem.photos[k]));
      st.problem.targets.push_back(build_render_target(st.problem.chart, st.problem.photos[k]->camera,
                                                       st.initial_image[k]));
    }
    st.weights = init_weights(st.problem.mapped, st.masks, poly.normal);
    for (int resolution = base;; resolution *= 2) {
      res.report.stages.push_back(run_stage(st, s));
      if (st.masks.slots() == 0 || resolution >= s.target_resolution) break;
      detail::build_stage(st, index, poly_index, photos, resolution * 2, base);
      auto [wf, fine] = upscale_field(st.weights, st.masks, st.geometric);
      st.weights = std::move(wf);
      st.masks = std::move(fine);
      pull_image_masks(st.masks, st.problem);
    }
    res.chart = st.problem.chart;
    if (st.masks.slots() == 0) {
      res.texture.rgb = Image(res.chart.width, res.chart.height, Vec3::Zero());
      res.texture.hole = Mask(res.chart.width, res.chart.height, 1);
      res.source = Grid<int>(res.chart.width, res.chart.height, -1);
      res.report.warning = "every photo was eliminated; texture is all holes";
    } else {
      res.texture = compose_texture(st.weights, st.problem.mapped, st.masks);
      res.source = source_map(st.weights, st.masks);
    }
  }
  res.report.eliminated = st.eliminated;
  res.report.final_photos = st.masks.photo_ids;
  for (std::size_t t = 0; t < res.chart.inside.size(); ++t) {
    if (!res.chart.inside[t]) continue;
    ++res.report.inside_texels;
    if (res.texture.hole[t]) ++res.report.hole_texels;
  }
  res.report.hole_fraction =
      res.report.inside_texels ? double(res.report.hole_texels) / double(res.report.inside_texels) : 0.0;
  res.weights = std::move(st.weights);
  res.masks = std::move(st.masks);
  res.geometric = std::move(st.geometric);
  res.mapped = std::move(st.problem.mapped);
  return res;
}

}  // namespace difftex
