#pragma once

// Render, perspective and parameter losses of one polygon, with their
// analytic gradients with respect to the raw blending weights.
//
// Quality, disparity, gradient magnitude and masks are evaluated once per
// iteration (LossContext) and held constant for differentiation.

#include "difftex/camera_geometry.hpp"
#include "difftex/field_types.hpp"
#include "difftex/mapped_photo.hpp"
#include "difftex/quality.hpp"
#include "difftex/texture_field.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace difftex {

/// Image pixels initially covered by the polygon, with their back-projected
/// chart coordinates.
struct RenderTarget {
  int photo_width = 0;
  int photo_height = 0;
  std::vector<std::uint32_t> pixel;  // row-major pixel index
  std::vector<Vec2> texel;           // continuous chart coordinates
  bool singular = false;             // camera lies in the polygon plane
};

inline RenderTarget build_render_target(const UVChart& chart, const Camera& cam, const Mask& initial_image) {
  RenderTarget rt;
  rt.photo_width = cam.width;
  rt.photo_height = cam.height;
  const auto hinv = invert_homography(plane_homography(chart.polygon, cam));
  if (!hinv) {
    rt.singular = true;
    return rt;
  }
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) {
      if (!initial_image(x, y)) continue;
      const auto q = pixel_to_plane(*hinv, Vec2(x, y));
      if (!q) continue;
      rt.pixel.push_back(std::uint32_t(std::size_t(y) * cam.width + x));
      rt.texel.push_back(chart.plane_to_texel(*q));
    }
  return rt;
}

/// Everything the optimizer keeps fixed for one polygon at one resolution.
struct PolygonProblem {
  UVChart chart;
  std::vector<const Photo*> photos;  // per slot
  std::vector<MappedPhoto> mapped;   // per slot
  std::vector<RenderTarget> targets; // per slot
  Vec3 guidance = Vec3::UnitZ();

  std::size_t slots() const { return photos.size(); }
};

/// Bilinear taps over the chart that skip invalid texels and renormalize.
/// Returns false when no tap is valid.
inline bool masked_taps(const UVChart& chart, const Mask& valid, const Vec2& texel, BilinearTaps& taps,
                        std::array<std::size_t, 4>& index) {
  taps = bilinear_taps(chart.width, chart.height, texel.x(), texel.y());
  double sum = 0;
  for (int i = 0; i < 4; ++i) {
    index[i] = std::size_t(taps.y[i]) * chart.width + taps.x[i];
    if (!valid[index[i]]) taps.w[i] = 0;
    sum += taps.w[i];
  }
  if (!(sum > 0)) return false;
  for (auto& w : taps.w) w /= sum;
  return true;
}

/// Valid texels for rendering: covered by at least one active photo.
inline Mask render_valid(const TextureMap& tex) {
  Mask valid(tex.hole.width, tex.hole.height, 0);
  for (std::size_t t = 0; t < valid.size(); ++t) valid[t] = tex.hole[t] ? 0 : 1;
  return valid;
}

struct RenderedView {
  Image rgb;     // defined where `defined` is set
  Mask defined;  // a_k restricted to pixels with a valid texel footprint
};

/// Renders the textured polygon into slot k's camera on its activation mask.
inline RenderedView render_polygon_view(const PolygonProblem& prob, const TextureMap& tex,
                                        const MaskSet& masks, std::size_t k) {
  const RenderTarget& rt = prob.targets[k];
  RenderedView out{Image(rt.photo_width, rt.photo_height, Vec3::Zero()),
                   Mask(rt.photo_width, rt.photo_height, 0)};
  const Mask valid = render_valid(tex);
  BilinearTaps taps;
  std::array<std::size_t, 4> idx{};
  for (std::size_t i = 0; i < rt.pixel.size(); ++i) {
    const std::uint32_t p = rt.pixel[i];
    if (!masks.image[k][p]) continue;
    if (!masked_taps(prob.chart, valid, rt.texel[i], taps, idx)) continue;
    Vec3 acc = Vec3::Zero();
    for (int j = 0; j < 4; ++j) acc += taps.w[j] * tex.rgb[idx[j]];
    out.rgb[p] = acc;
    out.defined[p] = 1;
  }
  return out;
}

struct LossCoefficients {
  double alpha = 1.0;
  double beta = 2.0;
  double omega = 10.0;
  double lambda_s = 0.5;
};

/// Stop-gradient quantities for one evaluation.
struct LossContext {
  QualityMatrix quality;
  std::vector<ScalarGrid> persp_residual;  // |a_hat (d_k - v)|^2
  ScalarGrid disparity_up;                 // D(t, up(t)), zero on row 0
  ScalarGrid disparity_left;               // D(t, left(t)), zero on column 0
  ScalarGrid grad_mean;                    // G(t)
  Mask valid;
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline void prepare_loss_context(const PolygonProblem& prob, const MaskSet& masks, const TextureMap& tex,
                                 LossContext& ctx) {
  const int w = prob.chart.width;
  const int h = prob.chart.height;
  quality_matrix(prob.mapped, masks, prob.chart.polygon.normal, ctx.quality);
  ctx.valid.reset(w, h, 0);
  for (std::size_t t = 0; t < ctx.valid.size(); ++t) ctx.valid[t] = tex.hole[t] ? 0 : 1;
  reset_grids(ctx.persp_residual, masks.slots(), w, h, 0.0);
  for (std::size_t k = 0; k < masks.slots(); ++k)
    for (std::size_t t = 0; t < ctx.persp_residual[k].size(); ++t)
      if (masks.chart[k][t]) ctx.persp_residual[k][t] = (prob.mapped[k].direction[t] - prob.guidance).squaredNorm();

  ctx.grad_mean.reset(w, h, 0.0);
  for (std::size_t t = 0; t < ctx.grad_mean.size(); ++t) {
    double acc = 0;
    int n = 0;
    for (std::size_t k = 0; k < masks.slots(); ++k) {
      if (!masks.chart[k][t]) continue;
      acc += prob.mapped[k].gradient[t];
      ++n;
    }
    ctx.grad_mean[t] = n ? acc / n : 0.0;
  }
  ctx.disparity_up.reset(w, h, 0.0);
  ctx.disparity_left.reset(w, h, 0.0);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const double g = 1.0 + ctx.grad_mean(c, r);
      if (r > 0) ctx.disparity_up(c, r) = sigmoid((tex.rgb(c, r) - tex.rgb(c, r - 1)).norm()) * g;
      if (c > 0) ctx.disparity_left(c, r) = sigmoid((tex.rgb(c, r) - tex.rgb(c - 1, r)).norm()) * g;
    }
}

inline LossContext prepare_loss_context(const PolygonProblem& prob, const MaskSet& masks,
                                        const TextureMap& tex) {
  LossContext ctx;
  prepare_loss_context(prob, masks, tex, ctx);
  return ctx;
}

struct LossTerm {
  double value = 0;
  std::vector<ScalarGrid> gradient;  // per slot, d value / d theta
};

inline std::vector<ScalarGrid> zero_gradients(const WeightField& wf) {
  return std::vector<ScalarGrid>(wf.slots(), ScalarGrid(wf.width, wf.height, 0.0));
}

namespace detail {

// Each accumulate_* adds scale * d(term)/d(theta) into `grad` and returns the
// unscaled term value.

inline double accumulate_render(const PolygonProblem& prob, const LossContext& ctx, const WeightField& wf,
                                const MaskSet& masks, const TextureMap& tex, double scale,
                                std::vector<ScalarGrid>& grad) {
  const int w = prob.chart.width;
  const int h = prob.chart.height;
  const double umax = double(w - 1);
  const double vmax = double(h - 1);
  const std::uint8_t* valid = ctx.valid.data.data();
  const double* rgb = tex.rgb.data.front().data();
  std::vector<double> grad_tex(3 * tex.rgb.size(), 0.0);
  double value = 0;
  for (std::size_t k = 0; k < masks.slots(); ++k) {
    const RenderTarget& rt = prob.targets[k];
    const double* photo = prob.photos[k]->rgb.data.front().data();
    const double* q = ctx.quality.q[k].data.data();
    const std::uint8_t* active = masks.image[k].data.data();
    double data = 0;
    for (std::size_t i = 0; i < rt.pixel.size(); ++i) {
      const std::uint32_t p = rt.pixel[i];
      if (!active[p]) continue;
      const double u = std::clamp(rt.texel[i].x(), 0.0, umax);
      const double v = std::clamp(rt.texel[i].y(), 0.0, vmax);
      const int x0 = std::min(int(u), w - 1);
      const int y0 = std::min(int(v), h - 1);
      const double fx = u - x0;
      const double fy = v - y0;
      const std::size_t i0 = std::size_t(y0) * w + x0;
      const std::size_t dx = x0 + 1 < w ? 1 : 0;
      const std::size_t dy = y0 + 1 < h ? std::size_t(w) : 0;
      std::size_t idx[4] = {i0, i0 + dx, i0 + dy, i0 + dx + dy};
      double tw[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
      if (!(valid[idx[0]] & valid[idx[1]] & valid[idx[2]] & valid[idx[3]])) {
        double sum = 0;
        for (int j = 0; j < 4; ++j) {
          if (!valid[idx[j]]) tw[j] = 0;
          sum += tw[j];
        }
        if (!(sum > 0)) continue;
        for (double& x : tw) x /= sum;
      }
      double r0 = 0, r1 = 0, r2 = 0, qp = 0;
      for (int j = 0; j < 4; ++j) {
        const double* c = rgb + 3 * idx[j];
        r0 += tw[j] * c[0];
        r1 += tw[j] * c[1];
        r2 += tw[j] * c[2];
        qp += tw[j] * q[idx[j]];
      }
      const double* ph = photo + 3 * std::size_t(p);
      const double d0 = r0 - ph[0];
      const double d1 = r1 - ph[1];
      const double d2 = r2 - ph[2];
      const double q2 = qp * qp;
      data += q2 * (d0 * d0 + d1 * d1 + d2 * d2);
      const double g = 2.0 * q2;
      for (int j = 0; j < 4; ++j) {
        if (tw[j] == 0) continue;
        double* gt = grad_tex.data() + 3 * idx[j];
        const double s = tw[j] * g;
        gt[0] += s * d0;
        gt[1] += s * d1;
        gt[2] += s * d2;
      }
    }
    value += data;
    for (double th : wf.theta[k].data) value += std::abs(th);
  }

  // Chain through the normalized blend, then add the L1 subgradient.
  const std::size_t n = tex.rgb.size();
  for (std::size_t t = 0; t < n; ++t) {
    if (tex.hole[t]) continue;
    double sum = 0;
    for (std::size_t k = 0; k < masks.slots(); ++k)
      if (masks.chart[k][t]) sum += wf.theta[k][t];
    if (sum < kWeightSumFloor) continue;
    const Vec3 gu(grad_tex[3 * t], grad_tex[3 * t + 1], grad_tex[3 * t + 2]);
    const double f = scale / sum;
    for (std::size_t k = 0; k < masks.slots(); ++k) {
      if (!masks.chart[k][t]) continue;
      grad[k][t] += f * gu.dot(prob.mapped[k].color[t] - tex.rgb[t]);
    }
  }
  for (std::size_t k = 0; k < masks.slots(); ++k)
    for (std::size_t t = 0; t < n; ++t) {
      const double th = wf.theta[k][t];
      grad[k][t] += th > 0 ? scale : (th < 0 ? -scale : 0.0);
    }
  return value;
}

inline double accumulate_perspective(const LossContext& ctx, const WeightField& wf, const MaskSet& masks,
                                     double scale, std::vector<ScalarGrid>& grad) {
  double value = 0;
  for (std::size_t k = 0; k < masks.slots(); ++k)
    for (std::size_t t = 0; t < wf.theta[k].size(); ++t) {
      const double r = ctx.persp_residual[k][t];
      value += wf.theta[k][t] * r;
      grad[k][t] += scale * r;
    }
  return value;
}

inline double accumulate_parameter(const LossContext& ctx, const WeightField& wf, const MaskSet& masks,
                                   double lambda_s, double scale, std::vector<ScalarGrid>& grad) {
  const int w = wf.width;
  const int h = wf.height;
  double value = 0;
  for (std::size_t k = 0; k < masks.slots(); ++k) {
    const ScalarGrid& th = wf.theta[k];
    const Mask& a = masks.chart[k];
    const Mask& m = masks.overlap[k];
    ScalarGrid& g = grad[k];
    auto pair = [&](std::size_t t, std::size_t q, double disparity) {
      const double cost = m[t] * disparity + lambda_s;
      const double d = a[t] * th[t] - a[q] * th[q];
      value += cost * std::abs(d);
      const double s = d > 0 ? scale : (d < 0 ? -scale : 0.0);
      g[t] += cost * s * a[t];
      g[q] -= cost * s * a[q];
    };
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        const std::size_t t = std::size_t(r) * w + c;
        if (r > 0) pair(t, t - w, ctx.disparity_up[t]);
        if (c > 0) pair(t, t - 1, ctx.disparity_left[t]);
      }
  }
  return value;
}

}  // namespace detail

/// sum_k ( |a_k Q (R_k - I_k)|^2 + sum_t |theta_k(t)| ). `tex` must be the
/// composition of `wf` under `masks`.
inline LossTerm loss_render(const PolygonProblem& prob, const LossContext& ctx, const WeightField& wf,
                            const MaskSet& masks, const TextureMap& tex) {
  LossTerm out;
  out.gradient = zero_gradients(wf);
  out.value = detail::accumulate_render(prob, ctx, wf, masks, tex, 1.0, out.gradient);
  return out;
}

/// sum_k sum_t theta_k(t) |a_hat_k(t) (d_k(t) - v)|^2; linear in theta.
inline LossTerm loss_perspective(const LossContext& ctx, const WeightField& wf, const MaskSet& masks) {
  LossTerm out;
  out.gradient = zero_gradients(wf);
  out.value = detail::accumulate_perspective(ctx, wf, masks, 1.0, out.gradient);
  return out;
}

/// sum_k sum_t sum_{q in up,left} C_k(t,q) |a_hat theta(t) - a_hat theta(q)|
/// with C_k = m_k(t) D(t,q) + lambda_s.
inline LossTerm loss_parameter(const LossContext& ctx, const WeightField& wf, const MaskSet& masks,
                               double lambda_s) {
  LossTerm out;
  out.gradient = zero_gradients(wf);
  out.value = detail::accumulate_parameter(ctx, wf, masks, lambda_s, 1.0, out.gradient);
  return out;
}

struct LossBreakdown {
  double render = 0;
  double perspective = 0;
  double parameter = 0;
  double total = 0;
  std::vector<ScalarGrid> gradient;
};

/// alpha L_render + beta L_persp + omega L_para, gradient zeroed off-mask.
inline void total_loss_and_grad(const PolygonProblem& prob, const LossContext& ctx, const WeightField& wf,
                                const MaskSet& masks, const TextureMap& tex, const LossCoefficients& coef,
                                LossBreakdown& out) {
  reset_grids(out.gradient, wf.slots(), wf.width, wf.height, 0.0);
  out.render = detail::accumulate_render(prob, ctx, wf, masks, tex, coef.alpha, out.gradient);
  out.perspective = detail::accumulate_perspective(ctx, wf, masks, coef.beta, out.gradient);
  out.parameter = detail::accumulate_parameter(ctx, wf, masks, coef.lambda_s, coef.omega, out.gradient);
  out.total = coef.alpha * out.render + coef.beta * out.perspective + coef.omega * out.parameter;
  for (std::size_t k = 0; k < wf.slots(); ++k)
    for (std::size_t t = 0; t < out.gradient[k].size(); ++t)
      if (!masks.chart[k][t]) out.gradient[k][t] = 0;
}

inline LossBreakdown total_loss_and_grad(const PolygonProblem& prob, const LossContext& ctx,
                                         const WeightField& wf, const MaskSet& masks, const TextureMap& tex,
                                         const LossCoefficients& coef) {
  LossBreakdown out;
  total_loss_and_grad(prob, ctx, wf, masks, tex, coef, out);
  return out;
}

}  // namespace difftex
