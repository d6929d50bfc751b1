#pragma once

// Blending-weight fields: initialization, texture composition and
// resolution doubling.

#include "difftex/field_types.hpp"
#include "difftex/mapped_photo.hpp"
#include "difftex/quality.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace difftex {

inline constexpr double kWeightSumFloor = 1e-12;

/// theta = Q_a * Q_c on the chart mask, zero elsewhere.
inline WeightField init_weights(std::span<const MappedPhoto> mapped, const MaskSet& masks,
                                const Vec3& normal) {
  if (masks.slots() == 0) return {};
  const int w = masks.chart.front().width;
  const int h = masks.chart.front().height;
  WeightField wf(w, h, masks.photo_ids);
  const QualityMatrix qm = quality_matrix(mapped, masks, normal);
  for (std::size_t k = 0; k < masks.slots(); ++k) wf.theta[k] = qm.q[k];
  return wf;
}

/// Normalized blend weight of slot k at texel t (uniform over active
/// slots when the raw weights sum to almost nothing). Zero when inactive.
inline double normalized_weight(const WeightField& wf, const MaskSet& masks, std::size_t k,
                                std::size_t t) {
  if (!masks.chart[k][t]) return 0.0;
  double sum = 0;
  int active = 0;
  for (std::size_t j = 0; j < masks.slots(); ++j) {
    if (!masks.chart[j][t]) continue;
    sum += wf.theta[j][t];
    ++active;
  }
  if (sum < kWeightSumFloor) return 1.0 / active;
  return wf.theta[k][t] / sum;
}

/// Texture = sum_k w_k I_k(p_m) with normalized weights over active
/// slots. Texels without an active slot are flagged as holes.
inline void compose_texture(const WeightField& wf, std::span<const MappedPhoto> mapped, const MaskSet& masks,
                            TextureMap& tex) {
  tex.rgb.reset(wf.width, wf.height, Vec3::Zero());
  tex.hole.reset(wf.width, wf.height, 1);
  const std::size_t n = tex.rgb.size();
  for (std::size_t t = 0; t < n; ++t) {
    double sum = 0;
    int active = 0;
    for (std::size_t k = 0; k < masks.slots(); ++k) {
      if (!masks.chart[k][t]) continue;
      sum += wf.theta[k][t];
      ++active;
    }
    if (active == 0) continue;
    tex.hole[t] = 0;
    Vec3 acc = Vec3::Zero();
    if (sum < kWeightSumFloor) {
      for (std::size_t k = 0; k < masks.slots(); ++k)
        if (masks.chart[k][t]) acc += mapped[k].color[t];
      acc /= active;
    } else {
      for (std::size_t k = 0; k < masks.slots(); ++k)
        if (masks.chart[k][t]) acc += (wf.theta[k][t] / sum) * mapped[k].color[t];
    }
    tex.rgb[t] = acc;
  }
}

inline TextureMap compose_texture(const WeightField& wf, std::span<const MappedPhoto> mapped,
                                  const MaskSet& masks) {
  TextureMap tex;
  compose_texture(wf, mapped, masks, tex);
  return tex;
}

/// Photo id with the largest normalized weight per texel (lowest slot on
/// ties); -1 on holes.
inline Grid<int> source_map(const WeightField& wf, const MaskSet& masks) {
  Grid<int> src(wf.width, wf.height, -1);
  for (std::size_t t = 0; t < src.size(); ++t) {
    int best = -1;
    for (std::size_t k = 0; k < masks.slots(); ++k) {
      if (!masks.chart[k][t]) continue;
      if (best < 0 || wf.theta[k][t] > wf.theta[std::size_t(best)][t]) best = int(k);
    }
    src[t] = best < 0 ? -1 : masks.photo_ids[std::size_t(best)];
  }
  return src;
}

/// Doubles a grid with bilinear interpolation; fine texel centers fall at
/// coarse coordinates c/2 - 1/4, with edge clamping.
inline ScalarGrid upscale_bilinear(const ScalarGrid& g) {
  ScalarGrid out(2 * g.width, 2 * g.height);
  for (int r = 0; r < out.height; ++r)
    for (int c = 0; c < out.width; ++c) out(c, r) = sample_bilinear(g, 0.5 * c - 0.25, 0.5 * r - 0.25);
  return out;
}

/// Chart masks at double resolution: a fine texel keeps slot k when it is
/// geometrically visible in k and its parent texel had k active. Texels
/// whose parent had nothing active borrow from the parent's 3x3
/// neighbourhood, then from plain visibility.
inline MaskSet upscale_masks(const MaskSet& coarse, std::span<const Mask> geometric) {
  MaskSet fine;
  fine.photo_ids = coarse.photo_ids;
  if (coarse.slots() == 0) return fine;
  const int cw = coarse.chart.front().width;
  const int ch = coarse.chart.front().height;
  const int w = 2 * cw;
  const int h = 2 * ch;
  fine.chart.assign(coarse.slots(), Mask(w, h, 0));
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const int pc = c / 2;
      const int pr = r / 2;
      bool any = false;
      for (std::size_t k = 0; k < coarse.slots(); ++k) {
        const bool on = geometric[k](c, r) && coarse.chart[k](pc, pr);
        fine.chart[k](c, r) = on;
        any = any || on;
      }
      if (any) continue;
      for (std::size_t k = 0; k < coarse.slots(); ++k) {
        if (!geometric[k](c, r)) continue;
        bool near = false;
        for (int dr = -1; dr <= 1 && !near; ++dr)
          for (int dc = -1; dc <= 1 && !near; ++dc)
            near = coarse.chart[k].in_bounds(pc + dc, pr + dr) && coarse.chart[k](pc + dc, pr + dr);
        fine.chart[k](c, r) = near;
        any = any || near;
      }
      if (any) continue;
      for (std::size_t k = 0; k < coarse.slots(); ++k) fine.chart[k](c, r) = geometric[k](c, r);
    }
  fine.recompute_overlap();
  return fine;
}

/// Doubles the weight field and its masks. Weights are bilinearly
/// upscaled, clamped to [0,1] and zeroed off-mask; Adam moments restart.
/// Image masks are not touched (they depend on the photo, not the chart).
inline std::pair<WeightField, MaskSet> upscale_field(const WeightField& wf, const MaskSet& masks,
                                                     std::span<const Mask> geometric) {
  WeightField out;
  out.width = 2 * wf.width;
  out.height = 2 * wf.height;
  out.photo_ids = wf.photo_ids;
  MaskSet fine = upscale_masks(masks, geometric);
  fine.image = masks.image;
  for (std::size_t k = 0; k < wf.slots(); ++k) {
    ScalarGrid up = upscale_bilinear(wf.theta[k]);
    for (std::size_t t = 0; t < up.size(); ++t) up[t] = fine.chart[k][t] ? std::clamp(up[t], 0.0, 1.0) : 0.0;
    out.theta.push_back(std::move(up));
  }
  out.reset_moments();
  return {std::move(out), std::move(fine)};
}

/// Fills holes (and any texel flagged in `fill`) by repeated averaging of
/// already-known 4-neighbours. Returns false when nothing was known.
inline bool diffuse_fill(Image& img, const Mask& fill) {
  Mask known(img.width, img.height, 0);
  for (std::size_t t = 0; t < img.size(); ++t) known[t] = fill[t] ? 0 : 1;
  bool any_known = std::any_of(known.data.begin(), known.data.end(), [](auto v) { return v != 0; });
  if (!any_known) {
    for (auto& p : img.data) p = Vec3::Constant(0.5);
    return false;
  }
  for (;;) {
    std::vector<std::pair<std::size_t, Vec3>> updates;
    for (int r = 0; r < img.height; ++r)
      for (int c = 0; c < img.width; ++c) {
        if (known(c, r)) continue;
        Vec3 acc = Vec3::Zero();
        int n = 0;
        const int dc[4] = {-1, 1, 0, 0};
        const int dr[4] = {0, 0, -1, 1};
        for (int i = 0; i < 4; ++i) {
          const int x = c + dc[i];
          const int y = r + dr[i];
          if (img.in_bounds(x, y) && known(x, y)) {
            acc += img(x, y);
            ++n;
          }
        }
        if (n) updates.emplace_back(img.index(c, r), acc / n);
      }
    if (updates.empty()) break;
    for (const auto& [idx, v] : updates) {
      img[idx] = v;
      known[idx] = 1;
    }
  }
  return true;
}

}  // namespace difftex
