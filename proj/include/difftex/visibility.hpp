#pragma once

// Depth-buffer visibility of proxy polygons in each photo, and the
// activation masks derived from it.

#include "difftex/camera_geometry.hpp"
#include "difftex/field_types.hpp"
#include "difftex/scene.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <utility>
#include <span>
#include <vector>

namespace difftex {

/// Nearest-surface depth (camera z) and polygon id per pixel; id -1 is
/// background.
struct DepthBuffer {
  Grid<double> depth;
  Grid<int> id;
};

namespace detail {

// Clips a camera-space loop against z >= z_near.
inline std::vector<Vec3> clip_near(const std::vector<Vec3>& loop, double z_near) {
  std::vector<Vec3> out;
  const std::size_t n = loop.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3& a = loop[i];
    const Vec3& b = loop[(i + 1) % n];
    const bool ina = a.z() >= z_near;
    const bool inb = b.z() >= z_near;
    if (ina) out.push_back(a);
    if (ina != inb) {
      const double s = (z_near - a.z()) / (b.z() - a.z());
      out.push_back(a + s * (b - a));
    }
  }
  return out;
}

inline double edge(const Vec2& a, const Vec2& b, const Vec2& p) {
  return (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x());
}

}  // namespace detail

/// Rasterizes every polygon (fan-triangulated, near-clipped) into the
/// camera. Depth at a pixel is the exact ray/plane distance along z.
inline DepthBuffer render_depth(const ProxyModel& model, const Camera& cam) {
  DepthBuffer buf{Grid<double>(cam.width, cam.height, std::numeric_limits<double>::infinity()),
                  Grid<int>(cam.width, cam.height, -1)};
  const double z_near = 1e-6 * std::max(1.0, model.diameter());
  for (std::size_t i = 0; i < model.polygons.size(); ++i) {
    const ProxyPolygon& poly = model.polygons[i];
    std::vector<Vec3> loop;
    for (const auto& v : poly.vertices) loop.push_back(cam.to_camera(v));
    loop = detail::clip_near(loop, z_near);
    if (loop.size() < 3) continue;
    std::vector<Vec2> px;
    for (const auto& v : loop) px.emplace_back(cam.fx * v.x() / v.z() + cam.cx, cam.fy * v.y() / v.z() + cam.cy);

    const Vec3 nc = cam.rotation * poly.normal;
    const double hc = nc.dot(cam.to_camera(poly.origin));
    for (std::size_t t = 1; t + 1 < px.size(); ++t) {
      const Vec2& a = px[0];
      const Vec2& b = px[t];
      const Vec2& c = px[t + 1];
      const double area = detail::edge(a, b, c);
      if (area == 0) continue;
      const double sgn = area > 0 ? 1.0 : -1.0;
      const int x0 = std::max(0, int(std::ceil(std::min({a.x(), b.x(), c.x()}))));
      const int x1 = std::min(cam.width - 1, int(std::floor(std::max({a.x(), b.x(), c.x()}))));
      const int y0 = std::max(0, int(std::ceil(std::min({a.y(), b.y(), c.y()}))));
      const int y1 = std::min(cam.height - 1, int(std::floor(std::max({a.y(), b.y(), c.y()}))));
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          const Vec2 p(x, y);
          if (sgn * detail::edge(b, c, p) < 0 || sgn * detail::edge(c, a, p) < 0 ||
              sgn * detail::edge(a, b, p) < 0) {
            continue;
          }
          const Vec3 ray((x - cam.cx) / cam.fx, (y - cam.cy) / cam.fy, 1.0);
          const double denom = nc.dot(ray);
          if (std::abs(denom) < 1e-300) continue;
          const double z = hc / denom;
          if (!(z > 0)) continue;
          if (z < buf.depth(x, y)) {
            buf.depth(x, y) = z;
            buf.id(x, y) = int(i);
          }
        }
    }
  }
  return buf;
}

/// Depth buffers of every photo plus the depth tolerance used to compare
/// against them.
struct VisibilityIndex {
  const ProxyModel* model = nullptr;
  std::vector<DepthBuffer> buffers;  // parallel to the photo list
  double eps_z = 0;
};

inline VisibilityIndex build_visibility_index(const ProxyModel& model, std::span<const Photo> photos) {
  if (model.polygons.empty()) throw InputError("visibility: empty model");
  VisibilityIndex index;
  index.model = &model;
  index.eps_z = 1e-4 * model.diameter();
  index.buffers.reserve(photos.size());
  for (const auto& ph : photos) index.buffers.push_back(render_depth(model, ph.camera));
  return index;
}

inline bool faces_camera(const ProxyPolygon& poly, const Camera& cam) {
  return poly.normal.dot(cam.center()) > poly.plane_offset();
}

/// Image-space mask a: pixels whose nearest surface is polygon `poly_index`
/// seen from its front side.
inline Mask image_visibility(const VisibilityIndex& index, std::size_t photo, int poly_index,
                             const Camera& cam) {
  const DepthBuffer& buf = index.buffers[photo];
  Mask a(cam.width, cam.height, 0);
  if (!faces_camera(index.model->polygons[std::size_t(poly_index)], cam)) return a;
  for (std::size_t p = 0; p < a.size(); ++p) a[p] = buf.id[p] == poly_index ? 1 : 0;
  return a;
}

/// Chart-space visibility: texel inside the polygon, mapped in front of the
/// camera and inside the image, polygon front-facing, and not occluded by
/// any polygon that owns one of the four pixels around the projection.
inline Mask chart_visibility(const VisibilityIndex& index, std::size_t photo, int poly_index,
                             const UVChart& chart, const Camera& cam) {
  Mask vis(chart.width, chart.height, 0);
  const ProxyModel& model = *index.model;
  const ProxyPolygon& poly = model.polygons[std::size_t(poly_index)];
  if (!faces_camera(poly, cam)) return vis;
  const DepthBuffer& buf = index.buffers[photo];
  const Mat3 h = plane_homography(poly, cam);
  const Vec3 center = cam.center();
  for (int r = 0; r < chart.height; ++r)
    for (int c = 0; c < chart.width; ++c) {
      if (!chart.inside(c, r)) continue;
      const PixelMapping pm = texel_to_pixel(chart, h, cam, c, r);
      if (!pm.in_view) continue;
      const int x0 = std::clamp(int(std::floor(pm.pixel.x())), 0, cam.width - 1);
      const int y0 = std::clamp(int(std::floor(pm.pixel.y())), 0, cam.height - 1);
      const int x1 = std::min(x0 + 1, cam.width - 1);
      const int y1 = std::min(y0 + 1, cam.height - 1);
      const Vec3 x = chart.texel_point(c, r);
      bool occluded = false;
      int tested[4] = {-1, -1, -1, -1};
      int ntested = 0;
      const std::array<std::pair<int, int>, 4> around{{{x0, y0}, {x1, y0}, {x0, y1}, {x1, y1}}};
      for (const auto& [px, py] : around) {
        const int j = buf.id(px, py);
        if (j < 0 || j == poly_index) continue;
        if (std::find(tested, tested + ntested, j) != tested + ntested) continue;
        tested[ntested++] = j;
        const auto s = segment_hit(model.polygons[std::size_t(j)], center, x);
        if (s && pm.depth * (1.0 - *s) > index.eps_z) {
          occluded = true;
          break;
        }
      }
      vis(c, r) = occluded ? 0 : 1;
    }
  return vis;
}

/// Initial masks for one polygon. Only photos with at least one visible
/// texel get a slot.
inline MaskSet polygon_masks(const VisibilityIndex& index, int poly_index, const UVChart& chart,
                             std::span<const Photo> photos, std::span<const std::size_t> usable = {}) {
  MaskSet ms;
  auto consider = [&](std::size_t k) {
    Mask vis = chart_visibility(index, k, poly_index, chart, photos[k].camera);
    bool any = false;
    for (auto v : vis.data) any = any || v;
    if (!any) return;
    ms.photo_ids.push_back(photos[k].id);
    ms.chart.push_back(std::move(vis));
    ms.image.push_back(image_visibility(index, k, poly_index, photos[k].camera));
  };
  if (usable.empty()) {
    for (std::size_t k = 0; k < photos.size(); ++k) consider(k);
  } else {
    for (std::size_t k : usable) consider(k);
  }
  ms.recompute_overlap();
  return ms;
}

/// Per-polygon initial masks for the whole model. Photos that see no
/// polygon at all are left out everywhere.
inline std::vector<MaskSet> compute_visibility_masks(const ProxyModel& model,
                                                     std::span<const Photo> photos,
                                                     std::span<const UVChart> charts) {
  const VisibilityIndex index = build_visibility_index(model, photos);
  std::vector<MaskSet> out;
  out.reserve(model.polygons.size());
  for (std::size_t i = 0; i < model.polygons.size(); ++i) {
    out.push_back(polygon_masks(index, int(i), charts[i], photos));
  }
  return out;
}

/// Regenerates the image mask of every slot from its chart mask: a pixel
/// stays active when it was initially active and the texel nearest to its
/// back-projection is active.
inline void pull_image_masks(MaskSet& masks, const UVChart& chart, std::span<const Mask> initial_image,
                             std::span<const Camera> cameras) {
  for (std::size_t k = 0; k < masks.slots(); ++k) {
    const auto hinv = invert_homography(plane_homography(chart.polygon, cameras[k]));
    Mask& a = masks.image[k];
    const Mask& a0 = initial_image[k];
    for (int y = 0; y < a.height; ++y)
      for (int x = 0; x < a.width; ++x) {
        std::uint8_t on = 0;
        if (a0(x, y) && hinv) {
          if (const auto q = pixel_to_plane(*hinv, Vec2(x, y))) {
            const Vec2 t = chart.plane_to_texel(*q);
            const int c = std::clamp(int(std::lround(t.x())), 0, chart.width - 1);
            const int r = std::clamp(int(std::lround(t.y())), 0, chart.height - 1);
            on = masks.chart[k](c, r);
          }
        }
        a(x, y) = on;
      }
  }
}

/// Deactivates texels whose raw weight fell to tau or below. A texel never
/// loses its last active photo: when every active weight is at or below
/// tau, the largest one survives (ties go to the larger `tie_break` value,
/// then the lower slot). Image masks are left to `pull_image_masks`.
inline void update_activation(MaskSet& masks, const WeightField& weights, double tau,
                              const std::vector<ScalarGrid>* tie_break = nullptr) {
  const std::size_t n = masks.slots() ? masks.chart.front().size() : 0;
  for (std::size_t t = 0; t < n; ++t) {
    int survivors = 0;
    int best = -1;
    for (std::size_t k = 0; k < masks.slots(); ++k) {
      if (!masks.chart[k][t]) continue;
      if (weights.theta[k][t] > tau) ++survivors;
      if (best < 0) {
        best = int(k);
        continue;
      }
      const double wk = weights.theta[k][t];
      const double wb = weights.theta[std::size_t(best)][t];
      if (wk > wb || (wk == wb && tie_break && (*tie_break)[k][t] > (*tie_break)[std::size_t(best)][t])) {
        best = int(k);
      }
    }
    if (best < 0) continue;
    for (std::size_t k = 0; k < masks.slots(); ++k) {
      if (!masks.chart[k][t]) continue;
      if (weights.theta[k][t] > tau) continue;
      if (survivors == 0 && int(k) == best) continue;
      masks.chart[k][t] = 0;
    }
  }
  masks.recompute_overlap();
}

}  // namespace difftex
