#pragma once

// Per-polygon texture charts and the texel <-> pixel mappings between a
// chart and each calibrated photo.

#include "difftex/geometry.hpp"
#include "difftex/image.hpp"

#include <cmath>
#include <optional>
#include <span>
#include <vector>

namespace difftex {

/// Orthographic texel grid laid over a polygon's plane. Texel (c, r) has
/// its center at plane coordinates (left + (c + 0.5) s, top - (r + 0.5) s),
/// so row 0 is the edge with the largest e2 coordinate.
struct UVChart {
  ProxyPolygon polygon;
  int width = 0;
  int height = 0;
  double texel_size = 0;
  double left = 0;  // plane x of the chart's left edge
  double top = 0;   // plane y of the chart's top edge
  Mask inside;
  std::vector<Mat3> homographies;  // plane -> pixel, one per attached camera

  double extent_u() const { return width * texel_size; }
  double extent_v() const { return height * texel_size; }
  std::size_t texel_count() const { return std::size_t(width) * height; }

  Vec2 texel_center(int c, int r) const {
    return {left + (c + 0.5) * texel_size, top - (r + 0.5) * texel_size};
  }
  Vec3 texel_point(int c, int r) const { return polygon.from_plane(texel_center(c, r)); }

  /// Continuous texel coordinates (integers at texel centers).
  Vec2 plane_to_texel(const Vec2& q) const {
    return {(q.x() - left) / texel_size - 0.5, (top - q.y()) / texel_size - 0.5};
  }

  /// Maps homogeneous texel coordinates (c, r, 1) to plane coordinates.
  Mat3 texel_to_plane_matrix() const {
    Mat3 a;
    a << texel_size, 0, left + 0.5 * texel_size, 0, -texel_size, top - 0.5 * texel_size, 0, 0, 1;
    return a;
  }

  /// Normalized OBJ-style UV of a plane point (v grows with e2).
  Vec2 plane_to_uv(const Vec2& q) const {
    return {(q.x() - left) / extent_u(), (q.y() - (top - extent_v())) / extent_v()};
  }
};

/// Homography from plane coordinates of `poly` to pixels of `cam`. The
/// homogeneous scale of the result equals the camera-space depth.
inline Mat3 plane_homography(const ProxyPolygon& poly, const Camera& cam) {
  Mat3 m;
  m.col(0) = cam.rotation * poly.e1;
  m.col(1) = cam.rotation * poly.e2;
  m.col(2) = cam.rotation * poly.origin + cam.translation;
  return cam.intrinsics() * m;
}

namespace detail {

inline int short_side_texels(double ratio, int resolution, int layout_base) {
  if (layout_base > 0 && resolution >= layout_base && resolution % layout_base == 0) {
    const int base = std::max(1, int(std::ceil(layout_base * ratio - 1e-9)));
    return base * (resolution / layout_base);
  }
  return std::max(1, int(std::ceil(resolution * ratio - 1e-9)));
}

}  // namespace detail

/// Lays a square-texel chart over the polygon's bounding rectangle. The
/// longer side gets `stage_resolution` texels; the shorter side is rounded
/// up (padding split evenly) at `layout_base` and scaled, so charts at
/// successive doublings nest exactly. `layout_base` 0 means
/// min(stage_resolution, 256).
inline UVChart build_chart(const ProxyPolygon& polygon, int stage_resolution,
                           std::span<const Camera> cameras = {}, int layout_base = 0) {
  if (stage_resolution < 1) throw InputError("chart resolution must be positive");
  const auto pv = polygon.plane_vertices();
  if (!(std::abs(polygon.area()) > 0)) throw InputError("degenerate polygon (zero area)");
  Vec2 lo = pv.front();
  Vec2 hi = pv.front();
  for (const auto& p : pv) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const Vec2 ext = hi - lo;
  if (!(ext.minCoeff() > 0)) throw InputError("degenerate polygon (zero area)");
  if (layout_base == 0) layout_base = std::min(stage_resolution, 256);

  UVChart chart;
  chart.polygon = polygon;
  if (ext.x() >= ext.y()) {
    chart.width = stage_resolution;
    chart.height = detail::short_side_texels(ext.y() / ext.x(), stage_resolution, layout_base);
    chart.texel_size = ext.x() / stage_resolution;
  } else {
    chart.height = stage_resolution;
    chart.width = detail::short_side_texels(ext.x() / ext.y(), stage_resolution, layout_base);
    chart.texel_size = ext.y() / stage_resolution;
  }
  const Vec2 mid = 0.5 * (lo + hi);
  chart.left = mid.x() - 0.5 * chart.extent_u();
  chart.top = mid.y() + 0.5 * chart.extent_v();

  chart.inside = Mask(chart.width, chart.height);
  for (int r = 0; r < chart.height; ++r)
    for (int c = 0; c < chart.width; ++c)
      chart.inside(c, r) = detail::point_in_polygon(pv, chart.texel_center(c, r)) ? 1 : 0;

  chart.homographies.reserve(cameras.size());
  for (const auto& cam : cameras) chart.homographies.push_back(plane_homography(polygon, cam));
  return chart;
}

struct PixelMapping {
  Vec2 pixel = Vec2::Zero();
  double depth = 0;
  bool in_view = false;  // depth > 0 and pixel inside the image
};

/// Maps a texel center through a plane->pixel homography.
inline PixelMapping texel_to_pixel(const UVChart& chart, const Mat3& homography, const Camera& cam,
                                   int c, int r) {
  const Vec2 q = chart.texel_center(c, r);
  const Vec3 h = homography * Vec3(q.x(), q.y(), 1.0);
  PixelMapping out;
  out.depth = h.z();
  if (!(h.z() > 0)) return out;
  out.pixel = Vec2(h.x() / h.z(), h.y() / h.z());
  out.in_view = cam.contains_pixel(out.pixel);
  return out;
}

inline PixelMapping texel_to_pixel(const UVChart& chart, const Camera& cam, int c, int r) {
  return texel_to_pixel(chart, plane_homography(chart.polygon, cam), cam, c, r);
}

/// Back-projects a pixel onto the polygon plane. Returns nullopt when the
/// homography is singular (camera in the plane) or the ray misses the
/// plane in front of the camera.
inline std::optional<Vec2> pixel_to_plane(const Mat3& inverse_homography, const Vec2& pixel) {
  const Vec3 h = inverse_homography * Vec3(pixel.x(), pixel.y(), 1.0);
  if (!(h.z() > 0)) return std::nullopt;
  return Vec2(h.x() / h.z(), h.y() / h.z());
}

inline std::optional<Mat3> invert_homography(const Mat3& h) {
  Mat3 inv;
  bool ok = false;
  double det = 0;
  h.computeInverseAndDetWithCheck(inv, det, ok, 1e-300);
  const double scale = h.cwiseAbs().maxCoeff();
  if (!ok || !(std::abs(det) > 1e-12 * scale * scale * scale)) return std::nullopt;
  return inv;
}

/// Per-texel unit vectors.
using DirectionField = Grid<Vec3>;

/// Unit vectors from each texel's 3D point toward the camera center.
inline DirectionField view_direction_field(const UVChart& chart, const Camera& cam) {
  const Vec3 center = cam.center();
  DirectionField field(chart.width, chart.height);
  for (int r = 0; r < chart.height; ++r)
    for (int c = 0; c < chart.width; ++c) {
      const Vec3 d = center - chart.texel_point(c, r);
      const double n = d.norm();
      if (!(n > 1e-12)) throw InputError("camera center coincides with a texel");
      field(c, r) = d / n;
    }
  return field;
}

/// Blend of the mean surface->camera direction (at the polygon centroid)
/// and the polygon normal, renormalized. Falls back to the normal when the
/// directions cancel.
inline Vec3 guidance_direction(const ProxyPolygon& polygon, std::span<const Camera> cameras) {
  const Vec3 x = polygon.centroid();
  Vec3 sum = Vec3::Zero();
  for (const auto& cam : cameras) {
    const Vec3 d = cam.center() - x;
    if (d.norm() > 0) sum += d.normalized();
  }
  if (!(sum.norm() > 1e-12)) return polygon.normal;
  const Vec3 g = 0.5 * sum.normalized() + 0.5 * polygon.normal;
  if (!(g.norm() > 1e-12)) return polygon.normal;
  return g.normalized();
}

}  // namespace difftex
