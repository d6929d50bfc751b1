#pragma once

#include "difftex/camera_geometry.hpp"
#include "difftex/scene.hpp"

#include <cmath>

namespace difftex {

/// A photo resampled onto a chart: the color at every texel's mapped pixel,
/// the surface->camera direction field, and the grayscale gradient
/// magnitude of the resampled photo.
struct MappedPhoto {
  int photo_id = -1;
  Mat3 homography = Mat3::Identity();  // plane -> pixel
  Image color;                         // zero where not mapped
  Mask mapped;                         // in front of the camera and inside the image
  DirectionField direction;
  ScalarGrid gradient;
};

namespace detail {

inline ScalarGrid mapped_gradient(const Image& color, const Mask& mapped) {
  ScalarGrid gray(color.width, color.height, 0.0);
  for (std::size_t i = 0; i < color.size(); ++i) gray[i] = luminance(color[i]);
  ScalarGrid mag(color.width, color.height, 0.0);
  auto diff = [&](int c, int r, int dc, int dr) {
    double lo = gray(c, r), hi = gray(c, r);
    int span = 0;
    if (gray.in_bounds(c - dc, r - dr) && mapped(c - dc, r - dr)) {
      lo = gray(c - dc, r - dr);
      ++span;
    }
    if (gray.in_bounds(c + dc, r + dr) && mapped(c + dc, r + dr)) {
      hi = gray(c + dc, r + dr);
      ++span;
    }
    return span ? (hi - lo) / span : 0.0;
  };
  for (int r = 0; r < color.height; ++r)
    for (int c = 0; c < color.width; ++c) {
      if (!mapped(c, r)) continue;
      const double gx = diff(c, r, 1, 0);
      const double gy = diff(c, r, 0, 1);
      mag(c, r) = std::sqrt(gx * gx + gy * gy);
    }
  return mag;
}

}  // namespace detail

inline MappedPhoto map_photo(const UVChart& chart, const Photo& photo) {
  MappedPhoto mp;
  mp.photo_id = photo.id;
  mp.homography = plane_homography(chart.polygon, photo.camera);
  mp.color = Image(chart.width, chart.height, Vec3::Zero());
  mp.mapped = Mask(chart.width, chart.height, 0);
  for (int r = 0; r < chart.height; ++r)
    for (int c = 0; c < chart.width; ++c) {
      const PixelMapping pm = texel_to_pixel(chart, mp.homography, photo.camera, c, r);
      if (!pm.in_view) continue;
      mp.mapped(c, r) = 1;
      mp.color(c, r) = sample_bilinear(photo.rgb, pm.pixel.x(), pm.pixel.y());
    }
  mp.direction = view_direction_field(chart, photo.camera);
  mp.gradient = detail::mapped_gradient(mp.color, mp.mapped);
  return mp;
}

}  // namespace difftex
