#pragma once

#include "difftex/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

namespace difftex {

/// Dense row-major 2D grid.
template <typename T>
struct Grid {
  int width = 0;
  int height = 0;
  std::vector<T> data;

  Grid() = default;
  Grid(int w, int h, T fill = T{}) : width(w), height(h), data(std::size_t(w) * h, fill) {}

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  std::size_t index(int x, int y) const { return std::size_t(y) * width + x; }
  bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }

  T& operator()(int x, int y) { return data[index(x, y)]; }
  const T& operator()(int x, int y) const { return data[index(x, y)]; }
  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }

  /// Reshapes and fills, reusing the allocation when it is large enough.
  void reset(int w, int h, T fill = T{}) {
    width = w;
    height = h;
    data.assign(std::size_t(w) * h, fill);
  }

  bool same_shape(const Grid& other) const {
    return width == other.width && height == other.height;
  }
  bool operator==(const Grid& other) const = default;
};

template <typename T>
void reset_grids(std::vector<Grid<T>>& grids, std::size_t n, int w, int h, T fill = T{}) {
  grids.resize(n);
  for (auto& g : grids) g.reset(w, h, fill);
}

using Mask = Grid<std::uint8_t>;
using ScalarGrid = Grid<double>;
/// RGB image with channels in [0,1].
using Image = Grid<Vec3>;

/// Four taps of a bilinear lookup with edge clamping. Integer coordinates
/// address sample centers.
struct BilinearTaps {
  std::array<int, 4> x{};
  std::array<int, 4> y{};
  std::array<double, 4> w{};
};

inline BilinearTaps bilinear_taps(int width, int height, double u, double v) {
  const double uc = std::clamp(u, 0.0, double(width - 1));
  const double vc = std::clamp(v, 0.0, double(height - 1));
  const int x0 = std::min(int(std::floor(uc)), width - 1);
  const int y0 = std::min(int(std::floor(vc)), height - 1);
  const int x1 = std::min(x0 + 1, width - 1);
  const int y1 = std::min(y0 + 1, height - 1);
  const double fx = uc - x0;
  const double fy = vc - y0;
  BilinearTaps t;
  t.x = {x0, x1, x0, x1};
  t.y = {y0, y0, y1, y1};
  t.w = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
  return t;
}

template <typename T>
T sample_bilinear(const Grid<T>& g, double u, double v) {
  const BilinearTaps t = bilinear_taps(g.width, g.height, u, v);
  T acc = g(t.x[0], t.y[0]) * t.w[0];
  for (int i = 1; i < 4; ++i) acc += g(t.x[i], t.y[i]) * t.w[i];
  return acc;
}

inline double luminance(const Vec3& c) { return 0.299 * c.x() + 0.587 * c.y() + 0.114 * c.z(); }

inline ScalarGrid to_gray(const Image& img, double scale = 1.0) {
  ScalarGrid g(img.width, img.height);
  for (std::size_t i = 0; i < img.size(); ++i) g[i] = scale * luminance(img[i]);
  return g;
}

/// RGB in [0,1] to (h in [0,6), s, v).
inline Vec3 rgb_to_hsv(const Vec3& c) {
  const double mx = c.maxCoeff();
  const double mn = c.minCoeff();
  const double d = mx - mn;
  double h = 0;
  if (d > 0) {
    if (mx == c.x()) {
      h = (c.y() - c.z()) / d;
      if (h < 0) h += 6;
    } else if (mx == c.y()) {
      h = (c.z() - c.x()) / d + 2;
    } else {
      h = (c.x() - c.y()) / d + 4;
    }
  }
  const double s = mx > 0 ? d / mx : 0;
  return {h, s, mx};
}

inline Vec3 hsv_to_rgb(const Vec3& hsv) {
  const double h = hsv.x();
  const double s = hsv.y();
  const double v = hsv.z();
  const double c = v * s;
  const double hh = std::fmod(h, 6.0);
  const double x = c * (1 - std::abs(std::fmod(hh, 2.0) - 1));
  Vec3 rgb;
  switch (std::clamp(int(hh), 0, 5)) {
    case 0: rgb = {c, x, 0}; break;
    case 1: rgb = {x, c, 0}; break;
    case 2: rgb = {0, c, x}; break;
    case 3: rgb = {0, x, c}; break;
    case 4: rgb = {x, 0, c}; break;
    default: rgb = {c, 0, x}; break;
  }
  const double m = v - c;
  return rgb + Vec3::Constant(m);
}

inline Vec3 clamp01(const Vec3& c) { return c.cwiseMax(0.0).cwiseMin(1.0); }

/// Rounds every channel to the nearest multiple of 1/255.
inline Image quantize8(const Image& img) {
  Image out = img;
  for (auto& p : out.data) {
    for (int ch = 0; ch < 3; ++ch) p[ch] = std::round(std::clamp(p[ch], 0.0, 1.0) * 255.0) / 255.0;
  }
  return out;
}

/// Separable Gaussian blur with edge clamping.
template <typename T>
Grid<T> gaussian_blur(const Grid<T>& g, double sigma) {
  const int radius = std::max(1, int(std::ceil(3 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) sum += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& x : k) x /= sum;
  Grid<T> tmp(g.width, g.height);
  Grid<T> out(g.width, g.height);
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x) {
      T acc = g(std::clamp(x - radius, 0, g.width - 1), y) * k[0];
      for (int i = 1; i <= 2 * radius; ++i) acc += g(std::clamp(x - radius + i, 0, g.width - 1), y) * k[i];
      tmp(x, y) = acc;
    }
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x) {
      T acc = tmp(x, std::clamp(y - radius, 0, g.height - 1)) * k[0];
      for (int i = 1; i <= 2 * radius; ++i) acc += tmp(x, std::clamp(y - radius + i, 0, g.height - 1)) * k[i];
      out(x, y) = acc;
    }
  return out;
}

}  // namespace difftex
