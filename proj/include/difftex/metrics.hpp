#pragma once

#include "difftex/mapped_photo.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

namespace difftex {

/// p-th percentile (nearest rank) of the per-texel RGB distance. Texels
/// flagged in `exclude` are skipped.
inline double error_percentile(const Image& tex, const Image& gt, double p, const Mask* exclude = nullptr) {
  if (!tex.same_shape(gt)) throw InputError("error_percentile: resolution mismatch");
  if (!(p > 0 && p <= 100)) throw InputError("error_percentile: p must lie in (0,100]");
  std::vector<double> d;
  d.reserve(tex.size());
  for (std::size_t t = 0; t < tex.size(); ++t) {
    if (exclude && !exclude->empty() && (*exclude)[t]) continue;
    d.push_back((tex[t] - gt[t]).norm());
  }
  if (d.empty()) return 0.0;
  const std::size_t rank = std::max<std::size_t>(1, std::size_t(std::ceil(p / 100.0 * double(d.size()))));
  std::nth_element(d.begin(), d.begin() + std::ptrdiff_t(rank - 1), d.end());
  return d[rank - 1];
}

namespace detail {

// "Valid" separable Gaussian filter: output is (w-10) x (h-10).
inline ScalarGrid gaussian_valid(const ScalarGrid& g, const std::array<double, 11>& k) {
  ScalarGrid tmp(g.width - 10, g.height);
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < tmp.width; ++x) {
      double acc = 0;
      for (int i = 0; i < 11; ++i) acc += k[std::size_t(i)] * g(x + i, y);
      tmp(x, y) = acc;
    }
  ScalarGrid out(tmp.width, g.height - 10);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      double acc = 0;
      for (int i = 0; i < 11; ++i) acc += k[std::size_t(i)] * tmp(x, y + i);
      out(x, y) = acc;
    }
  return out;
}

inline std::array<double, 11> ssim_kernel() {
  std::array<double, 11> k{};
  double s = 0;
  for (int i = 0; i < 11; ++i) s += k[std::size_t(i)] = std::exp(-0.5 * (i - 5) * (i - 5) / (1.5 * 1.5));
  for (auto& v : k) v /= s;
  return k;
}

}  // namespace detail

/// Single-scale SSIM, 11x11 Gaussian window (sigma 1.5), K1 0.01, K2 0.03,
/// L 1; mean over valid windows, averaged over channels.
inline double ssim(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw InputError("ssim: resolution mismatch");
  if (a.width < 11 || a.height < 11) throw InputError("ssim: image smaller than the 11x11 window");
  const auto k = detail::ssim_kernel();
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  double total = 0;
  for (int ch = 0; ch < 3; ++ch) {
    ScalarGrid x(a.width, a.height), y(a.width, a.height), xx(a.width, a.height), yy(a.width, a.height),
        xy(a.width, a.height);
    for (std::size_t i = 0; i < a.size(); ++i) {
      x[i] = a[i][ch];
      y[i] = b[i][ch];
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const ScalarGrid mx = detail::gaussian_valid(x, k), my = detail::gaussian_valid(y, k),
                     sxx = detail::gaussian_valid(xx, k), syy = detail::gaussian_valid(yy, k),
                     sxy = detail::gaussian_valid(xy, k);
    double acc = 0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i];
      const double vy = syy[i] - my[i] * my[i];
      const double cov = sxy[i] - mx[i] * my[i];
      acc += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    total += acc / double(mx.size());
  }
  return total / 3.0;
}

struct PerspectiveQuality {
  double q_front = 0;
  double q_vc = 0;
};

/// Frontality and view consistency of the dominant-source map. `directions`
/// maps photo id to its surface->camera field on the same chart.
inline PerspectiveQuality perspective_quality(const Grid<int>& source,
                                              const std::map<int, const DirectionField*>& directions,
                                              const Vec3& normal) {
  auto dir = [&](std::size_t t) -> const Vec3& { return (*directions.at(source[t]))[t]; };
  PerspectiveQuality q;
  double front = 0;
  std::size_t nf = 0;
  for (std::size_t t = 0; t < source.size(); ++t) {
    if (source[t] < 0) continue;
    front += std::max(0.0, dir(t).dot(normal));
    ++nf;
  }
  double vc = 0;
  std::size_t nv = 0;
  for (int r = 0; r < source.height; ++r)
    for (int c = 0; c < source.width; ++c) {
      const std::size_t t = source.index(c, r);
      if (source[t] < 0) continue;
      const int nbr[2][2] = {{c + 1, r}, {c, r + 1}};
      for (const auto& n : nbr) {
        if (!source.in_bounds(n[0], n[1])) continue;
        const std::size_t u = source.index(n[0], n[1]);
        if (source[u] < 0) continue;
        vc += 0.5 * (1.0 + dir(t).dot(dir(u)));
        ++nv;
      }
    }
  q.q_front = nf ? front / double(nf) : 0.0;
  q.q_vc = nv ? vc / double(nv) : 0.0;
  return q;
}

inline PerspectiveQuality perspective_quality(const Grid<int>& source, std::span<const MappedPhoto> mapped,
                                              const Vec3& normal) {
  std::map<int, const DirectionField*> dirs;
  for (const auto& m : mapped) dirs[m.photo_id] = &m.direction;
  return perspective_quality(source, dirs, normal);
}

/// Fraction of 4-neighbour pairs of non-hole texels (optionally restricted
/// to `region`) that share their dominant source.
inline double source_coherence(const Grid<int>& source, const Mask* region = nullptr) {
  std::size_t same = 0;
  std::size_t total = 0;
  auto in = [&](std::size_t t) { return source[t] >= 0 && (!region || (*region)[t]); };
  for (int r = 0; r < source.height; ++r)
    for (int c = 0; c < source.width; ++c) {
      const std::size_t t = source.index(c, r);
      if (!in(t)) continue;
      if (c + 1 < source.width && in(t + 1)) {
        ++total;
        same += source[t] == source[t + 1];
      }
      if (r + 1 < source.height && in(t + std::size_t(source.width))) {
        ++total;
        same += source[t] == source[t + std::size_t(source.width)];
      }
    }
  return total ? double(same) / double(total) : 1.0;
}

struct PolygonMetrics {
  int polygon = -1;
  double error_p90 = 0;
  double error_p95 = 0;
  double ssim = 1;
  double q_front = 0;
  double q_vc = 0;
  double hole_fraction = 0;
  bool has_perspective = false;
};

struct MetricsReport {
  std::vector<PolygonMetrics> polygons;
  double error_p90 = 0;  // over all evaluated texels
  double error_p95 = 0;
  double ssim = 1;  // texel-count weighted mean
  std::string note = "q_front and q_vc are computed from the dominant-source map (approximation)";
};

}  // namespace difftex
