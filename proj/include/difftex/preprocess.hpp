#pragma once

// Photo filtering and brightness equalization.

#include "difftex/visibility.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace difftex {

/// Variance of the 3x3 Laplacian of the [0,255] grayscale image.
inline double blur_score(const Image& img) {
  if (img.width < 3 || img.height < 3) return 0.0;
  const ScalarGrid g = to_gray(img, 255.0);
  double sum = 0;
  double sq = 0;
  std::size_t n = 0;
  for (int y = 1; y + 1 < g.height; ++y)
    for (int x = 1; x + 1 < g.width; ++x) {
      const double l = g(x - 1, y) + g(x + 1, y) + g(x, y - 1) + g(x, y + 1) - 4.0 * g(x, y);
      sum += l;
      sq += l * l;
      ++n;
    }
  const double mean = sum / double(n);
  return std::max(0.0, sq / double(n) - mean * mean);
}

struct PhotoFilterEntry {
  int photo_id = -1;
  std::string name;
  bool kept = true;
  std::string reason;  // "", "invisible", "blurry" or "inclined"
  double blur_score = 0;
  double min_incline_deg = 90;
};

struct PhotoFilterReport {
  std::vector<PhotoFilterEntry> entries;

  std::size_t kept_count() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += e.kept;
    return n;
  }
};

struct FilteredPhotos {
  std::vector<Photo> photos;
  PhotoFilterReport report;
};

/// Smallest angle (degrees) between the surface->camera direction at a
/// polygon's centroid and its normal, over the polygons the photo sees
/// from the front. 90 when nothing is seen.
inline double min_incline_deg(const ProxyModel& model, const DepthBuffer& buf, const Camera& cam) {
  std::vector<char> seen(model.polygons.size(), 0);
  for (int id : buf.id.data)
    if (id >= 0) seen[std::size_t(id)] = 1;
  double best = 90.0;
  for (std::size_t i = 0; i < model.polygons.size(); ++i) {
    const ProxyPolygon& poly = model.polygons[i];
    if (!seen[i] || !faces_camera(poly, cam)) continue;
    const Vec3 d = (cam.center() - poly.centroid()).normalized();
    const double ang = std::acos(std::clamp(d.dot(poly.normal), -1.0, 1.0)) * 180.0 / std::numbers::pi;
    best = std::min(best, ang);
  }
  return best;
}

inline bool sees_any_polygon(const ProxyModel& model, const DepthBuffer& buf, const Camera& cam) {
  for (int id : buf.id.data)
    if (id >= 0 && faces_camera(model.polygons[std::size_t(id)], cam)) return true;
  return false;
}

/// Drops invisible, blurry and extremely inclined photos. Throws when
/// nothing survives.
inline FilteredPhotos filter_photos(const ProxyModel& model, std::span<const Photo> photos,
                                    double blur_threshold, double incline_limit_deg) {
  FilteredPhotos out;
  for (const Photo& ph : photos) {
    PhotoFilterEntry e;
    e.photo_id = ph.id;
    e.name = ph.name;
    const DepthBuffer buf = render_depth(model, ph.camera);
    e.blur_score = blur_score(ph.rgb);
    e.min_incline_deg = min_incline_deg(model, buf, ph.camera);
    if (!sees_any_polygon(model, buf, ph.camera)) {
      e.kept = false;
      e.reason = "invisible";
    } else if (e.blur_score < blur_threshold) {
      e.kept = false;
      e.reason = "blurry";
    } else if (e.min_incline_deg > incline_limit_deg) {
      e.kept = false;
      e.reason = "inclined";
    }
    if (e.kept) out.photos.push_back(ph);
    out.report.entries.push_back(std::move(e));
  }
  if (out.photos.empty()) {
    std::string msg = "preprocess: every photo was filtered out (";
    for (std::size_t i = 0; i < out.report.entries.size(); ++i) {
      const auto& e = out.report.entries[i];
      msg += (i ? ", " : "") + e.name + ": " + e.reason;
    }
    throw InputError(msg + ")");
  }
  return out;
}

inline FilteredPhotos filter_photos(const ProxyModel& model, std::span<const Photo> photos,
                                    const SceneConfig& cfg) {
  return filter_photos(model, photos, cfg.blur_threshold, cfg.incline_limit_deg);
}

/// Pixels that show any proxy polygon.
inline Mask coverage_mask(const ProxyModel& model, const Camera& cam) {
  const DepthBuffer buf = render_depth(model, cam);
  Mask m(cam.width, cam.height, 0);
  for (std::size_t p = 0; p < m.size(); ++p) m[p] = buf.id[p] >= 0 ? 1 : 0;
  return m;
}

using Histogram = std::array<double, 256>;

inline int value_bin(double v) { return std::clamp(int(std::lround(v * 255.0)), 0, 255); }

/// Normalized cumulative histogram of V over the masked pixels (all
/// pixels when the mask is empty or selects nothing).
inline Histogram value_cdf(const Image& img, const Mask* mask = nullptr) {
  Histogram h{};
  double n = 0;
  auto add_all = [&](bool use_mask) {
    for (std::size_t p = 0; p < img.size(); ++p) {
      if (use_mask && !(*mask)[p]) continue;
      h[std::size_t(value_bin(rgb_to_hsv(img[p]).z()))] += 1;
      n += 1;
    }
  };
  add_all(mask && !mask->empty());
  if (n == 0) add_all(false);
  double acc = 0;
  for (auto& v : h) {
    acc += v;
    v = n > 0 ? acc / n : 1.0;
  }
  return h;
}

/// Monotone lookup taking source bin b to the smallest reference bin whose
/// cumulative mass reaches the midpoint of b's mass interval.
inline std::array<int, 256> matching_lut(const Histogram& cdf, const Histogram& ref) {
  std::array<int, 256> lut{};
  int r = 0;
  double prev = 0;
  for (int b = 0; b < 256; ++b) {
    const double mid = 0.5 * (prev + cdf[std::size_t(b)]);
    prev = cdf[std::size_t(b)];
    while (r < 255 && ref[std::size_t(r)] < mid - 1e-12) ++r;
    lut[std::size_t(b)] = r;
  }
  return lut;
}

/// Per-bin mean of cumulative histograms.
inline Histogram average_cdf(std::span<const Histogram> cdfs) {
  Histogram ref{};
  for (const auto& c : cdfs)
    for (std::size_t b = 0; b < 256; ++b) ref[b] += c[b] / double(cdfs.size());
  return ref;
}

/// Matches every photo's V histogram to the average cumulative histogram.
/// Optional masks restrict the statistics; the remap applies to all pixels.
inline std::vector<Image> histogram_match(std::span<const Image> images, std::span<const Mask> masks = {}) {
  std::vector<Histogram> cdfs;
  for (std::size_t i = 0; i < images.size(); ++i)
    cdfs.push_back(value_cdf(images[i], masks.empty() ? nullptr : &masks[i]));
  const Histogram ref = average_cdf(cdfs);

  std::vector<Image> out;
  out.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto lut = matching_lut(cdfs[i], ref);
    Image img = images[i];
    for (auto& px : img.data) {
      Vec3 hsv = rgb_to_hsv(px);
      hsv.z() = lut[std::size_t(value_bin(hsv.z()))] / 255.0;
      px = clamp01(hsv_to_rgb(hsv));
    }
    out.push_back(std::move(img));
  }
  return out;
}

inline void histogram_match(std::vector<Photo>& photos, std::span<const Mask> masks = {}) {
  std::vector<Image> imgs;
  for (const auto& p : photos) imgs.push_back(p.rgb);
  auto matched = histogram_match(std::span<const Image>(imgs), masks);
  for (std::size_t i = 0; i < photos.size(); ++i) photos[i].rgb = std::move(matched[i]);
}

/// Mean V over the masked pixels (all pixels without a mask).
inline double mean_value(const Image& img, const Mask* mask = nullptr) {
  double s = 0;
  double n = 0;
  for (std::size_t p = 0; p < img.size(); ++p) {
    if (mask && !mask->empty() && !(*mask)[p]) continue;
    s += rgb_to_hsv(img[p]).z();
    n += 1;
  }
  return n > 0 ? s / n : 0.0;
}

}  // namespace difftex
