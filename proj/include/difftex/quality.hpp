#pragma once

// Per-texel quality of each photo: viewing-angle frontality times color
// consensus with the other active photos.

#include "difftex/field_types.hpp"
#include "difftex/mapped_photo.hpp"

#include <cmath>
#include <span>
#include <vector>

namespace difftex {

inline constexpr double kColorEpsilon = 1e-4;

struct QualityMatrix {
  std::vector<ScalarGrid> q;      // frontality * consensus, zero outside the chart mask
  std::vector<ScalarGrid> angle;  // max(0, d . n)
  std::vector<ScalarGrid> color;  // consensus term
  Image mean;                     // per-texel mean of active colors
  ScalarGrid sigma;               // per-texel pooled standard deviation
};

/// Mean and channel-pooled standard deviation of the active colors at one
/// texel: sigma^2 = sum_k |c_k - mu|^2 / (3 n).
inline std::pair<Vec3, double> color_stats(std::span<const MappedPhoto> mapped, const MaskSet& masks,
                                           std::size_t t) {
  Vec3 mu = Vec3::Zero();
  int n = 0;
  for (std::size_t k = 0; k < masks.slots(); ++k) {
    if (!masks.chart[k][t]) continue;
    mu += mapped[k].color[t];
    ++n;
  }
  if (n == 0) return {mu, 0.0};
  mu /= n;
  double ss = 0;
  for (std::size_t k = 0; k < masks.slots(); ++k) {
    if (masks.chart[k][t]) ss += (mapped[k].color[t] - mu).squaredNorm();
  }
  return {mu, std::sqrt(ss / (3.0 * n))};
}

inline void quality_matrix(std::span<const MappedPhoto> mapped, const MaskSet& masks, const Vec3& normal,
                           QualityMatrix& qm) {
  if (masks.slots() == 0) {
    qm = QualityMatrix{};
    return;
  }
  const int w = masks.chart.front().width;
  const int h = masks.chart.front().height;
  const std::size_t n = std::size_t(w) * h;
  qm.mean.reset(w, h, Vec3::Zero());
  qm.sigma.reset(w, h, 0.0);
  reset_grids(qm.q, masks.slots(), w, h, 0.0);
  reset_grids(qm.angle, masks.slots(), w, h, 0.0);
  reset_grids(qm.color, masks.slots(), w, h, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    const auto [mu, sigma] = color_stats(mapped, masks, t);
    qm.mean[t] = mu;
    qm.sigma[t] = sigma;
    for (std::size_t k = 0; k < masks.slots(); ++k) {
      if (!masks.chart[k][t]) continue;
      const double qa = std::max(0.0, mapped[k].direction[t].dot(normal));
      const double qc =
          std::exp(-(mapped[k].color[t] - mu).squaredNorm() / (2 * sigma * sigma + kColorEpsilon));
      qm.angle[k][t] = qa;
      qm.color[k][t] = qc;
      qm.q[k][t] = qa * qc;
    }
  }
}

inline QualityMatrix quality_matrix(std::span<const MappedPhoto> mapped, const MaskSet& masks,
                                    const Vec3& normal) {
  QualityMatrix qm;
  quality_matrix(mapped, masks, normal, qm);
  return qm;
}

}  // namespace difftex
