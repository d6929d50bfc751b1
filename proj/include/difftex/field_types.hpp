#pragma once

// Per-polygon state shared by visibility, texture_field, losses and the
// optimizer. Every per-photo vector is indexed by "slot": the position of
// a photo in the polygon's `photo_ids` list.

#include "difftex/image.hpp"

#include <cstdint>
#include <vector>

namespace difftex {

/// Binary activation state of one polygon.
///   image[k]   : a_k, photo pixels currently feeding the polygon
///   chart[k]   : mapped mask over chart texels
///   overlap[k] : chart[k] and at least one other slot active
struct MaskSet {
  std::vector<int> photo_ids;
  std::vector<Mask> image;
  std::vector<Mask> chart;
  std::vector<Mask> overlap;

  std::size_t slots() const { return photo_ids.size(); }

  int active_count(std::size_t texel) const {
    int n = 0;
    for (const auto& m : chart) n += m[texel];
    return n;
  }

  void recompute_overlap() {
    if (chart.empty()) {
      overlap.clear();
      return;
    }
    const std::size_t n = chart.front().size();
    std::vector<int> count(n, 0);
    for (const auto& m : chart)
      for (std::size_t t = 0; t < n; ++t) count[t] += m[t];
    overlap.assign(chart.size(), Mask(chart.front().width, chart.front().height));
    for (std::size_t k = 0; k < chart.size(); ++k)
      for (std::size_t t = 0; t < n; ++t) overlap[k][t] = (chart[k][t] && count[t] >= 2) ? 1 : 0;
  }
};

/// Raw blending parameters (one grid per slot, values in [0,1]) with the
/// Adam moment buffers that belong to them.
struct WeightField {
  int width = 0;
  int height = 0;
  std::vector<int> photo_ids;
  std::vector<ScalarGrid> theta;
  std::vector<ScalarGrid> adam_m;
  std::vector<ScalarGrid> adam_v;
  int adam_steps = 0;

  WeightField() = default;
  WeightField(int w, int h, std::vector<int> ids) : width(w), height(h), photo_ids(std::move(ids)) {
    theta.assign(photo_ids.size(), ScalarGrid(w, h, 0.0));
    reset_moments();
  }

  std::size_t slots() const { return theta.size(); }

  void reset_moments() {
    adam_m.assign(theta.size(), ScalarGrid(width, height, 0.0));
    adam_v.assign(theta.size(), ScalarGrid(width, height, 0.0));
    adam_steps = 0;
  }
};

/// Composed RGB texture of one polygon. `hole` marks texels with no
/// active photo; their color is undefined (zero) until export fills them.
struct TextureMap {
  Image rgb;
  Mask hole;
};

}  // namespace difftex
