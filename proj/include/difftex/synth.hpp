#pragma once

// Synthetic scenes with known ground truth: procedural facade textures,
// calibrated camera rigs, photos rendered through the engine's own
// mapping and sampling code, and evaluation against the ground truth.

#include "difftex/losses.hpp"
#include "difftex/metrics.hpp"
#include "difftex/preprocess.hpp"
#include "difftex/scene_io.hpp"
#include "difftex/visibility.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace difftex {

struct FrontoSpec {
  double distance = 16;
};

struct AlignedSpec {
  double distance = 12;
  int width = 384;
  int height = 288;
};

struct RigSpec {
  std::string type = "ring";  // ring | hemisphere | biased-topdown
  int count = 12;
  double radius = 18;
  double incline_deg = 30;         // ring: polar angle from +z
  double incline_spread_deg = 0;   // ring/hemisphere: alternating +- spread
  double azimuth_offset_deg = 0;
  double azimuth_spread_deg = 40;  // biased-topdown
  double elevation_deg = 65;       // biased-topdown: tilt above the facade normal
  int width = 512;
  int height = 512;
  Vec3 target = Vec3::Zero();
  std::optional<FrontoSpec> fronto;    // pixel-aligned view of polygon 0
  std::optional<AlignedSpec> aligned;  // biased-topdown: one aligned view per facade
};

struct PerturbationSpec {
  std::vector<double> brightness_offsets;  // per photo V offset
  double brightness_range = 0;             // uniform random offsets in [-r, r] when no list given
  std::vector<int> corrupted;              // photo indices rendered with inverted colors
  int corrupted_count = 0;                 // evenly spaced indices when no list given
  std::vector<double> dropped_sector_deg;  // [from, to] azimuths with no cameras
};

struct SynthSpec {
  std::string name = "custom";
  std::string geometry = "quad";  // quad | box | corner
  std::vector<double> size{8, 8};
  int gt_resolution = 512;
  int base_resolution = 256;
  int target_resolution = 0;  // 0: gt_resolution
  RigSpec rig;
  PerturbationSpec perturb;
  bool quantize = true;
  std::uint64_t seed = 1;
};

inline SynthSpec synth_spec_from_json(const json& j) {
  SynthSpec s;
  try {
    auto opt = [&](const json& o, const char* key, auto& field) {
      if (o.contains(key)) field = o.at(key).get<std::decay_t<decltype(field)>>();
    };
    opt(j, "name", s.name);
    if (j.contains("geometry")) {
      const json& g = j.at("geometry");
      opt(g, "type", s.geometry);
      opt(g, "size", s.size);
    }
    opt(j, "gt_resolution", s.gt_resolution);
    opt(j, "base_resolution", s.base_resolution);
    opt(j, "target_resolution", s.target_resolution);
    opt(j, "quantize", s.quantize);
    opt(j, "seed", s.seed);
    if (j.contains("rig")) {
      const json& r = j.at("rig");
      opt(r, "type", s.rig.type);
      opt(r, "count", s.rig.count);
      opt(r, "radius", s.rig.radius);
      opt(r, "incline_deg", s.rig.incline_deg);
      opt(r, "incline_spread_deg", s.rig.incline_spread_deg);
      opt(r, "azimuth_offset_deg", s.rig.azimuth_offset_deg);
      opt(r, "azimuth_spread_deg", s.rig.azimuth_spread_deg);
      opt(r, "elevation_deg", s.rig.elevation_deg);
      if (r.contains("image")) {
        s.rig.width = r.at("image").at(0).get<int>();
        s.rig.height = r.at("image").at(1).get<int>();
      }
      if (r.contains("target")) {
        const auto t = r.at("target").get<std::vector<double>>();
        if (t.size() != 3) throw InputError("synth spec: rig target needs 3 values");
        s.rig.target = Vec3(t[0], t[1], t[2]);
      }
      if (r.contains("fronto")) {
        FrontoSpec f;
        opt(r.at("fronto"), "distance", f.distance);
        s.rig.fronto = f;
      }
      if (r.contains("aligned")) {
        AlignedSpec a;
        opt(r.at("aligned"), "distance", a.distance);
        if (r.at("aligned").contains("image")) {
          a.width = r.at("aligned").at("image").at(0).get<int>();
          a.height = r.at("aligned").at("image").at(1).get<int>();
        }
        s.rig.aligned = a;
      }
    }
    if (j.contains("perturbations")) {
      const json& p = j.at("perturbations");
      opt(p, "brightness_offsets", s.perturb.brightness_offsets);
      opt(p, "brightness_range", s.perturb.brightness_range);
      opt(p, "corrupted", s.perturb.corrupted);
      opt(p, "corrupted_count", s.perturb.corrupted_count);
      opt(p, "dropped_sector_deg", s.perturb.dropped_sector_deg);
    }
  } catch (const json::exception& ex) {
    throw InputError(std::string("synth spec: ") + ex.what());
  }
  return s;
}

inline json synth_spec_to_json(const SynthSpec& s) {
  json rig = {{"type", s.rig.type},
              {"count", s.rig.count},
              {"radius", s.rig.radius},
              {"incline_deg", s.rig.incline_deg},
              {"incline_spread_deg", s.rig.incline_spread_deg},
              {"azimuth_offset_deg", s.rig.azimuth_offset_deg},
              {"azimuth_spread_deg", s.rig.azimuth_spread_deg},
              {"elevation_deg", s.rig.elevation_deg},
              {"image", {s.rig.width, s.rig.height}},
              {"target", {s.rig.target.x(), s.rig.target.y(), s.rig.target.z()}}};
  if (s.rig.fronto) rig["fronto"] = {{"distance", s.rig.fronto->distance}};
  if (s.rig.aligned) {
    rig["aligned"] = {{"distance", s.rig.aligned->distance},
                      {"image", {s.rig.aligned->width, s.rig.aligned->height}}};
  }
  return {{"name", s.name},
          {"geometry", {{"type", s.geometry}, {"size", s.size}}},
          {"gt_resolution", s.gt_resolution},
          {"base_resolution", s.base_resolution},
          {"target_resolution", s.target_resolution},
          {"rig", rig},
          {"perturbations",
           {{"brightness_offsets", s.perturb.brightness_offsets},
            {"brightness_range", s.perturb.brightness_range},
            {"corrupted", s.perturb.corrupted},
            {"corrupted_count", s.perturb.corrupted_count},
            {"dropped_sector_deg", s.perturb.dropped_sector_deg}}},
          {"quantize", s.quantize},
          {"seed", s.seed}};
}

/// Built-in specs: quad12, box24, corner-biased, box24-brightness,
/// box24-corrupted.
inline std::optional<SynthSpec> standard_spec(const std::string& name) {
  SynthSpec s;
  s.name = name;
  if (name == "quad12") {
    s.geometry = "quad";
    s.size = {8, 8};
    s.gt_resolution = 512;
    s.rig.type = "ring";
    s.rig.count = 11;
    s.rig.radius = 18;
    s.rig.incline_deg = 30;
    s.rig.width = s.rig.height = 512;
    s.rig.fronto = FrontoSpec{16};
    s.seed = 12;
    return s;
  }
  if (name == "box24" || name == "box24-brightness" || name == "box24-corrupted") {
    s.geometry = "box";
    s.size = {8, 8, 6};
    s.gt_resolution = 256;
    s.rig.type = "ring";
    s.rig.count = 24;
    s.rig.radius = 22;
    s.rig.incline_deg = 60;
    s.rig.azimuth_offset_deg = 7.5;
    s.rig.width = 384;
    s.rig.height = 288;
    s.rig.target = Vec3(0, 0, 3);
    s.seed = 24;
    if (name == "box24-brightness") s.perturb.brightness_range = 0.2;
    if (name == "box24-corrupted") s.perturb.corrupted = {0, 12};
    return s;
  }
  if (name == "corner-biased") {
    s.geometry = "corner";
    s.size = {8, 6};
    s.gt_resolution = 256;
    s.rig.type = "biased-topdown";
    s.rig.count = 5;
    s.rig.radius = 16;
    s.rig.elevation_deg = 65;
    s.rig.azimuth_spread_deg = 40;
    s.rig.width = 320;
    s.rig.height = 240;
    s.rig.aligned = AlignedSpec{12, 384, 288};
    s.seed = 65;
    return s;
  }
  return std::nullopt;
}

inline std::vector<std::string> standard_spec_names() {
  return {"quad12", "box24", "box24-brightness", "box24-corrupted", "corner-biased"};
}

// ---- geometry ----

inline ProxyModel synth_geometry(const SynthSpec& s) {
  auto need = [&](std::size_t n) {
    if (s.size.size() != n) throw InputError("synth spec: geometry '" + s.geometry + "' needs " + std::to_string(n) + " sizes");
    for (double v : s.size)
      if (!(v > 0)) throw InputError("synth spec: sizes must be positive");
  };
  std::vector<Vec3> v;
  std::vector<std::vector<int>> f;
  if (s.geometry == "quad") {
    need(2);
    const double a = 0.5 * s.size[0], b = 0.5 * s.size[1];
    v = {{-a, -b, 0}, {a, -b, 0}, {a, b, 0}, {-a, b, 0}};
    f = {{0, 1, 2, 3}};
  } else if (s.geometry == "box") {
    need(3);
    const double a = 0.5 * s.size[0], b = 0.5 * s.size[1], h = s.size[2];
    v = {{-a, -b, 0}, {a, -b, 0}, {a, b, 0}, {-a, b, 0}, {-a, -b, h}, {a, -b, h}, {a, b, h}, {-a, b, h}};
    f = {{0, 1, 5, 4},   // -y
         {1, 2, 6, 5},   // +x
         {2, 3, 7, 6},   // +y
         {3, 0, 4, 7},   // -x
         {4, 5, 6, 7},   // top
         {0, 3, 2, 1}};  // bottom
  } else if (s.geometry == "corner") {
    need(2);
    const double w = s.size[0], h = s.size[1];
    // Building occupies x > 0, y > 0; facades face -y and -x.
    v = {{0, 0, 0}, {w, 0, 0}, {w, 0, h}, {0, 0, h}, {0, w, 0}, {0, w, h}};
    f = {{0, 1, 2, 3}, {4, 0, 3, 5}};
  } else {
    throw InputError("synth spec: unknown geometry '" + s.geometry + "'");
  }
  return ProxyModel::from_faces(std::move(v), std::move(f));
}

// ---- ground-truth textures ----

namespace detail {

inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline double lattice(std::int64_t i, std::int64_t j, std::uint64_t seed) {
  const std::uint64_t h = mix64(seed ^ mix64(std::uint64_t(i) * 0x632be59bd9b4e019ULL + std::uint64_t(j)));
  return double(h >> 11) * 0x1.0p-53;
}

// Smooth value noise in [0,1).
inline double value_noise(double x, double y, std::uint64_t seed) {
  const double fx = std::floor(x), fy = std::floor(y);
  const auto i = std::int64_t(fx), j = std::int64_t(fy);
  auto s = [](double t) { return t * t * (3 - 2 * t); };
  const double u = s(x - fx), w = s(y - fy);
  const double a = lattice(i, j, seed), b = lattice(i + 1, j, seed);
  const double c = lattice(i, j + 1, seed), d = lattice(i + 1, j + 1, seed);
  return (a * (1 - u) + b * u) * (1 - w) + (c * (1 - u) + d * u) * w;
}

inline double smoothstep(double e0, double e1, double x) {
  const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
  return t * t * (3 - 2 * t);
}

inline Vec3 clamp_value(const Vec3& c, double lo, double hi) {
  Vec3 hsv = rgb_to_hsv(c);
  hsv.z() = std::clamp(hsv.z(), lo, hi);
  return hsv_to_rgb(hsv);
}

}  // namespace detail

/// Procedural facade on a chart: a flat wall color with a grid of
/// soft-edged, framed, noisy windows. Values are multiples of 1/255 with
/// V in [0.22, 0.75].
inline Image facade_texture(const UVChart& chart, std::uint64_t seed) {
  std::mt19937_64 rng(detail::mix64(seed));
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const Vec3 wall(0.55 + 0.15 * uni(rng), 0.38 + 0.1 * uni(rng), 0.25 + 0.1 * uni(rng));
  const Vec3 glass(0.16 + 0.06 * uni(rng), 0.22 + 0.06 * uni(rng), 0.32 + 0.08 * uni(rng));
  const Vec3 frame(0.72, 0.7, 0.66);
  const double pitch_x = 2.0, pitch_y = 2.0;
  const double win_w = 1.0, win_h = 1.2, border = 0.08, soft = 0.04;
  const double ox = uni(rng) * pitch_x, oy = uni(rng) * pitch_y;
  const std::uint64_t nseed = detail::mix64(seed + 17);

  const double lo_x = chart.left, hi_x = chart.left + chart.extent_u();
  const double lo_y = chart.top - chart.extent_v(), hi_y = chart.top;
  Image img(chart.width, chart.height);
  for (int r = 0; r < chart.height; ++r)
    for (int c = 0; c < chart.width; ++c) {
      const Vec2 q = chart.texel_center(c, r);
      // Keep a plain wall margin around the chart edges.
      const double margin = std::min({q.x() - lo_x, hi_x - q.x(), q.y() - lo_y, hi_y - q.y()});
      const double lx = std::fmod(q.x() - lo_x + ox, pitch_x);
      const double ly = std::fmod(q.y() - lo_y + oy, pitch_y);
      const double dx = std::abs(lx - 0.5 * pitch_x) - 0.5 * win_w;
      const double dy = std::abs(ly - 0.5 * pitch_y) - 0.5 * win_h;
      const double d = std::max(dx, dy);  // < 0 inside the window
      const double in_frame = 1.0 - detail::smoothstep(0.0, soft, d);
      const double in_glass = 1.0 - detail::smoothstep(-border - soft, -border, d);
      double edge_fade = detail::smoothstep(0.3, 0.3 + soft, margin);
      const double n = detail::value_noise(q.x() * 4.0, q.y() * 4.0, nseed) - 0.5;
      const Vec3 glass_n = glass + Vec3::Constant(0.12 * n);
      Vec3 col = wall;
      col = (1 - in_frame * edge_fade) * col + in_frame * edge_fade * frame;
      col = (1 - in_glass * edge_fade) * col + in_glass * edge_fade * glass_n;
      img(c, r) = detail::clamp_value(clamp01(col), 0.22, 0.75);
    }
  return quantize8(img);
}

// ---- rigs ----

struct RigCamera {
  Camera camera;
  double azimuth_deg = 0;
};

namespace detail {

// Focal length that fits `points` inside the image with a 5% margin.
inline double fit_focal(const Vec3& eye, const Vec3& target, const Vec3& up, int w, int h,
                        const std::vector<Vec3>& points) {
  const Camera probe = Camera::look_at(eye, target, up, w, h, 1.0);
  double mx = 1e-9, my = 1e-9;
  for (const auto& p : points) {
    const Vec3 xc = probe.to_camera(p);
    if (!(xc.z() > 0)) continue;
    mx = std::max(mx, std::abs(xc.x() / xc.z()));
    my = std::max(my, std::abs(xc.y() / xc.z()));
  }
  return std::min(0.475 * w / mx, 0.475 * h / my);
}

inline Camera fitted_camera(const Vec3& eye, const Vec3& target, int w, int h, const std::vector<Vec3>& points) {
  Vec3 up = Vec3::UnitZ();
  if ((target - eye).normalized().cross(up).norm() < 1e-6) up = Vec3::UnitY();
  return Camera::look_at(eye, target, up, w, h, fit_focal(eye, target, up, w, h, points));
}

inline bool azimuth_dropped(double az, const std::vector<double>& sector) {
  if (sector.size() != 2) return false;
  auto wrap = [](double a) { return std::fmod(std::fmod(a, 360.0) + 360.0, 360.0); };
  const double a = wrap(az), lo = wrap(sector[0]), hi = wrap(sector[1]);
  return lo <= hi ? (a >= lo && a <= hi) : (a >= lo || a <= hi);
}

}  // namespace detail

inline std::vector<RigCamera> synth_rig(const SynthSpec& s, const ProxyModel& model,
                                        const std::vector<UVChart>& gt_charts) {
  constexpr double deg = std::numbers::pi / 180.0;
  const RigSpec& rig = s.rig;
  std::vector<RigCamera> out;
  if (rig.fronto) {
    // Pixel-aligned view of polygon 0: one texel per pixel at gt resolution.
    const UVChart& ch = gt_charts.front();
    const ProxyPolygon& poly = ch.polygon;
    const Vec2 mid(ch.left + 0.5 * ch.extent_u(), ch.top - 0.5 * ch.extent_v());
    const Vec3 target = poly.from_plane(mid);
    const Vec3 eye = target + rig.fronto->distance * poly.normal;
    Camera cam;
    cam.width = ch.width;
    cam.height = ch.height;
    cam.fx = cam.fy = rig.fronto->distance / ch.texel_size;
    cam.cx = 0.5 * (ch.width - 1);
    cam.cy = 0.5 * (ch.height - 1);
    cam.rotation.row(0) = poly.e1.transpose();
    cam.rotation.row(1) = (-poly.e2).transpose();
    cam.rotation.row(2) = (-poly.normal).transpose();
    cam.translation = -cam.rotation * eye;
    out.push_back({cam, 0});
  }
  if (rig.type == "ring" || rig.type == "hemisphere") {
    for (int i = 0; i < rig.count; ++i) {
      double az, inc;
      if (rig.type == "ring") {
        az = rig.azimuth_offset_deg + 360.0 * i / rig.count;
        inc = rig.incline_deg + (i % 2 ? -1.0 : 1.0) * rig.incline_spread_deg;
      } else {
        az = rig.azimuth_offset_deg + 137.50776405003785 * i;
        const double t = (i + 0.5) / rig.count;
        inc = std::acos(1.0 - t * (1.0 - std::cos(rig.incline_deg * deg))) / deg;
      }
      if (detail::azimuth_dropped(az, s.perturb.dropped_sector_deg)) continue;
      const Vec3 dir(std::sin(inc * deg) * std::cos(az * deg), std::sin(inc * deg) * std::sin(az * deg),
                     std::cos(inc * deg));
      const Vec3 eye = rig.target + rig.radius * dir;
      out.push_back({detail::fitted_camera(eye, rig.target, rig.width, rig.height, model.vertices), az});
    }
  } else if (rig.type == "biased-topdown") {
    for (std::size_t p = 0; p < model.polygons.size(); ++p) {
      const ProxyPolygon& poly = model.polygons[p];
      const Vec3 c = poly.centroid();
      Vec3 horiz(poly.normal.x(), poly.normal.y(), 0);
      if (horiz.norm() < 1e-9) throw InputError("synth spec: biased-topdown rig needs vertical facades");
      horiz.normalize();
      const double base_az = std::atan2(horiz.y(), horiz.x()) / deg;
      if (rig.aligned) {
        out.push_back({detail::fitted_camera(c + rig.aligned->distance * poly.normal, c, rig.aligned->width,
                                             rig.aligned->height, poly.vertices),
                       base_az});
      }
      for (int i = 0; i < rig.count; ++i) {
        const double off = rig.count > 1 ? -rig.azimuth_spread_deg + 2.0 * rig.azimuth_spread_deg * i / (rig.count - 1) : 0.0;
        const double az = base_az + off;
        if (detail::azimuth_dropped(az, s.perturb.dropped_sector_deg)) continue;
        const double el = rig.elevation_deg * deg;
        const Vec3 dir(std::cos(el) * std::cos(az * deg), std::cos(el) * std::sin(az * deg), std::sin(el));
        out.push_back({detail::fitted_camera(c + rig.radius * dir, c, rig.width, rig.height, poly.vertices), az});
      }
    }
  } else {
    throw InputError("synth spec: unknown rig '" + rig.type + "'");
  }
  if (out.empty()) throw InputError("synth spec: the rig produced no cameras");
  return out;
}

// ---- rendering ----

inline const Vec3 kSynthBackground(0.55, 0.62, 0.72);

/// Renders the ground-truth textured model into `cam` with the engine's
/// plane back-projection and masked bilinear lookup.
inline Image render_ground_truth(const ProxyModel& model, const std::vector<UVChart>& charts,
                                 const std::vector<Image>& gt, const Camera& cam) {
  const DepthBuffer buf = render_depth(model, cam);
  Image img(cam.width, cam.height, kSynthBackground);
  std::vector<std::optional<Mat3>> hinv;
  std::vector<Mask> valid;
  for (std::size_t i = 0; i < charts.size(); ++i) {
    hinv.push_back(invert_homography(plane_homography(charts[i].polygon, cam)));
    valid.push_back(charts[i].inside);
  }
  BilinearTaps taps;
  std::array<std::size_t, 4> idx{};
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) {
      const int id = buf.id(x, y);
      if (id < 0) continue;
      const auto i = std::size_t(id);
      if (!faces_camera(charts[i].polygon, cam) || !hinv[i]) continue;
      const auto q = pixel_to_plane(*hinv[i], Vec2(x, y));
      if (!q) continue;
      if (!masked_taps(charts[i], valid[i], charts[i].plane_to_texel(*q), taps, idx)) continue;
      Vec3 acc = Vec3::Zero();
      for (int j = 0; j < 4; ++j) acc += taps.w[j] * gt[i][idx[j]];
      img(x, y) = acc;
    }
  return img;
}

inline Image shift_value(const Image& img, double offset) {
  Image out = img;
  for (auto& p : out.data) {
    Vec3 hsv = rgb_to_hsv(p);
    hsv.z() = std::clamp(hsv.z() + offset, 0.0, 1.0);
    p = clamp01(hsv_to_rgb(hsv));
  }
  return out;
}

struct SynthScene {
  SynthSpec spec;
  ProxyModel model;
  std::vector<Photo> photos;
  std::vector<UVChart> gt_charts;
  std::vector<Image> gt;
  std::vector<double> brightness_offsets;  // per photo
  std::vector<int> corrupted;              // photo ids
  int target_resolution() const { return spec.target_resolution > 0 ? spec.target_resolution : spec.gt_resolution; }
};

inline SynthScene generate_synthetic_scene(const SynthSpec& spec) {
  if (spec.gt_resolution < 16) throw InputError("synth spec: gt_resolution must be at least 16");
  SynthScene sc;
  sc.spec = spec;
  sc.model = synth_geometry(spec);
  for (std::size_t i = 0; i < sc.model.polygons.size(); ++i) {
    sc.gt_charts.push_back(build_chart(sc.model.polygons[i], spec.gt_resolution, {},
                                       std::min(spec.base_resolution, spec.gt_resolution)));
    sc.gt.push_back(facade_texture(sc.gt_charts.back(), detail::mix64(spec.seed) + i));
  }
  const auto rig = synth_rig(spec, sc.model, sc.gt_charts);
  if (spec.geometry == "box") {
    const double a = 0.5 * spec.size[0], b = 0.5 * spec.size[1], h = spec.size[2];
    for (const auto& rc : rig) {
      const Vec3 c = rc.camera.center();
      if (std::abs(c.x()) <= a && std::abs(c.y()) <= b && c.z() >= 0 && c.z() <= h) {
        throw InputError("synth spec: camera inside geometry");
      }
    }
  }
  const std::size_t n = rig.size();
  sc.brightness_offsets.assign(n, 0.0);
  if (!spec.perturb.brightness_offsets.empty()) {
    for (std::size_t i = 0; i < n && i < spec.perturb.brightness_offsets.size(); ++i)
      sc.brightness_offsets[i] = spec.perturb.brightness_offsets[i];
  } else if (spec.perturb.brightness_range > 0) {
    std::mt19937_64 rng(detail::mix64(spec.seed ^ 0xb417ULL));
    std::uniform_real_distribution<double> uni(-spec.perturb.brightness_range, spec.perturb.brightness_range);
    for (auto& o : sc.brightness_offsets) o = uni(rng);
  }
  std::vector<int> corrupted = spec.perturb.corrupted;
  if (corrupted.empty() && spec.perturb.corrupted_count > 0) {
    for (int i = 0; i < spec.perturb.corrupted_count; ++i) corrupted.push_back(int(i * n / spec.perturb.corrupted_count));
  }
  for (std::size_t i = 0; i < n; ++i) {
    Photo ph;
    ph.id = int(i);
    char name[32];
    std::snprintf(name, sizeof name, "img_%03zu.png", i);
    ph.name = name;
    ph.camera = rig[i].camera;
    if (!sees_any_polygon(sc.model, render_depth(sc.model, ph.camera), ph.camera)) {
      throw InputError("synth spec: camera " + std::to_string(i) + " sees no polygon");
    }
    Image img = render_ground_truth(sc.model, sc.gt_charts, sc.gt, ph.camera);
    if (sc.brightness_offsets[i] != 0) img = shift_value(img, sc.brightness_offsets[i]);
    if (std::find(corrupted.begin(), corrupted.end(), int(i)) != corrupted.end()) {
      for (auto& p : img.data) p = Vec3::Ones() - p;
      sc.corrupted.push_back(int(i));
    }
    ph.rgb = spec.quantize ? quantize8(img) : img;
    sc.photos.push_back(std::move(ph));
  }
  return sc;
}

inline std::string gt_name(std::size_t polygon) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "gt_%03zu.png", polygon);
  return buf;
}

/// Writes the scene (scene_io layout) plus gt/ with one image per polygon.
inline void write_synthetic_scene(const fs::path& dir, const SynthScene& sc) {
  SceneConfig cfg;
  cfg.target_resolution = sc.target_resolution();
  cfg.base_resolution = std::min(sc.spec.base_resolution, cfg.target_resolution);
  cfg.seed = sc.spec.seed;
  write_scene(dir, sc.model, sc.photos, &cfg);
  fs::create_directories(dir / "gt");
  json layout = json::array();
  for (std::size_t i = 0; i < sc.gt.size(); ++i) {
    write_png(dir / "gt" / gt_name(i), sc.gt[i]);
    layout.push_back({{"polygon", i}, {"width", sc.gt[i].width}, {"height", sc.gt[i].height}, {"file", gt_name(i)}});
  }
  json meta = {{"spec", synth_spec_to_json(sc.spec)},
               {"polygons", layout},
               {"brightness_offsets", sc.brightness_offsets},
               {"corrupted", sc.corrupted}};
  write_json(dir / "gt" / "gt.json", meta);
}

// ---- evaluation ----

/// Metrics of reconstructed textures against ground truth. Texels flagged
/// in `exclude` (holes, outside the polygon) are left out of the error
/// percentiles.
inline MetricsReport evaluate_against_gt(const std::vector<Image>& recon, const std::vector<Image>& gt,
                                         const std::vector<Mask>& exclude = {}) {
  if (recon.size() != gt.size()) throw InputError("evaluate: polygon count mismatch");
  MetricsReport rep;
  std::vector<double> all;
  double ssim_acc = 0, ssim_w = 0;
  for (std::size_t i = 0; i < recon.size(); ++i) {
    if (!recon[i].same_shape(gt[i])) {
      throw InputError("evaluate: polygon " + std::to_string(i) + " layout mismatch (" +
                       std::to_string(recon[i].width) + "x" + std::to_string(recon[i].height) + " vs " +
                       std::to_string(gt[i].width) + "x" + std::to_string(gt[i].height) + ")");
    }
    const Mask* ex = exclude.empty() ? nullptr : &exclude[i];
    PolygonMetrics pm;
    pm.polygon = int(i);
    std::size_t counted = 0, excluded = 0;
    for (std::size_t t = 0; t < recon[i].size(); ++t) {
      if (ex && (*ex)[t]) {
        ++excluded;
        continue;
      }
      all.push_back((recon[i][t] - gt[i][t]).norm());
      ++counted;
    }
    pm.hole_fraction = double(excluded) / double(recon[i].size());
    pm.error_p90 = error_percentile(recon[i], gt[i], 90, ex);
    pm.error_p95 = error_percentile(recon[i], gt[i], 95, ex);
    pm.ssim = ssim(recon[i], gt[i]);
    ssim_acc += pm.ssim * double(counted);
    ssim_w += double(counted);
    rep.polygons.push_back(pm);
  }
  if (!all.empty()) {
    auto pct = [&](double p) {
      std::vector<double> d = all;
      const std::size_t rank = std::max<std::size_t>(1, std::size_t(std::ceil(p / 100.0 * double(d.size()))));
      std::nth_element(d.begin(), d.begin() + std::ptrdiff_t(rank - 1), d.end());
      return d[rank - 1];
    };
    rep.error_p90 = pct(90);
    rep.error_p95 = pct(95);
  }
  rep.ssim = ssim_w > 0 ? ssim_acc / ssim_w : 0.0;
  return rep;
}

}  // namespace difftex
