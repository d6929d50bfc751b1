#pragma once

// End-to-end run: preprocess, visibility, per-polygon optimization on a
// worker pool, export.

#include "difftex/metrics.hpp"
#include "difftex/optimizer.hpp"
#include "difftex/preprocess.hpp"
#include "difftex/scene_io.hpp"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#ifndef DIFFTEX_VERSION
#define DIFFTEX_VERSION "0.0.0"
#endif

namespace difftex {

inline constexpr const char* kVersion = DIFFTEX_VERSION;

/// Error raised inside one polygon's worker.
struct PolygonError : std::runtime_error {
  int polygon;
  PolygonError(int p, const std::string& what)
      : std::runtime_error("optimizer: polygon " + std::to_string(p) + ": " + what), polygon(p) {}
};

struct PipelineOutput {
  std::vector<Photo> photos;  // filtered and brightness-matched
  PhotoFilterReport filter;
  std::vector<PolygonResult> polygons;
  std::vector<PerspectiveQuality> perspective;
  double preprocess_seconds = 0;
  double visibility_seconds = 0;
  double optimize_seconds = 0;
  int threads = 1;
};

/// Thread count: explicit value, else DIFFTEX_THREADS, else hardware.
inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("DIFFTEX_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return int(v);
  }
  return int(std::max(1u, std::thread::hardware_concurrency()));
}

/// Runs `fn(i)` for i in [0, n) on up to `threads` workers. The first
/// exception is rethrown after all workers stop.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex mu;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  const int k = std::max(1, std::min<int>(threads, int(n)));
  std::vector<std::thread> pool;
  for (int t = 1; t < k; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

inline PipelineOutput texture_scene(const ProxyModel& model, const std::vector<Photo>& input,
                                    const SceneConfig& cfg, int threads = 1) {
  cfg.validate();
  using clock = std::chrono::steady_clock;
  PipelineOutput out;
  out.threads = threads;
  auto t0 = clock::now();
  FilteredPhotos filtered = filter_photos(model, input, cfg);
  out.filter = std::move(filtered.report);
  out.photos = std::move(filtered.photos);
  if (cfg.histogram_matching) {
    std::vector<Mask> cover(out.photos.size());
    parallel_for(out.photos.size(), threads,
                 [&](std::size_t i) { cover[i] = coverage_mask(model, out.photos[i].camera); });
    histogram_match(out.photos, cover);
  }
  auto t1 = clock::now();
  out.preprocess_seconds = std::chrono::duration<double>(t1 - t0).count();

  VisibilityIndex index;
  index.model = &model;
  index.eps_z = 1e-4 * model.diameter();
  index.buffers.resize(out.photos.size());
  parallel_for(out.photos.size(), threads,
               [&](std::size_t i) { index.buffers[i] = render_depth(model, out.photos[i].camera); });
  auto t2 = clock::now();
  out.visibility_seconds = std::chrono::duration<double>(t2 - t1).count();

  const OptimizerSettings settings = OptimizerSettings::from_config(cfg);
  out.polygons.resize(model.polygons.size());
  out.perspective.resize(model.polygons.size());
  parallel_for(model.polygons.size(), threads, [&](std::size_t i) {
    try {
      out.polygons[i] = optimize_polygon(index, int(i), out.photos, settings);
    } catch (const OptimizationError& e) {
      throw PolygonError(int(i), e.what());
    }
    const PolygonResult& r = out.polygons[i];
    out.perspective[i] = perspective_quality(r.source, r.mapped, r.chart.polygon.normal);
  });
  out.optimize_seconds = std::chrono::duration<double>(clock::now() - t2).count();
  return out;
}

/// Final textures with holes filled by diffusion.
inline std::vector<Image> filled_textures(const PipelineOutput& out) {
  std::vector<Image> tex;
  for (const auto& r : out.polygons) {
    Image img = r.texture.rgb;
    diffuse_fill(img, r.texture.hole);
    tex.push_back(std::move(img));
  }
  return tex;
}

inline json polygon_report_json(const PolygonResult& r, const PerspectiveQuality& pq) {
  const PolygonReport& rep = r.report;
  json stages = json::array();
  for (const auto& s : rep.stages) {
    stages.push_back({{"resolution", s.resolution},
                      {"iterations", s.iterations},
                      {"converged", s.converged},
                      {"initial_loss", s.initial_loss},
                      {"min_loss", s.min_loss},
                      {"final_loss", s.final_loss},
                      {"render", s.render},
                      {"perspective", s.perspective},
                      {"parameter", s.parameter},
                      {"pixels_eliminated", s.pixels_eliminated},
                      {"seconds", s.seconds}});
  }
  json elim = json::array();
  for (const auto& e : rep.eliminated) {
    elim.push_back({{"photo", e.photo_id},
                    {"resolution", e.resolution},
                    {"iteration", e.iteration},
                    {"reason", e.reason},
                    {"zero_fraction", e.zero_fraction}});
  }
  return {{"polygon", rep.polygon},
          {"width", r.chart.width},
          {"height", r.chart.height},
          {"initial_photos", rep.initial_photos},
          {"final_photos", rep.final_photos},
          {"stages", stages},
          {"eliminated", elim},
          {"update_order", rep.ordering},
          {"inside_texels", rep.inside_texels},
          {"hole_texels", rep.hole_texels},
          {"hole_fraction", rep.hole_fraction},
          {"warning", rep.warning},
          {"q_front", pq.q_front},
          {"q_vc", pq.q_vc},
          {"source_map", rle_encode(r.source)}};
}

inline json run_manifest(const SceneConfig& cfg, const PipelineOutput& out) {
  json filter = json::array();
  for (const auto& e : out.filter.entries) {
    filter.push_back({{"photo", e.photo_id},
                      {"name", e.name},
                      {"kept", e.kept},
                      {"reason", e.reason},
                      {"blur_score", e.blur_score},
                      {"min_incline_deg", e.min_incline_deg}});
  }
  json polys = json::array();
  for (std::size_t i = 0; i < out.polygons.size(); ++i) polys.push_back(polygon_report_json(out.polygons[i], out.perspective[i]));
  json config = tunables_to_json(cfg);
  config["proxy"] = cfg.proxy_path.string();
  config["cameras"] = cfg.camera_file.string();
  config["photos"] = cfg.photo_dir.string();
  config["out"] = cfg.out_dir.string();
  return {{"tool", "difftex"},
          {"version", kVersion},
          {"seed", cfg.seed},
          {"threads", out.threads},
          {"config", config},
          {"photo_filter", filter},
          {"timings",
           {{"preprocess_seconds", out.preprocess_seconds},
            {"visibility_seconds", out.visibility_seconds},
            {"optimize_seconds", out.optimize_seconds}}},
          {"polygons", polys},
          {"perspective_note", MetricsReport{}.note}};
}

/// Writes textures, model.obj/.mtl and report.json into cfg.out_dir.
inline void write_outputs(const SceneConfig& cfg, const ProxyModel& model, const PipelineOutput& out) {
  std::vector<UVChart> charts;
  for (const auto& r : out.polygons) charts.push_back(r.chart);
  write_textured_model(cfg.out_dir, model, charts, filled_textures(out));
  write_json(cfg.out_dir / "report.json", run_manifest(cfg, out));
}

}  // namespace difftex
