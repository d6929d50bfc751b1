// difftex command-line tool: texture, synth, eval.

#include "difftex/difftex.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

namespace dt = difftex;
namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kInternal = 1;
constexpr int kInvalid = 2;

struct TextureArgs {
  fs::path scene;
  fs::path out;
  int max_res = 0;
  std::optional<double> alpha, beta, omega, lr, beta1, beta2, tau, tau_w, lambda_s, blur, incline;
  std::optional<bool> histogram;
  std::optional<int> base_res, elimination_interval;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  int max_iterations = 0;
};

template <class T>
void apply(const std::optional<T>& flag, T& field) {
  if (flag) field = *flag;
}

int run_texture(const TextureArgs& a) {
  dt::SceneConfig cfg = dt::load_scene_config(a.scene);
  cfg.out_dir = a.out;
  if (a.max_res > 0) cfg.target_resolution = a.max_res;
  cfg.base_resolution = std::min(cfg.base_resolution, cfg.target_resolution);
  apply(a.base_res, cfg.base_resolution);
  apply(a.alpha, cfg.alpha);
  apply(a.beta, cfg.beta);
  apply(a.omega, cfg.omega);
  apply(a.lr, cfg.lr);
  apply(a.beta1, cfg.beta1);
  apply(a.beta2, cfg.beta2);
  apply(a.tau, cfg.tau);
  apply(a.tau_w, cfg.tau_w);
  apply(a.lambda_s, cfg.lambda_s);
  apply(a.blur, cfg.blur_threshold);
  apply(a.incline, cfg.incline_limit_deg);
  apply(a.histogram, cfg.histogram_matching);
  apply(a.elimination_interval, cfg.elimination_interval);
  apply(a.seed, cfg.seed);
  if (a.max_iterations > 0) cfg.max_iterations = a.max_iterations;
  cfg.validate();
  const dt::Scene scene = dt::load_scene(cfg);
  const int threads = dt::resolve_threads(a.threads);
  std::fprintf(stderr, "texture: %zu polygons, %zu photos, target %d, %d threads\n", scene.model.polygons.size(),
               scene.photos.size(), cfg.target_resolution, threads);
  const dt::PipelineOutput out = dt::texture_scene(scene.model, scene.photos, cfg, threads);
  dt::write_outputs(cfg, scene.model, out);
  for (const auto& r : out.polygons) {
    if (!r.report.warning.empty()) std::fprintf(stderr, "warning: polygon %d: %s\n", r.report.polygon, r.report.warning.c_str());
  }
  std::fprintf(stderr, "texture: wrote %s\n", cfg.out_dir.string().c_str());
  return kOk;
}

dt::SynthSpec resolve_spec(const std::string& arg) {
  if (auto s = dt::standard_spec(arg)) return *s;
  const fs::path p(arg);
  if (!fs::exists(p)) {
    std::string names;
    for (const auto& n : dt::standard_spec_names()) names += " " + n;
    throw dt::InputError("unknown spec '" + arg + "' (not a file; built-in specs:" + names + ")");
  }
  std::ifstream in(p);
  dt::json j;
  try {
    j = dt::json::parse(in);
  } catch (const dt::json::exception& e) {
    throw dt::InputError(p.string() + ": invalid JSON (" + e.what() + ")");
  }
  if (j.contains("extends")) {
    // A file may start from a built-in spec and override fields.
    auto base = dt::standard_spec(j.at("extends").get<std::string>());
    if (!base) throw dt::InputError(p.string() + ": unknown base spec");
    dt::json merged = dt::synth_spec_to_json(*base);
    merged.merge_patch(j);
    return dt::synth_spec_from_json(merged);
  }
  return dt::synth_spec_from_json(j);
}

int run_synth(const std::string& spec_arg, const fs::path& out) {
  const dt::SynthSpec spec = resolve_spec(spec_arg);
  const dt::SynthScene sc = dt::generate_synthetic_scene(spec);
  dt::write_synthetic_scene(out, sc);
  std::fprintf(stderr, "synth: %s -> %s (%zu polygons, %zu photos)\n", spec.name.c_str(), out.string().c_str(),
               sc.model.polygons.size(), sc.photos.size());
  return kOk;
}

int run_eval(const fs::path& recon, fs::path gt) {
  if (!fs::exists(gt / "gt.json") && fs::exists(gt / "gt" / "gt.json")) gt /= "gt";
  if (!fs::exists(gt / "gt.json")) throw dt::InputError("no gt.json in " + gt.string());
  if (!fs::exists(recon / "report.json")) throw dt::InputError("no report.json in " + recon.string());
  std::ifstream gin(gt / "gt.json"), rin(recon / "report.json");
  const dt::json gmeta = dt::json::parse(gin);
  const dt::json report = dt::json::parse(rin);
  const auto& polys = gmeta.at("polygons");
  if (polys.size() != report.at("polygons").size()) throw dt::InputError("eval: polygon count mismatch");
  std::vector<dt::Image> rec, ref;
  std::vector<dt::Mask> exclude;
  for (std::size_t i = 0; i < polys.size(); ++i) {
    ref.push_back(dt::read_png(gt / polys[i].at("file").get<std::string>()));
    rec.push_back(dt::read_png(recon / dt::texture_name(i)));
    const dt::Grid<int> src = dt::rle_decode(report["polygons"][i].at("source_map"));
    dt::Mask ex(src.width, src.height, 0);
    for (std::size_t t = 0; t < src.size(); ++t) ex[t] = src[t] < 0;
    exclude.push_back(std::move(ex));
  }
  dt::MetricsReport m = dt::evaluate_against_gt(rec, ref, exclude);
  dt::json out = {{"error_p90", m.error_p90}, {"error_p95", m.error_p95}, {"ssim", m.ssim}, {"note", m.note}};
  dt::json per = dt::json::array();
  std::ofstream csv(recon / "metrics.csv");
  csv << "polygon,error_p90,error_p95,ssim,q_front,q_vc,hole_fraction\n";
  for (std::size_t i = 0; i < m.polygons.size(); ++i) {
    auto& pm = m.polygons[i];
    pm.q_front = report["polygons"][i].value("q_front", 0.0);
    pm.q_vc = report["polygons"][i].value("q_vc", 0.0);
    pm.hole_fraction = report["polygons"][i].value("hole_fraction", pm.hole_fraction);
    per.push_back({{"polygon", pm.polygon},
                   {"error_p90", pm.error_p90},
                   {"error_p95", pm.error_p95},
                   {"ssim", pm.ssim},
                   {"q_front", pm.q_front},
                   {"q_vc", pm.q_vc},
                   {"hole_fraction", pm.hole_fraction}});
    csv << pm.polygon << ',' << pm.error_p90 << ',' << pm.error_p95 << ',' << pm.ssim << ',' << pm.q_front << ','
        << pm.q_vc << ',' << pm.hole_fraction << '\n';
  }
  out["polygons"] = per;
  dt::write_json(recon / "metrics.json", out);
  std::cout << out.dump(2) << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"difftex: per-polygon texture reconstruction by blending-weight optimization"};
  app.set_version_flag("--version", std::string(dt::kVersion));
  app.require_subcommand(1);

  TextureArgs ta;
  auto* tex = app.add_subcommand("texture", "Reconstruct textures for a scene");
  tex->add_option("--scene", ta.scene, "Scene JSON (proxy, cameras, photos)")->required();
  tex->add_option("--out", ta.out, "Output directory")->required();
  tex->add_option("--max-res", ta.max_res, "Target resolution (256, 512, 1024 or 2048)");
  tex->add_option("--alpha", ta.alpha, "Render loss weight");
  tex->add_option("--beta", ta.beta, "Perspective loss weight");
  tex->add_option("--omega", ta.omega, "Parameter loss weight");
  tex->add_option("--base-res", ta.base_res, "First-stage resolution (default 256)");
  tex->add_option("--lr", ta.lr, "Adam step size (default 0.005)");
  tex->add_option("--beta1", ta.beta1, "Adam first-moment decay (default 0.9)");
  tex->add_option("--beta2", ta.beta2, "Adam second-moment decay (default 0.99)");
  tex->add_option("--tau", ta.tau, "Activation threshold (default 1e-3)");
  tex->add_option("--tau-w", ta.tau_w, "Photo elimination fraction (default 0.95)");
  tex->add_option("--lambda-s", ta.lambda_s, "Smoothness constant of the parameter loss (default 0.5)");
  tex->add_option("--blur-threshold", ta.blur, "Minimum Laplacian variance of an input photo (default 50)");
  tex->add_option("--incline-limit", ta.incline, "Maximum viewing angle in degrees (default 85)");
  tex->add_option("--histogram-matching", ta.histogram, "Match photo brightness histograms (default true)");
  tex->add_option("--elimination-interval", ta.elimination_interval, "Iterations between elimination passes (default 25)");
  tex->add_option("--seed", ta.seed, "Seed recorded in the manifest");
  tex->add_option("--threads", ta.threads, "Worker threads (default: DIFFTEX_THREADS or all cores)");
  tex->add_option("--max-iterations", ta.max_iterations, "Iteration cap per stage");

  std::string spec;
  fs::path synth_out;
  auto* syn = app.add_subcommand("synth", "Generate a synthetic scene with ground truth");
  syn->add_option("--spec", spec, "Built-in spec name or spec JSON file")->required();
  syn->add_option("--out", synth_out, "Output directory")->required();

  fs::path recon, gt;
  auto* ev = app.add_subcommand("eval", "Compare reconstructed textures with ground truth");
  ev->add_option("--recon", recon, "Output directory of a texture run")->required();
  ev->add_option("--gt", gt, "Synthetic scene directory (or its gt/ folder)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kInvalid;
  }

  try {
    if (*tex) return run_texture(ta);
    if (*syn) return run_synth(spec, synth_out);
    if (*ev) return run_eval(recon, gt);
  } catch (const dt::InputError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kInvalid;
  } catch (const dt::json::exception& e) {
    std::fprintf(stderr, "error: malformed JSON: %s\n", e.what());
    return kInvalid;
  } catch (const dt::PolygonError& e) {
    std::fprintf(stderr, "error: %s (check the photos covering this polygon)\n", e.what());
    return kInternal;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: internal: %s\n", e.what());
    return kInternal;
  }
  return kInternal;
}
