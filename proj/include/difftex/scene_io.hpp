#pragma once

// Scene files: OBJ proxies, JSON camera lists, PNG photos, and the
// textured-model export.

#include "difftex/camera_geometry.hpp"
#include "difftex/field_types.hpp"
#include "difftex/png_io.hpp"
#include "difftex/scene.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace difftex {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct ObjMesh {
  std::vector<Vec3> vertices;
  std::vector<Vec2> uvs;
  std::vector<std::vector<int>> faces;     // zero-based vertex indices
  std::vector<std::vector<int>> face_uvs;  // zero-based uv indices, empty when absent
  std::vector<std::string> face_material;
  std::string mtllib;
};

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline ObjMesh read_obj(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open mesh file " + path.string());
  ObjMesh mesh;
  std::string line;
  std::string material;
  int lineno = 0;
  auto resolve = [&](long idx, std::size_t count) -> int {
    if (idx < 0) idx += long(count) + 1;
    if (idx < 1 || std::size_t(idx) > count) {
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": index out of range");
    }
    return int(idx - 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Vec3 v;
      if (!(ls >> v.x() >> v.y() >> v.z())) throw InputError(path.string() + ":" + std::to_string(lineno) + ": bad vertex");
      mesh.vertices.push_back(v);
    } else if (tag == "vt") {
      Vec2 t;
      if (!(ls >> t.x() >> t.y())) throw InputError(path.string() + ":" + std::to_string(lineno) + ": bad uv");
      mesh.uvs.push_back(t);
    } else if (tag == "f") {
      std::vector<int> f;
      std::vector<int> ft;
      std::string tok;
      while (ls >> tok) {
        const auto slash = tok.find('/');
        f.push_back(resolve(std::stol(tok.substr(0, slash)), mesh.vertices.size()));
        if (slash != std::string::npos) {
          const auto rest = tok.substr(slash + 1);
          const auto s2 = rest.find('/');
          const auto vt = rest.substr(0, s2);
          if (!vt.empty()) ft.push_back(resolve(std::stol(vt), mesh.uvs.size()));
        }
      }
      if (f.size() < 3) throw InputError(path.string() + ":" + std::to_string(lineno) + ": face with fewer than 3 vertices");
      if (!ft.empty() && ft.size() != f.size()) ft.clear();
      mesh.faces.push_back(std::move(f));
      mesh.face_uvs.push_back(std::move(ft));
      mesh.face_material.push_back(material);
    } else if (tag == "usemtl") {
      ls >> material;
    } else if (tag == "mtllib") {
      ls >> mesh.mtllib;
    }
  }
  return mesh;
}

inline ProxyModel load_proxy(const fs::path& path) {
  ObjMesh mesh = read_obj(path);
  try {
    return ProxyModel::from_faces(std::move(mesh.vertices), std::move(mesh.faces));
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

inline void write_proxy(const fs::path& path, const ProxyModel& model) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  for (const auto& v : model.vertices)
    out << "v " << fmt_double(v.x()) << ' ' << fmt_double(v.y()) << ' ' << fmt_double(v.z()) << '\n';
  for (const auto& f : model.faces) {
    out << 'f';
    for (int i : f) out << ' ' << i + 1;
    out << '\n';
  }
}

// ---- cameras ----

struct CameraEntry {
  std::string image;
  Camera camera;
};

inline json camera_to_json(const std::string& image, const Camera& c) {
  json j;
  j["image"] = image;
  j["width"] = c.width;
  j["height"] = c.height;
  j["fx"] = c.fx;
  j["fy"] = c.fy;
  j["cx"] = c.cx;
  j["cy"] = c.cy;
  json rot = json::array();
  for (int r = 0; r < 3; ++r) rot.push_back({c.rotation(r, 0), c.rotation(r, 1), c.rotation(r, 2)});
  j["rotation"] = rot;
  j["translation"] = {c.translation.x(), c.translation.y(), c.translation.z()};
  return j;
}

inline CameraEntry camera_from_json(const json& j, const std::string& label) {
  CameraEntry e;
  try {
    e.image = j.at("image").get<std::string>();
    Camera& c = e.camera;
    c.width = j.at("width").get<int>();
    c.height = j.at("height").get<int>();
    c.fx = j.at("fx").get<double>();
    c.fy = j.at("fy").get<double>();
    c.cx = j.at("cx").get<double>();
    c.cy = j.at("cy").get<double>();
    const json& rot = j.at("rotation");
    const json& tr = j.at("translation");
    if (rot.size() != 3 || tr.size() != 3) throw InputError(label + ": rotation must be 3x3 and translation 3");
    for (int r = 0; r < 3; ++r) {
      if (rot[std::size_t(r)].size() != 3) throw InputError(label + ": rotation must be 3x3");
      for (int k = 0; k < 3; ++k) c.rotation(r, k) = rot[std::size_t(r)][std::size_t(k)].get<double>();
      c.translation[r] = tr[std::size_t(r)].get<double>();
    }
  } catch (const json::exception& ex) {
    throw InputError(label + ": malformed camera entry (" + ex.what() + ")");
  }
  validate_camera(e.camera, label + " (" + e.image + ")");
  return e;
}

inline std::vector<CameraEntry> read_cameras(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open camera file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& ex) {
    throw InputError(path.string() + ": invalid JSON (" + ex.what() + ")");
  }
  if (!doc.contains("cameras") || !doc["cameras"].is_array()) {
    throw InputError(path.string() + ": expected an object with a \"cameras\" array");
  }
  std::vector<CameraEntry> out;
  for (std::size_t i = 0; i < doc["cameras"].size(); ++i)
    out.push_back(camera_from_json(doc["cameras"][i], path.filename().string() + " entry " + std::to_string(i)));
  return out;
}

inline void write_cameras(const fs::path& path, const std::vector<CameraEntry>& cams) {
  json doc;
  doc["cameras"] = json::array();
  for (const auto& c : cams) doc["cameras"].push_back(camera_to_json(c.image, c.camera));
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

// ---- scene config ----

inline void apply_tunables(SceneConfig& cfg, const json& j) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("target_resolution", cfg.target_resolution);
  get("base_resolution", cfg.base_resolution);
  get("alpha", cfg.alpha);
  get("beta", cfg.beta);
  get("omega", cfg.omega);
  get("lr", cfg.lr);
  get("beta1", cfg.beta1);
  get("beta2", cfg.beta2);
  get("tau", cfg.tau);
  get("tau_w", cfg.tau_w);
  get("lambda_s", cfg.lambda_s);
  get("blur_threshold", cfg.blur_threshold);
  get("incline_limit_deg", cfg.incline_limit_deg);
  get("histogram_matching", cfg.histogram_matching);
  get("max_iterations", cfg.max_iterations);
  get("elimination_interval", cfg.elimination_interval);
  get("seed", cfg.seed);
}

inline json tunables_to_json(const SceneConfig& cfg) {
  return {{"target_resolution", cfg.target_resolution},
          {"base_resolution", cfg.base_resolution},
          {"alpha", cfg.alpha},
          {"beta", cfg.beta},
          {"omega", cfg.omega},
          {"lr", cfg.lr},
          {"beta1", cfg.beta1},
          {"beta2", cfg.beta2},
          {"tau", cfg.tau},
          {"tau_w", cfg.tau_w},
          {"lambda_s", cfg.lambda_s},
          {"blur_threshold", cfg.blur_threshold},
          {"incline_limit_deg", cfg.incline_limit_deg},
          {"histogram_matching", cfg.histogram_matching},
          {"max_iterations", cfg.max_iterations},
          {"elimination_interval", cfg.elimination_interval},
          {"seed", cfg.seed}};
}

/// Reads a scene description. Relative paths resolve against the file's
/// directory.
inline SceneConfig load_scene_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open scene file " + path.string());
  json j;
  try {
    j = json::parse(in);
    SceneConfig cfg;
    const fs::path dir = path.parent_path();
    auto resolve = [&](const std::string& key) {
      const fs::path p = j.at(key).get<std::string>();
      return p.is_absolute() ? p : dir / p;
    };
    cfg.proxy_path = resolve("proxy");
    cfg.camera_file = resolve("cameras");
    cfg.photo_dir = resolve("photos");
    if (j.contains("out")) cfg.out_dir = resolve("out");
    apply_tunables(cfg, j);
    return cfg;
  } catch (const json::exception& ex) {
    throw InputError(path.string() + ": invalid scene file (" + ex.what() + ")");
  }
}

struct Scene {
  ProxyModel model;
  std::vector<Photo> photos;
};

/// Loads proxy, cameras and photos. Photo ids follow sorted file names.
inline Scene load_scene(const SceneConfig& cfg) {
  if (!fs::exists(cfg.proxy_path)) throw InputError("missing proxy mesh: " + cfg.proxy_path.string());
  if (!fs::exists(cfg.camera_file)) throw InputError("missing camera file: " + cfg.camera_file.string());
  if (!fs::is_directory(cfg.photo_dir)) throw InputError("missing photo directory: " + cfg.photo_dir.string());
  Scene scene;
  scene.model = load_proxy(cfg.proxy_path);
  auto cams = read_cameras(cfg.camera_file);
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(cfg.photo_dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return char(std::tolower(ch)); });
    if (ext == ".png") files.push_back(e.path().filename().string());
  }
  if (files.size() != cams.size()) {
    throw InputError("photo/camera count mismatch: " + std::to_string(files.size()) + " images in " +
                     cfg.photo_dir.string() + ", " + std::to_string(cams.size()) + " cameras");
  }
  std::sort(cams.begin(), cams.end(), [](const auto& a, const auto& b) { return a.image < b.image; });
  for (std::size_t i = 0; i < cams.size(); ++i) {
    if (i > 0 && cams[i].image == cams[i - 1].image) throw InputError("duplicate camera entry for " + cams[i].image);
    const fs::path p = cfg.photo_dir / cams[i].image;
    if (!fs::exists(p)) throw InputError("camera entry references missing photo " + p.string());
    Photo ph;
    ph.id = int(i);
    ph.name = cams[i].image;
    ph.camera = cams[i].camera;
    ph.rgb = read_png(p);
    if (ph.rgb.width != ph.camera.width || ph.rgb.height != ph.camera.height) {
      throw InputError(p.string() + ": image size does not match its camera");
    }
    scene.photos.push_back(std::move(ph));
  }
  return scene;
}

/// Writes proxy.obj, cameras.json, photos/ and scene.json into `dir`.
inline void write_scene(const fs::path& dir, const ProxyModel& model, const std::vector<Photo>& photos,
                        const SceneConfig* tunables = nullptr) {
  fs::create_directories(dir / "photos");
  write_proxy(dir / "proxy.obj", model);
  std::vector<CameraEntry> cams;
  for (const auto& p : photos) {
    cams.push_back({p.name, p.camera});
    write_png(dir / "photos" / p.name, p.rgb);
  }
  write_cameras(dir / "cameras.json", cams);
  json j = tunables ? tunables_to_json(*tunables) : json::object();
  j["proxy"] = "proxy.obj";
  j["cameras"] = "cameras.json";
  j["photos"] = "photos";
  std::ofstream out(dir / "scene.json");
  if (!out) throw InputError("cannot write " + (dir / "scene.json").string());
  out << j.dump(2) << '\n';
}

// ---- textured export ----

inline std::string texture_name(std::size_t polygon) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "poly_%03zu.png", polygon);
  return buf;
}

/// Run-length encoding of a row-major integer grid as [value, count, ...].
inline json rle_encode(const Grid<int>& g) {
  json runs = json::array();
  for (std::size_t i = 0; i < g.size();) {
    std::size_t j = i;
    while (j < g.size() && g[j] == g[i]) ++j;
    runs.push_back(g[i]);
    runs.push_back(j - i);
    i = j;
  }
  return {{"width", g.width}, {"height", g.height}, {"runs", runs}};
}

inline Grid<int> rle_decode(const json& j) {
  Grid<int> g(j.at("width").get<int>(), j.at("height").get<int>(), -1);
  const json& runs = j.at("runs");
  std::size_t pos = 0;
  for (std::size_t i = 0; i + 1 < runs.size(); i += 2) {
    const int v = runs[i].get<int>();
    const std::size_t n = runs[i + 1].get<std::size_t>();
    if (pos + n > g.size()) throw InputError("source map run exceeds grid");
    std::fill_n(g.data.begin() + std::ptrdiff_t(pos), n, v);
    pos += n;
  }
  return g;
}

/// Writes one PNG per polygon plus model.obj / model.mtl. Texture images
/// must already be hole-free.
inline void write_textured_model(const fs::path& dir, const ProxyModel& model, const std::vector<UVChart>& charts,
                                 const std::vector<Image>& textures) {
  if (charts.size() != model.polygons.size() || textures.size() != model.polygons.size()) {
    throw InputError("export: expected one chart and texture per polygon");
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::is_directory(dir)) throw InputError("export: cannot create output directory " + dir.string());
  for (std::size_t i = 0; i < charts.size(); ++i) {
    if (textures[i].width != charts[i].width || textures[i].height != charts[i].height) {
      throw InputError("export: polygon " + std::to_string(i) + " texture resolution does not match its chart");
    }
    write_png(dir / texture_name(i), textures[i]);
  }
  std::ofstream mtl(dir / "model.mtl");
  std::ofstream obj(dir / "model.obj");
  if (!mtl || !obj) throw InputError("export: cannot write model files in " + dir.string());
  for (std::size_t i = 0; i < charts.size(); ++i) {
    mtl << "newmtl poly_" << i << "\nKa 1 1 1\nKd 1 1 1\nKs 0 0 0\nillum 1\nmap_Kd " << texture_name(i) << "\n\n";
  }
  obj << "mtllib model.mtl\n";
  for (const auto& v : model.vertices)
    obj << "v " << fmt_double(v.x()) << ' ' << fmt_double(v.y()) << ' ' << fmt_double(v.z()) << '\n';
  std::size_t vt_base = 0;
  for (std::size_t i = 0; i < charts.size(); ++i) {
    const ProxyPolygon& poly = model.polygons[i];
    for (const auto& v : poly.vertices) {
      const Vec2 uv = charts[i].plane_to_uv(poly.to_plane(v));
      obj << "vt " << fmt_double(uv.x()) << ' ' << fmt_double(uv.y()) << '\n';
    }
    obj << "usemtl poly_" << i << "\nf";
    const auto& face = model.faces[i];
    for (std::size_t j = 0; j < face.size(); ++j) obj << ' ' << face[j] + 1 << '/' << vt_base + j + 1;
    obj << '\n';
    vt_base += face.size();
  }
}

inline void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace difftex
