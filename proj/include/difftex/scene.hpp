#pragma once

#include "difftex/geometry.hpp"
#include "difftex/image.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace difftex {

struct Photo {
  int id = 0;
  std::string name;  // file name inside the photo directory
  Camera camera;
  Image rgb;
};

/// Planar proxy: a shared vertex pool plus one polygon per face.
struct ProxyModel {
  std::vector<Vec3> vertices;
  std::vector<std::vector<int>> faces;  // zero-based indices into `vertices`
  std::vector<ProxyPolygon> polygons;

  /// Bounding-box diagonal of the vertex pool.
  double diameter() const {
    if (vertices.empty()) return 0;
    Vec3 lo = vertices.front();
    Vec3 hi = vertices.front();
    for (const auto& v : vertices) {
      lo = lo.cwiseMin(v);
      hi = hi.cwiseMax(v);
    }
    return (hi - lo).norm();
  }

  /// Validates faces and builds their plane frames. Faces must be planar
  /// within 1e-4 of their diameter; vertices are snapped onto the plane.
  static ProxyModel from_faces(std::vector<Vec3> vertices, std::vector<std::vector<int>> faces) {
    ProxyModel m;
    m.vertices = std::move(vertices);
    m.faces = std::move(faces);
    if (m.faces.empty()) throw InputError("proxy model has no faces");
    for (std::size_t f = 0; f < m.faces.size(); ++f) {
      const auto& face = m.faces[f];
      const std::string label = "face " + std::to_string(f);
      if (face.size() < 3) throw InputError(label + ": fewer than 3 vertices");
      std::vector<Vec3> loop;
      for (int idx : face) {
        if (idx < 0 || std::size_t(idx) >= m.vertices.size()) {
          throw InputError(label + ": vertex index out of range");
        }
        loop.push_back(m.vertices[std::size_t(idx)]);
      }
      ProxyPolygon poly;
      try {
        poly = ProxyPolygon::from_vertices(loop);
      } catch (const InputError& e) {
        throw InputError(label + ": " + e.what());
      }
      const double diam = poly.diameter();
      if (!(poly.planarity_error() < 1e-4 * diam)) {
        throw InputError(label + ": non-planar face (deviation " +
                         std::to_string(poly.planarity_error()) + ")");
      }
      for (auto& v : poly.vertices) v -= poly.normal * (v - poly.origin).dot(poly.normal);
      m.polygons.push_back(std::move(poly));
    }
    return m;
  }
};

/// Run configuration. Defaults follow the published constants.
struct SceneConfig {
  std::filesystem::path proxy_path;
  std::filesystem::path camera_file;
  std::filesystem::path photo_dir;
  std::filesystem::path out_dir;
  int target_resolution = 2048;
  int base_resolution = 256;
  double alpha = 1.0;   // render loss
  double beta = 2.0;    // perspective loss
  double omega = 10.0;  // parameter loss
  double lr = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double tau = 1e-3;
  double tau_w = 0.95;
  double lambda_s = 0.5;
  double blur_threshold = 50.0;
  double incline_limit_deg = 85.0;
  bool histogram_matching = true;
  int max_iterations = 500;
  int elimination_interval = 25;
  std::uint64_t seed = 0;

  void validate() const {
    bool ok_res = false;
    for (int r = 256; r <= 2048; r *= 2) ok_res = ok_res || r == target_resolution;
    if (!ok_res) throw InputError("target_resolution must be one of 256, 512, 1024, 2048");
    if (base_resolution < 16 || target_resolution % base_resolution != 0 ||
        ((target_resolution / base_resolution) & (target_resolution / base_resolution - 1)) != 0) {
      throw InputError("base_resolution must divide target_resolution by a power of two");
    }
    for (double c : {alpha, beta, omega, lr, lambda_s, blur_threshold, incline_limit_deg}) {
      if (!(c >= 0)) throw InputError("coefficients must be non-negative");
    }
    if (!(tau > 0 && tau < 1)) throw InputError("tau must lie in (0,1)");
    if (!(tau_w > 0 && tau_w <= 1)) throw InputError("tau_w must lie in (0,1]");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) {
      throw InputError("Adam decay rates must lie in [0,1)");
    }
    if (max_iterations < 1) throw InputError("max_iterations must be positive");
  }
};

}  // namespace difftex
