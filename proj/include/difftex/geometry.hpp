#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace difftex {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Error raised for malformed inputs (files, configs, geometry).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Pinhole camera. `rotation` maps world to camera coordinates, so a world
/// point X lands at Xc = R X + t and projects to (fx x/z + cx, fy y/z + cy).
/// Pixel (0,0) is the center of the top-left pixel; z > 0 is in front.
struct Camera {
  int width = 0;
  int height = 0;
  double fx = 0, fy = 0, cx = 0, cy = 0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Mat3 intrinsics() const {
    Mat3 k;
    k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
    return k;
  }

  Vec3 center() const { return -rotation.transpose() * translation; }

  /// Optical axis (camera +z) in world coordinates.
  Vec3 forward() const { return rotation.row(2).transpose(); }

  Vec3 to_camera(const Vec3& world) const { return rotation * world + translation; }

  /// Projects a world point; returns nullopt when it lies on or behind the
  /// camera plane.
  std::optional<Vec2> project(const Vec3& world) const {
    const Vec3 xc = to_camera(world);
    if (!(xc.z() > 0)) return std::nullopt;
    return Vec2(fx * xc.x() / xc.z() + cx, fy * xc.y() / xc.z() + cy);
  }

  bool contains_pixel(const Vec2& p) const {
    return p.x() >= -0.5 && p.y() >= -0.5 && p.x() <= width - 0.5 && p.y() <= height - 0.5;
  }

  /// Builds a camera at `eye` looking at `target`; image y points along
  /// -`up` projected into the image plane.
  static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, int width,
                        int height, double focal) {
    const Vec3 z = (target - eye).normalized();
    Vec3 x = z.cross(up);
    if (x.norm() < 1e-12) x = z.unitOrthogonal();
    x.normalize();
    const Vec3 y = z.cross(x);
    Camera cam;
    cam.width = width;
    cam.height = height;
    cam.fx = focal;
    cam.fy = focal;
    cam.cx = 0.5 * (width - 1);
    cam.cy = 0.5 * (height - 1);
    cam.rotation.row(0) = x.transpose();
    cam.rotation.row(1) = y.transpose();
    cam.rotation.row(2) = z.transpose();
    cam.translation = -cam.rotation * eye;
    return cam;
  }
};

/// Throws InputError when the camera violates its invariants.
inline void validate_camera(const Camera& cam, const std::string& label = "camera") {
  if (cam.width <= 0 || cam.height <= 0) {
    throw InputError(label + ": image size must be positive");
  }
  if (!(cam.fx > 0) || !(cam.fy > 0)) {
    throw InputError(label + ": focal lengths must be positive");
  }
  const Mat3 gram = cam.rotation.transpose() * cam.rotation - Mat3::Identity();
  if (!(gram.cwiseAbs().maxCoeff() < 1e-9) || !(cam.rotation.determinant() > 0)) {
    throw InputError(label + ": non-orthonormal rotation");
  }
  if (!cam.translation.allFinite()) {
    throw InputError(label + ": non-finite translation");
  }
}

namespace detail {

inline double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

// Even-odd rule; points on an edge may land on either side.
inline bool point_in_polygon(const std::vector<Vec2>& poly, const Vec2& p) {
  bool inside = false;
  const std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[j];
    if ((a.y() > p.y()) != (b.y() > p.y())) {
      const double x = a.x() + (p.y() - a.y()) * (b.x() - a.x()) / (b.y() - a.y());
      if (p.x() < x) inside = !inside;
    }
  }
  return inside;
}

}  // namespace detail

/// A planar proxy polygon with an orthonormal, right-handed plane frame
/// (e1 x e2 = normal). Vertex order is counter-clockwise seen from the
/// side the normal points to.
struct ProxyPolygon {
  std::vector<Vec3> vertices;
  Vec3 normal = Vec3::UnitZ();
  Vec3 origin = Vec3::Zero();
  Vec3 e1 = Vec3::UnitX();
  Vec3 e2 = Vec3::UnitY();

  Vec2 to_plane(const Vec3& p) const {
    const Vec3 d = p - origin;
    return {d.dot(e1), d.dot(e2)};
  }

  Vec3 from_plane(const Vec2& q) const { return origin + q.x() * e1 + q.y() * e2; }

  /// Signed plane offset h with normal . X = h on the plane.
  double plane_offset() const { return normal.dot(origin); }

  std::vector<Vec2> plane_vertices() const {
    std::vector<Vec2> out;
    out.reserve(vertices.size());
    for (const auto& v : vertices) out.push_back(to_plane(v));
    return out;
  }

  double area() const {
    const auto pv = plane_vertices();
    double a = 0;
    for (std::size_t i = 0; i < pv.size(); ++i) a += detail::cross2(pv[i], pv[(i + 1) % pv.size()]);
    return 0.5 * a;
  }

  /// Area centroid in plane coordinates.
  Vec2 centroid_plane() const {
    const auto pv = plane_vertices();
    double a = 0;
    Vec2 c = Vec2::Zero();
    for (std::size_t i = 0; i < pv.size(); ++i) {
      const Vec2& p = pv[i];
      const Vec2& q = pv[(i + 1) % pv.size()];
      const double w = detail::cross2(p, q);
      a += w;
      c += (p + q) * w;
    }
    if (std::abs(a) < 1e-300) return pv.front();
    return c / (3.0 * a);
  }

  Vec3 centroid() const { return from_plane(centroid_plane()); }

  double diameter() const {
    double d = 0;
    for (std::size_t i = 0; i < vertices.size(); ++i)
      for (std::size_t j = i + 1; j < vertices.size(); ++j)
        d = std::max(d, (vertices[i] - vertices[j]).norm());
    return d;
  }

  bool contains_plane_point(const Vec2& q) const {
    return detail::point_in_polygon(plane_vertices(), q);
  }

  /// Builds the plane frame from an ordered vertex loop. The normal comes
  /// from Newell's method; e1 is the projection of the world axis most
  /// orthogonal to the normal (lowest axis index wins ties).
  static ProxyPolygon from_vertices(std::vector<Vec3> verts) {
    if (verts.size() < 3) throw InputError("polygon needs at least 3 vertices");
    Vec3 n = Vec3::Zero();
    for (std::size_t i = 0; i < verts.size(); ++i) {
      const Vec3& a = verts[i];
      const Vec3& b = verts[(i + 1) % verts.size()];
      n.x() += (a.y() - b.y()) * (a.z() + b.z());
      n.y() += (a.z() - b.z()) * (a.x() + b.x());
      n.z() += (a.x() - b.x()) * (a.y() + b.y());
    }
    const double len = n.norm();
    double scale = 0;
    for (const auto& v : verts) scale = std::max(scale, v.cwiseAbs().maxCoeff());
    if (!(len > 1e-14 * std::max(1.0, scale * scale))) {
      throw InputError("degenerate polygon (zero area)");
    }
    ProxyPolygon poly;
    poly.normal = n / len;
    poly.origin = verts.front();

    int axis = 0;
    double best = std::abs(poly.normal[0]);
    for (int a = 1; a < 3; ++a) {
      if (std::abs(poly.normal[a]) < best - 1e-15) {
        best = std::abs(poly.normal[a]);
        axis = a;
      }
    }
    Vec3 u = Vec3::Unit(axis);
    u -= poly.normal * poly.normal.dot(u);
    poly.e1 = u.normalized();
    poly.e2 = poly.normal.cross(poly.e1).normalized();
    poly.vertices = std::move(verts);
    return poly;
  }

  /// Largest vertex distance from the plane.
  double planarity_error() const {
    double e = 0;
    for (const auto& v : vertices) e = std::max(e, std::abs((v - origin).dot(normal)));
    return e;
  }
};

/// Intersects the segment from `from` toward `to` with the polygon. Returns
/// the segment parameter s in (0, 1) of the hit when it lies inside the
/// polygon.
inline std::optional<double> segment_hit(const ProxyPolygon& poly, const Vec3& from,
                                         const Vec3& to) {
  const Vec3 d = to - from;
  const double denom = poly.normal.dot(d);
  if (std::abs(denom) < 1e-300) return std::nullopt;
  const double s = (poly.plane_offset() - poly.normal.dot(from)) / denom;
  if (!(s > 0) || !(s < 1)) return std::nullopt;
  const Vec3 hit = from + s * d;
  if (!poly.contains_plane_point(poly.to_plane(hit))) return std::nullopt;
  return s;
}

}  // namespace difftex
