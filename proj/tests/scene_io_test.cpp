#include "test_util.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <functional>

using namespace difftex;
using namespace difftex::testing;
namespace fs = std::filesystem;

namespace {

std::vector<Photo> two_photos() {
  std::mt19937_64 rng(4);
  std::vector<Photo> photos(2);
  photos[0].camera = camera_toward({0.5, 0.2, 4}, 40, 30);
  photos[1].camera = camera_toward({-0.7, 0.4, 4}, 40, 30);
  for (std::size_t i = 0; i < 2; ++i) {
    photos[i].id = int(i);
    photos[i].name = "view" + std::to_string(i) + ".png";
    photos[i].rgb = quantize8(random_image(40, 30, rng));
  }
  return photos;
}

SceneConfig config_for(const fs::path& dir) { return load_scene_config(dir / "scene.json"); }

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const InputError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(SceneIo, MinimalScene) {
  const fs::path dir = temp_dir("minimal");
  write_scene(dir, quad_model(), two_photos());
  const Scene s = load_scene(config_for(dir));
  EXPECT_EQ(s.model.polygons.size(), 1u);
  ASSERT_EQ(s.photos.size(), 2u);
  EXPECT_EQ(s.photos[0].name, "view0.png");
  EXPECT_EQ(s.photos[1].id, 1);
}

TEST(SceneIo, IdsFollowSortedNames) {
  const fs::path dir = temp_dir("sorted");
  auto photos = two_photos();
  photos[0].name = "b.png";
  photos[1].name = "a.png";
  write_scene(dir, quad_model(), photos);
  const Scene s = load_scene(config_for(dir));
  EXPECT_EQ(s.photos[0].name, "a.png");
  EXPECT_EQ(s.photos[0].rgb, photos[1].rgb);
  EXPECT_EQ(s.photos[1].camera.translation, photos[0].camera.translation);
}

TEST(SceneIo, ScaledRotationRejected) {
  const fs::path dir = temp_dir("badrot");
  auto photos = two_photos();
  write_scene(dir, quad_model(), photos);
  std::vector<CameraEntry> cams;
  for (const auto& p : photos) cams.push_back({p.name, p.camera});
  cams[1].camera.rotation = 2.0 * Mat3::Identity();
  write_cameras(dir / "cameras.json", cams);
  EXPECT_NE(error_of([&] { load_scene(config_for(dir)); }).find("non-orthonormal rotation"), std::string::npos);
}

TEST(SceneIo, NonPlanarFaceNamed) {
  const fs::path dir = temp_dir("nonplanar");
  write_scene(dir, quad_model(), two_photos());
  {
    std::ofstream obj(dir / "proxy.obj");
    obj << "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nv 0 0 1\nv 1 0 1\nv 1 1 1.3\nv 0 1 1\n"
           "f 1 2 3 4\nf 5 6 7 8\n";
  }
  const std::string msg = error_of([&] { load_scene(config_for(dir)); });
  EXPECT_NE(msg.find("face 1"), std::string::npos) << msg;
  EXPECT_NE(msg.find("non-planar"), std::string::npos) << msg;
}

TEST(SceneIo, MissingPieces) {
  const fs::path dir = temp_dir("missing");
  write_scene(dir, quad_model(), two_photos());
  fs::remove(dir / "photos" / "view1.png");
  EXPECT_NE(error_of([&] { load_scene(config_for(dir)); }).find("count mismatch"), std::string::npos);
  fs::remove_all(dir / "photos");
  const std::string msg = error_of([&] { load_scene(config_for(dir)); });
  EXPECT_NE(msg.find((dir / "photos").string()), std::string::npos) << msg;
  EXPECT_THROW(load_scene_config(dir / "nope.json"), InputError);
}

TEST(SceneIo, MalformedCameraEntry) {
  const fs::path dir = temp_dir("malformed");
  write_scene(dir, quad_model(), two_photos());
  {
    std::ofstream c(dir / "cameras.json");
    c << R"({"cameras": [{"image": "view0.png", "width": 40}]})";
  }
  EXPECT_NE(error_of([&] { read_cameras(dir / "cameras.json"); }).find("malformed camera entry"), std::string::npos);
}

TEST(SceneIo, SynthBoxRoundTripsBitExactly) {
  const SynthScene sc = generate_synthetic_scene(*standard_spec("box24"));
  const fs::path dir = temp_dir("box_roundtrip");
  write_scene(dir, sc.model, sc.photos);
  const Scene s = load_scene(config_for(dir));
  EXPECT_EQ(s.model.vertices, sc.model.vertices);
  EXPECT_EQ(s.model.faces, sc.model.faces);
  ASSERT_EQ(s.model.polygons.size(), 6u);
  ASSERT_EQ(s.photos.size(), sc.photos.size());
  for (std::size_t i = 0; i < s.photos.size(); ++i) {
    const Camera& a = s.photos[i].camera;
    const Camera& b = sc.photos[i].camera;
    EXPECT_EQ(s.photos[i].name, sc.photos[i].name);
    EXPECT_EQ(s.photos[i].id, sc.photos[i].id);
    EXPECT_EQ(a.rotation, b.rotation);
    EXPECT_EQ(a.translation, b.translation);
    EXPECT_EQ(a.fx, b.fx);
    EXPECT_EQ(a.fy, b.fy);
    EXPECT_EQ(a.cx, b.cx);
    EXPECT_EQ(a.cy, b.cy);
    EXPECT_EQ(a.width, b.width);
    EXPECT_EQ(a.height, b.height);
    EXPECT_EQ(s.photos[i].rgb, sc.photos[i].rgb);
  }
}

TEST(SceneIo, TunablesRoundTrip) {
  const fs::path dir = temp_dir("tunables");
  SceneConfig cfg;
  cfg.target_resolution = 512;
  cfg.omega = 3.5;
  cfg.histogram_matching = false;
  cfg.seed = 99;
  write_scene(dir, quad_model(), two_photos(), &cfg);
  const SceneConfig back = config_for(dir);
  EXPECT_EQ(back.target_resolution, 512);
  EXPECT_EQ(back.omega, 3.5);
  EXPECT_FALSE(back.histogram_matching);
  EXPECT_EQ(back.seed, 99u);
}

TEST(Export, UniformGrayTexture) {
  const ProxyModel m = quad_model();
  const UVChart chart = build_chart(m.polygons[0], 256);
  const fs::path dir = temp_dir("gray");
  write_textured_model(dir, m, {chart}, {Image(chart.width, chart.height, Vec3::Constant(0.5))});
  const Image back = read_png(dir / texture_name(0));
  ASSERT_EQ(back.width, chart.width);
  for (const auto& p : back.data) EXPECT_EQ(p, Vec3::Constant(128.0 / 255.0));
}

TEST(Export, MeshStructure) {
  const ProxyModel m = quad_model(1.5, 1.0);
  const UVChart chart = build_chart(m.polygons[0], 64);
  const fs::path dir = temp_dir("structure");
  write_textured_model(dir, m, {chart}, {Image(chart.width, chart.height, Vec3::Zero())});
  const ObjMesh mesh = read_obj(dir / "model.obj");
  EXPECT_EQ(mesh.mtllib, "model.mtl");
  ASSERT_EQ(mesh.uvs.size(), 4u);
  for (const auto& uv : mesh.uvs) {
    EXPECT_GE(uv.x(), 0.0);
    EXPECT_LE(uv.x(), 1.0);
    EXPECT_GE(uv.y(), 0.0);
    EXPECT_LE(uv.y(), 1.0);
  }
  std::ifstream mtl(dir / "model.mtl");
  std::string line;
  int materials = 0;
  while (std::getline(mtl, line)) materials += line.rfind("newmtl", 0) == 0;
  EXPECT_EQ(materials, 1);
}

TEST(Export, CheckerboardReloadsExactly) {
  const ProxyModel m = quad_model();
  const UVChart chart = build_chart(m.polygons[0], 256);
  Image tex(chart.width, chart.height);
  for (int r = 0; r < tex.height; ++r)
    for (int c = 0; c < tex.width; ++c) tex(c, r) = Vec3::Constant(((c / 16 + r / 16) % 2) ? 1.0 : 0.0);
  const fs::path dir = temp_dir("checker");
  write_textured_model(dir, m, {chart}, {tex});
  EXPECT_EQ(error_percentile(read_png(dir / texture_name(0)), tex, 100), 0.0);
}

TEST(Export, UvsAddressTexelCenters) {
  const ProxyModel m = ProxyModel::from_faces({{0, 0, 0}, {3, 0, 0.5}, {3, 2, 0.5}, {0, 2, 0}}, {{0, 1, 2, 3}});
  const UVChart chart = build_chart(m.polygons[0], 32);
  std::mt19937_64 rng(8);
  const Image tex = quantize8(random_image(chart.width, chart.height, rng, false));
  const fs::path dir = temp_dir("uvs");
  write_textured_model(dir, m, {chart}, {tex});
  const ObjMesh mesh = read_obj(dir / "model.obj");
  const Image png = read_png(dir / texture_name(0));
  // Affine map plane -> uv from three reloaded vertices.
  const ProxyPolygon& poly = m.polygons[0];
  Mat3 a;
  Eigen::Matrix<double, 3, 2> b;
  for (int i = 0; i < 3; ++i) {
    const Vec2 q = poly.to_plane(mesh.vertices[std::size_t(mesh.faces[0][std::size_t(i)])]);
    a.row(i) << q.x(), q.y(), 1.0;
    b.row(i) = mesh.uvs[std::size_t(mesh.face_uvs[0][std::size_t(i)])].transpose();
  }
  const Eigen::Matrix<double, 3, 2> affine = a.inverse() * b;
  for (int r = 0; r < chart.height; ++r)
    for (int c = 0; c < chart.width; ++c) {
      const Vec2 q = chart.texel_center(c, r);
      const Vec2 uv = (Eigen::RowVector3d(q.x(), q.y(), 1.0) * affine).transpose();
      const double px = uv.x() * png.width - 0.5, py = (1.0 - uv.y()) * png.height - 0.5;
      ASSERT_NEAR(px, c, 1e-6);
      ASSERT_NEAR(py, r, 1e-6);
      EXPECT_EQ(png(int(std::lround(px)), int(std::lround(py))), tex(c, r));
    }
}

TEST(Export, ResolutionMismatch) {
  const ProxyModel m = quad_model();
  const UVChart chart = build_chart(m.polygons[0], 32);
  EXPECT_THROW(write_textured_model(temp_dir("mismatch"), m, {chart}, {Image(5, 5)}), InputError);
}

TEST(Rle, RoundTrip) {
  Grid<int> g(7, 5, -1);
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> pick(-1, 3);
  for (auto& v : g.data)
    if (rng() % 3 == 0) v = pick(rng);
  EXPECT_EQ(rle_decode(rle_encode(g)), g);
  const json runs = rle_encode(Grid<int>(4, 4, 2))["runs"];
  EXPECT_EQ(runs, json({2, 16}));
}
