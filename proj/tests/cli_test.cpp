#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace difftex;
using namespace difftex::testing;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string err;
};

CliResult run(const std::string& args, const std::string& env = {}) {
  const fs::path log = fs::temp_directory_path() / "difftex_cli_stderr.txt";
  const std::string cmd = env + (env.empty() ? "" : " ") + std::string(DIFFTEX_CLI) + " " + args + " >/dev/null 2>" + log.string();
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  r.err = ss.str();
  return r;
}

json read_json_file(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Small quad scene: 256 ground truth, a fronto view and four ring views.
fs::path small_scene() {
  static const fs::path dir = [] {
    const fs::path d = temp_dir("cli_scene");
    std::ofstream(d / "spec.json") << R"({"extends": "quad12", "name": "quad-small", "gt_resolution": 256,
      "rig": {"count": 4, "image": [192, 192]}})";
    const CliResult r = run("synth --spec " + (d / "spec.json").string() + " --out " + (d / "scene").string());
    EXPECT_EQ(r.code, 0) << r.err;
    return d / "scene";
  }();
  return dir;
}

}  // namespace

TEST(Cli, HelpAndUsage) {
  EXPECT_EQ(run("--help").code, 0);
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("texture --scene").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
}

TEST(Cli, UnknownSpecIsInvalidInput) {
  const CliResult r = run("synth --spec no-such-spec --out " + temp_dir("cli_unknown").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("quad12"), std::string::npos) << r.err;
}

TEST(Cli, MissingPhotoDirectoryNamed) {
  const fs::path d = temp_dir("cli_missing");
  fs::copy(small_scene(), d / "scene", fs::copy_options::recursive);
  fs::remove_all(d / "scene" / "photos");
  const CliResult r = run("texture --scene " + (d / "scene" / "scene.json").string() + " --out " + (d / "out").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find((d / "scene" / "photos").string()), std::string::npos) << r.err;
}

TEST(Cli, InvalidResolutionRejected) {
  const CliResult r = run("texture --scene " + (small_scene() / "scene.json").string() + " --out " +
                    temp_dir("cli_res").string() + " --max-res 300");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("target_resolution"), std::string::npos) << r.err;
}

TEST(Cli, SynthTextureEvalEndToEnd) {
  const fs::path out = temp_dir("cli_e2e");
  const std::string scene = (small_scene() / "scene.json").string();
  CliResult r = run("texture --scene " + scene + " --out " + out.string() + " --max-res 256 --threads 1");
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"poly_000.png", "model.obj", "model.mtl", "report.json"}) EXPECT_TRUE(fs::exists(out / f)) << f;
  r = run("eval --recon " + out.string() + " --gt " + small_scene().string());
  ASSERT_EQ(r.code, 0) << r.err;
  const json m = read_json_file(out / "metrics.json");
  EXPECT_TRUE(fs::exists(out / "metrics.csv"));
  const json rep = read_json_file(out / "report.json");

  // Independent nearest-rank p95 over covered texels, against a flat mean-color baseline.
  const Image rec = read_png(out / texture_name(0));
  const Image gt = read_png(small_scene() / "gt" / gt_name(0));
  const Grid<int> src = rle_decode(rep.at("polygons")[0].at("source_map"));
  Vec3 mean = Vec3::Zero();
  std::size_t n = 0;
  for (std::size_t t = 0; t < gt.size(); ++t)
    if (src[t] >= 0) mean += gt[t], ++n;
  ASSERT_GT(n, 0u);
  mean /= double(n);
  std::vector<double> d, flat;
  for (std::size_t t = 0; t < gt.size(); ++t)
    if (src[t] >= 0) d.push_back((rec[t] - gt[t]).norm()), flat.push_back((mean - gt[t]).norm());
  std::sort(d.begin(), d.end());
  std::sort(flat.begin(), flat.end());
  const std::size_t rank = std::size_t(std::ceil(0.95 * double(d.size()))) - 1;
  EXPECT_NEAR(m.at("error_p95").get<double>(), d[rank], 1e-12);
  EXPECT_LT(d[rank], 0.5 * flat[rank]);
  EXPECT_EQ(rep.at("polygons").size(), 1u);
  EXPECT_EQ(rep.at("threads").get<int>(), 1);
}

TEST(Cli, EvalLayoutMismatch) {
  const fs::path out = temp_dir("cli_mismatch");
  const std::string scene = (small_scene() / "scene.json").string();
  ASSERT_EQ(run("texture --scene " + scene + " --out " + out.string() + " --max-res 512 --max-iterations 2").code, 0);
  const CliResult r = run("eval --recon " + out.string() + " --gt " + small_scene().string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("mismatch"), std::string::npos) << r.err;
  EXPECT_EQ(run("eval --recon " + out.string() + " --gt " + out.string()).code, 2);
}

TEST(Cli, ThreadsFromEnvironment) {
  const fs::path out = temp_dir("cli_env");
  const std::string scene = (small_scene() / "scene.json").string();
  ASSERT_EQ(run("texture --scene " + scene + " --out " + out.string() + " --max-iterations 3", "DIFFTEX_THREADS=3").code, 0);
  EXPECT_EQ(read_json_file(out / "report.json").at("threads").get<int>(), 3);
  ASSERT_EQ(run("texture --scene " + scene + " --out " + out.string() + " --max-iterations 3 --threads 2",
                "DIFFTEX_THREADS=3")
                .code,
            0);
  EXPECT_EQ(read_json_file(out / "report.json").at("threads").get<int>(), 2);
}

TEST(Cli, ThreadCountDoesNotChangeOutput) {
  const fs::path d = temp_dir("cli_threads");
  ASSERT_EQ(run("synth --spec box24 --out " + (d / "scene").string()).code, 0);
  const std::string scene = (d / "scene" / "scene.json").string();
  ASSERT_EQ(run("texture --scene " + scene + " --out " + (d / "t1").string() + " --max-iterations 30 --threads 1").code, 0);
  ASSERT_EQ(run("texture --scene " + scene + " --out " + (d / "t8").string() + " --max-iterations 30 --threads 8").code, 0);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(file_bytes(d / "t1" / texture_name(i)), file_bytes(d / "t8" / texture_name(i)));
}

TEST(Cli, TunableFlagsReachReport) {
  const fs::path out = temp_dir("cli_flags");
  const std::string scene = (small_scene() / "scene.json").string();
  const CliResult r = run("texture --scene " + scene + " --out " + out.string() +
                          " --max-res 256 --max-iterations 1 --lr 0.01 --tau-w 0.9 --lambda-s 0.25 --histogram-matching false");
  ASSERT_EQ(r.code, 0) << r.err;
  const json cfg = read_json_file(out / "report.json").at("config");
  EXPECT_EQ(cfg.at("lr").get<double>(), 0.01);
  EXPECT_EQ(cfg.at("tau_w").get<double>(), 0.9);
  EXPECT_EQ(cfg.at("lambda_s").get<double>(), 0.25);
  EXPECT_FALSE(cfg.at("histogram_matching").get<bool>());
  EXPECT_EQ(run("texture --scene " + scene + " --out " + out.string() + " --lambda-s -1").code, 2);
}
