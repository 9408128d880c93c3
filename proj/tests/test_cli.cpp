#include "test_support.hpp"

#include <sys/wait.h>

using namespace nf3d;
using namespace nf3d::testing;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
};

std::string read_all(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Runs the CLI with `args`; stdout is captured, stderr discarded.
RunResult run(const TempDir& dir, const std::string& args) {
  const auto out = dir / "stdout.txt";
  const std::string cmd = std::string("\"") + NF3D_CLI + "\" " + args + " > \"" + out.string() + "\" 2>/dev/null";
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_all(out);
  return r;
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

/// Sphere of radius 1 centered at (3, -1, 2) plus a small-run config file.
struct Workspace {
  TempDir dir;
  std::string mesh = (dir / "sphere.obj").string();
  std::string cfg = (dir / "small.cfg").string();
  Vec3 center = Vec3(3, -1, 2);

  Workspace() {
    TriMesh m = make_icosphere(1.0, 2, center);
    save_obj(mesh, m);
    RunConfig c = small_config();
    c.epochs = 20;
    write_text(cfg, to_text(c));
  }
  std::string path(const std::string& name) const { return (dir / name).string(); }
};

}  // namespace

TEST(Cli, EncodeDecodeRoundTrip) {
  Workspace ws;
  const RunResult enc = run(ws.dir, "encode " + ws.mesh + " " + ws.path("a.nf3d") + " --config " + ws.cfg);
  ASSERT_EQ(enc.code, 0) << enc.out;
  EXPECT_NE(enc.out.find("total_bytes"), std::string::npos);
  const CompressedField cf = read_compressed(ws.path("a.nf3d"));
  EXPECT_NE(enc.out.find("geometry: " + ws.path("a.nf3d") + " " + std::to_string(cf.total_size_bytes()) + " bytes"),
            std::string::npos)
      << enc.out;

  const DecodedField d = entropy_decode(cf.bytes);
  EXPECT_EQ(d.model.arch.kind, FieldKind::Sdf);
  EXPECT_LT((d.normalization.center - ws.center).norm(), 1e-4);
  EXPECT_NEAR(d.normalization.scale, 1.0, 1e-4);

  ASSERT_EQ(run(ws.dir, "encode " + ws.mesh + " " + ws.path("b.nf3d") + " --config " + ws.cfg).code, 0);
  EXPECT_EQ(read_compressed(ws.path("b.nf3d")).bytes, cf.bytes);

  const RunResult dec = run(ws.dir, "decode " + ws.path("a.nf3d") + " " + ws.path("pc.ply") + " --points 100000");
  ASSERT_EQ(dec.code, 0);
  EXPECT_NE(read_all(ws.path("pc.ply")).find("element vertex 100000\n"), std::string::npos);
  const auto pc = std::get<PointCloud>(load_shape(ws.path("pc.ply")));
  ASSERT_EQ(pc.size(), 100000u);
  double mean_r = 0;
  for (const auto& p : pc.points) mean_r += (p - ws.center).norm();
  EXPECT_NEAR(mean_r / double(pc.size()), 1.0, 0.15);

  ASSERT_EQ(run(ws.dir, "decode " + ws.path("a.nf3d") + " " + ws.path("mesh.obj") + " --r-mc 24").code, 0);
  EXPECT_FALSE(std::get<TriMesh>(load_shape(ws.path("mesh.obj"))).empty());
}

TEST(Cli, EvalOfIdenticalFilesIsZero) {
  Workspace ws;
  const RunResult r = run(ws.dir, "eval " + ws.mesh + " " + ws.mesh + " --points 2000");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "cd,psnr\n0,\n");
}

TEST(Cli, SweepRows) {
  Workspace ws;
  const RunResult w = run(ws.dir, "sweep " + ws.mesh + " --config " + ws.cfg + " --epochs 3 --widths 8,16 --csv " +
                                      ws.path("rd.csv") + " --svg " + ws.path("rd.svg"));
  ASSERT_EQ(w.code, 0);
  const std::string csv = read_all(ws.path("rd.csv"));
  EXPECT_EQ(count_lines(csv), 3u);
  EXPECT_EQ(csv.rfind("width,bytes,cd,psnr,t_encode_s,t_decode_s\n", 0), 0u);
  EXPECT_TRUE(std::filesystem::exists(ws.path("rd.svg")));
  const RunResult b =
      run(ws.dir, "sweep " + ws.mesh + " --config " + ws.cfg + " --epochs 2 --ablate bitwidth 6,8,10,12");
  ASSERT_EQ(b.code, 0);
  EXPECT_EQ(count_lines(b.out.substr(b.out.find("width,bytes"))), 5u);
}

TEST(Cli, ConfigErrorsExitTwo) {
  Workspace ws;
  PointCloud pc = sample_surface(make_icosphere(1.0, 1), 500, 1);
  save_ply(ws.path("cloud.ply"), pc);
  EXPECT_EQ(run(ws.dir, "encode " + ws.path("cloud.ply") + " " + ws.path("x.nf3d") + " --kind sdf").code, 2);
  EXPECT_FALSE(std::filesystem::exists(ws.path("x.nf3d")));
  EXPECT_EQ(run(ws.dir, "encode " + ws.mesh + " " + ws.path("x.nf3d") + " --set nonsense=1").code, 2);
  EXPECT_EQ(run(ws.dir, "encode " + ws.mesh + " " + ws.path("x.nf3d") + " --bitwidth 1").code, 2);
  EXPECT_EQ(run(ws.dir, "encode " + ws.mesh + " " + ws.path("x.nf3d") + " --attributes on").code, 2);
  EXPECT_EQ(run(ws.dir, "encode").code, 2);
  EXPECT_EQ(run(ws.dir, "frobnicate").code, 2);
}

TEST(Cli, MissingInputExitsOne) {
  Workspace ws;
  EXPECT_EQ(run(ws.dir, "encode " + ws.path("nope.obj") + " " + ws.path("x.nf3d")).code, 1);
}

TEST(Cli, CorruptStreamExitsFour) {
  Workspace ws;
  const CompressedField cf = entropy_encode(quantize(random_model(FieldKind::Sdf, 8, 2, 2, 1), 8));
  CompressedField cut{std::vector<std::uint8_t>(cf.bytes.begin(), cf.bytes.end() - 7)};
  write_compressed(ws.path("cut.nf3d"), cut);
  EXPECT_EQ(run(ws.dir, "decode " + ws.path("cut.nf3d") + " " + ws.path("o.obj")).code, 4);
  CompressedField flipped = cf;
  flipped.bytes[20] ^= 1;
  write_compressed(ws.path("flip.nf3d"), flipped);
  EXPECT_EQ(run(ws.dir, "decode " + ws.path("flip.nf3d") + " " + ws.path("o.obj")).code, 4);
}

TEST(Cli, EmptySurfaceExitsFive) {
  Workspace ws;
  FieldModel m = init_params(make_arch(FieldKind::Sdf, 8, 2), 1);
  for (auto& l : m.layers) l.weight.setZero(), l.bias.setZero();
  m.layers.back().bias[0] = 0.5;
  write_compressed(ws.path("flat.nf3d"), entropy_encode(quantize(m, 8)));
  EXPECT_EQ(run(ws.dir, "decode " + ws.path("flat.nf3d") + " " + ws.path("o.obj") + " --r-mc 16").code, 5);
  EXPECT_FALSE(std::filesystem::exists(ws.path("o.obj")));
}

TEST(Cli, SweepWithEveryPointFailingExitsSix) {
  Workspace ws;
  // A non-negative head on a signed field never produces an inside region.
  const RunResult r =
      run(ws.dir, "sweep " + ws.mesh + " --config " + ws.cfg + " --epochs 2 --widths 8,12 --head relu");
  EXPECT_EQ(r.code, 6);
  EXPECT_NE(r.out.find("8,"), std::string::npos);
}
