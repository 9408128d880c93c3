#include "test_support.hpp"

using namespace nf3d;
using namespace nf3d::testing;

namespace {

PointCloud colored(std::vector<Vec3> pts, std::vector<Vec3> colors) {
  PointCloud pc;
  pc.points = std::move(pts);
  pc.colors = std::move(colors);
  return pc;
}

}  // namespace

TEST(Chamfer, IdentityIsZero) {
  const auto p = random_points(300, 1);
  EXPECT_EQ(chamfer(p, p), 0.0);
}

TEST(Chamfer, SinglePair) {
  const std::vector<Vec3> a = {Vec3(0, 0, 0)}, b = {Vec3(0.1, 0, 0)};
  EXPECT_NEAR(chamfer(a, b), 0.01, 1e-17);
}

TEST(Chamfer, MatchesBruteForce) {
  for (std::uint64_t s = 0; s < 3; ++s) {
    const auto a = random_points(500, 10 + s), b = random_points(500, 20 + s, -0.8, 1.2);
    EXPECT_NEAR(chamfer(a, b), brute_chamfer(a, b), 1e-12);
  }
}

TEST(Chamfer, SymmetricAndQuadraticInScale) {
  const auto a = random_points(400, 3), b = random_points(250, 4);
  EXPECT_EQ(chamfer(a, b), chamfer(b, a));
  for (double s : {0.5, 3.0}) {
    std::vector<Vec3> sa, sb;
    for (const auto& p : a) sa.push_back(s * p);
    for (const auto& p : b) sb.push_back(s * p);
    EXPECT_NEAR(chamfer(sa, sb), s * s * chamfer(a, b), 1e-12 * s * s);
  }
}

TEST(Chamfer, ThreadCountIndependent) {
  const auto a = random_points(20000, 5), b = random_points(15000, 6);
  const double one = chamfer(a, b);
  const unsigned saved = default_threads();
  default_threads() = 5;
  const double five = chamfer(a, b);
  default_threads() = saved;
  EXPECT_EQ(one, five);
}

TEST(Chamfer, EmptyIsAnError) {
  const auto a = random_points(10, 1);
  EXPECT_THROW(chamfer(a, std::vector<Vec3>{}), Error);
  EXPECT_THROW(chamfer(std::vector<Vec3>{}, a), Error);
}

TEST(Psnr, IdenticalCloudsHitCap) {
  const auto p = random_points(100, 1);
  const PointCloud a = colored(p, random_points(100, 2));
  EXPECT_EQ(attribute_psnr(a, a), kPsnrCap);
}

TEST(Psnr, SinglePointExample) {
  const PointCloud a = colored({Vec3::Zero()}, {Vec3::Constant(color_from_u8(0))});
  const PointCloud b = colored({Vec3::Zero()}, {Vec3::Constant(color_from_u8(16))});
  EXPECT_NEAR(attribute_psnr(a, b), 10 * std::log10(65025.0 / 256.0), 1e-9);
  EXPECT_NEAR(attribute_psnr(a, b), 24.05, 0.005);
}

TEST(Psnr, Symmetric) {
  const PointCloud a = colored(random_points(300, 1), random_points(300, 2));
  const PointCloud b = colored(random_points(200, 3), random_points(200, 4));
  EXPECT_EQ(attribute_psnr(a, b), attribute_psnr(b, a));
}

TEST(Psnr, DecreasesWithNoise) {
  const auto pts = random_points(2000, 1);
  std::vector<Vec3> base(pts.size(), Vec3(0.1, -0.2, 0.3));
  const PointCloud gt = colored(pts, base);
  double prev = kPsnrCap + 1;
  for (double amp : {0.02, 0.1, 0.4}) {
    std::vector<Vec3> noisy = base;
    const auto noise = random_points(pts.size(), 7, -amp, amp);
    for (std::size_t i = 0; i < noisy.size(); ++i) noisy[i] += noise[i];
    const double p = attribute_psnr(gt, colored(pts, noisy));
    EXPECT_LT(p, prev) << amp;
    prev = p;
  }
}

TEST(Psnr, NeedsColors) {
  PointCloud a;
  a.points = random_points(5, 1);
  try {
    attribute_psnr(a, a);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Precondition);
  }
}

TEST(RdSweep, SingleWidthGivesOnePoint) {
  RunConfig cfg = small_config();
  cfg.widths = {16};
  const auto pts = rd_sweep(make_icosphere(0.5, 2), cfg);
  ASSERT_EQ(pts.size(), 1u);
  EXPECT_TRUE(pts[0].ok) << pts[0].error;
  EXPECT_EQ(pts[0].width, 16);
  EXPECT_GT(pts[0].bytes, 0u);
  EXPECT_GE(pts[0].cd, 0.0);
  EXPECT_FALSE(pts[0].psnr.has_value());
}

TEST(RdSweep, BytesGrowWithWidth) {
  RunConfig cfg = small_config();
  cfg.epochs = 3;
  cfg.widths = {8, 16, 24};
  const auto pts = rd_sweep(make_icosphere(0.5, 2), cfg);
  ASSERT_EQ(pts.size(), 3u);
  EXPECT_LT(pts[0].bytes, pts[1].bytes);
  EXPECT_LT(pts[1].bytes, pts[2].bytes);
}

TEST(RdSweep, BitwidthAblation) {
  RunConfig cfg = small_config();
  cfg.epochs = 3;
  cfg.bitwidths = {6, 8};
  const auto pts = rd_sweep(make_icosphere(0.5, 2), cfg);
  ASSERT_EQ(pts.size(), 2u);
  EXPECT_EQ(pts[0].bitwidth, 6);
  EXPECT_EQ(pts[1].bitwidth, 8);
  EXPECT_EQ(pts[0].width, cfg.width);
}

TEST(RdSweep, ParallelMatchesSequential) {
  RunConfig cfg = small_config();
  cfg.epochs = 3;
  cfg.widths = {8, 12};
  const auto seq = rd_sweep(make_icosphere(0.5, 2), cfg, false);
  const auto par = rd_sweep(make_icosphere(0.5, 2), cfg, true);
  ASSERT_EQ(seq.size(), par.size());
  for (std::size_t i = 0; i < seq.size(); ++i) {
    EXPECT_EQ(seq[i].bytes, par[i].bytes);
    EXPECT_EQ(seq[i].cd, par[i].cd);
  }
}

TEST(RdSweep, ColoredCloudReportsPsnr) {
  RunConfig cfg = small_config();
  cfg.widths = {16};
  const auto pts = rd_sweep(colored_sphere(3000, 1), cfg);
  ASSERT_EQ(pts.size(), 1u);
  ASSERT_TRUE(pts[0].ok) << pts[0].error;
  ASSERT_TRUE(pts[0].psnr.has_value());
  EXPECT_GT(*pts[0].psnr, 0.0);
}

TEST(RdCsv, HeaderAndRows) {
  RDPoint ok;
  ok.width = 16;
  ok.bytes = 1234;
  ok.cd = 2.5e-5;
  ok.psnr = 31.5;
  ok.ok = true;
  RDPoint bad;
  bad.width = 24;
  bad.bytes = 2000;
  bad.ok = false;
  const std::string csv = rd_csv({ok, bad});
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "width,bytes,cd,psnr,t_encode_s,t_decode_s");
  std::getline(in, line);
  EXPECT_EQ(line.rfind("16,1234,", 0), 0u) << line;
  std::getline(in, line);
  EXPECT_EQ(line.rfind("24,2000,nan,,", 0), 0u) << line;
  EXPECT_NE(rd_svg({ok, bad}).find("<svg"), std::string::npos);
}
