#include "test_support.hpp"

using namespace nf3d;
using namespace nf3d::testing;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::Parse;
}

}  // namespace

TEST(Config, TextRoundTrip) {
  RunConfig c;
  c.width = 48;
  c.widths = {16, 32};
  c.lr = 3.14159e-5;
  c.joint = true;
  c.head = "relu";
  c.bitwidths = {6, 10};
  c.seed_params = 123456789012345ULL;
  c.sigma = 0.0123456789;
  RunConfig back;
  apply_config_text(back, to_text(c));
  EXPECT_EQ(back, c);
  RunConfig dflt;
  apply_config_text(dflt, to_text(RunConfig{}));
  EXPECT_EQ(dflt, RunConfig{});
}

TEST(Config, Defaults) {
  const RunConfig c;
  EXPECT_EQ(c.width, 32);
  EXPECT_EQ(c.widths, (std::vector<int>{16, 24, 32, 48, 64, 96}));
  EXPECT_EQ(c.levels, 16);
  EXPECT_EQ(c.attr_levels, 8);
  EXPECT_EQ(c.sigma_p, 1.4);
  EXPECT_EQ(c.omega0, 30.0);
  EXPECT_EQ(c.d_star, 0.1);
  EXPECT_EQ(c.m_total, 250000u);
  EXPECT_EQ(c.lr, 1e-4);
  EXPECT_EQ(c.epochs, 500);
  EXPECT_EQ(c.batch_size, 10000u);
  EXPECT_EQ(c.lambda_l1, 1e-8);
  EXPECT_EQ(c.lambda_a, 1e-3);
  EXPECT_EQ(c.bitwidth, 8);
  EXPECT_EQ(c.qat_epochs, 50);
  EXPECT_EQ(c.qat_lr, 1e-7);
  EXPECT_EQ(c.r_mc, 256);
  EXPECT_EQ(c.n_points, 100000u);
  EXPECT_FALSE(c.joint);
  EXPECT_FALSE(c.seed_params.has_value());
}

TEST(Config, OverridesAndComments) {
  RunConfig c;
  apply_config_text(c, "# sweep setup\nwidth = 16\n\n  epochs=20  # short\nseed_data = 7\nseed_params = auto\n");
  EXPECT_EQ(c.width, 16);
  EXPECT_EQ(c.epochs, 20);
  EXPECT_EQ(c.seed_data, 7u);
  EXPECT_FALSE(c.seed_params.has_value());
  set_option(c, "widths", "16, 24");
  EXPECT_EQ(c.widths, (std::vector<int>{16, 24}));
  set_option(c, "truncate", "false");
  EXPECT_FALSE(c.truncate);
}

TEST(Config, FileLoading) {
  TempDir dir;
  write_text(dir / "run.cfg", "bitwidth = 10\nr_mc = 64\n");
  RunConfig c;
  apply_config_file(c, dir / "run.cfg");
  EXPECT_EQ(c.bitwidth, 10);
  EXPECT_EQ(c.r_mc, 64);
  EXPECT_EQ(kind_of([&] { apply_config_file(c, dir / "missing.cfg"); }), ErrorKind::Config);
}

TEST(Config, RejectsBadInput) {
  RunConfig c;
  EXPECT_EQ(kind_of([&] { set_option(c, "widht", "16"); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([&] { set_option(c, "width", "sixteen"); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([&] { set_option(c, "width", "16.5"); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([&] { set_option(c, "kind", "nerf"); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([&] { set_option(c, "joint", "maybe"); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([&] { set_option(c, "seed_data", "-3x"); }), ErrorKind::Config);
  try {
    apply_config_text(c, "width = 16\nbogus = 1\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(Config, ValidationRanges) {
  auto with = [](const std::string& k, const std::string& v) {
    RunConfig c;
    set_option(c, k, v);
    return c;
  };
  EXPECT_NO_THROW(validate(RunConfig{}));
  EXPECT_EQ(kind_of([&] { validate(with("bitwidth", "1")); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([&] { validate(with("bitwidth", "17")); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([&] { validate(with("r_mc", "7")); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([&] { validate(with("d_star", "0")); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([&] { validate(with("m_total", "5")); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([&] { validate(with("width", "0")); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([&] { validate(with("bitwidths", "8,20")); }), ErrorKind::Config);
}

TEST(Config, InputDependentChecks) {
  const PointCloud plain = sample_surface(make_cube(), 100, 1);
  const PointCloud colors = colored_sphere(100, 1);
  const TriMesh mesh = make_cube();
  RunConfig c;
  EXPECT_EQ(resolve_kind(c, mesh), FieldKind::Sdf);
  EXPECT_EQ(resolve_kind(c, plain), FieldKind::Udf);
  c.kind = "udf";
  EXPECT_EQ(resolve_kind(c, mesh), FieldKind::Udf);
  c.kind = "sdf";
  EXPECT_EQ(kind_of([&] { prepare_input(plain, c); }), ErrorKind::Config);
  c = RunConfig{};
  c.attributes = "on";
  EXPECT_EQ(kind_of([&] { prepare_input(plain, c); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([&] { prepare_input(mesh, c); }), ErrorKind::Config);
  EXPECT_TRUE(prepare_input(colors, c).attributes);
  c.attributes = "auto";
  EXPECT_TRUE(prepare_input(colors, c).attributes);
  EXPECT_FALSE(prepare_input(plain, c).attributes);
  c.attributes = "off";
  EXPECT_FALSE(prepare_input(colors, c).attributes);
  c = RunConfig{};
  c.joint = true;
  EXPECT_EQ(kind_of([&] { prepare_input(plain, c); }), ErrorKind::Config);
}

TEST(Config, PreparedInputIsNormalized) {
  TriMesh m = make_cube(3.0);
  for (auto& v : m.vertices) v += Vec3(5, 5, 5);
  const PreparedInput in = prepare_input(m, RunConfig{});
  EXPECT_LT((in.norm.center - Vec3(5, 5, 5)).norm(), 1e-12);
  double r = 0;
  for (const auto& v : std::get<TriMesh>(in.shape).vertices) r = std::max(r, v.norm());
  EXPECT_NEAR(r, 1.0, 1e-12);
}

TEST(Config, SeedResolution) {
  RunConfig c;
  EXPECT_TRUE(resolve_seeds(c));
  EXPECT_TRUE(c.seed_params && c.seed_data);
  RunConfig fixed = small_config();
  EXPECT_FALSE(resolve_seeds(fixed));
  EXPECT_EQ(*fixed.seed_params, 1u);
}

TEST(Config, AttributePath) {
  EXPECT_EQ(attribute_path("out/x.nf3d"), std::filesystem::path("out/x.attr.nf3d"));
}
