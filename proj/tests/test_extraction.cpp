#include "test_support.hpp"

using namespace nf3d;
using namespace nf3d::testing;

namespace {

double sphere_sdf(const Vec3& x) { return x.norm() - 0.5; }
Vec3 sphere_grad(const Vec3& x) { return x.norm() > 0 ? Vec3(x.normalized()) : Vec3::Zero(); }
Vec3 no_grad(const Vec3&) { return Vec3::Zero(); }

FieldGrid sphere_grid(int r) { return evaluate_grid(sphere_sdf, no_grad, r, false); }

FieldGrid unsigned_sphere_grid(int r) {
  return evaluate_grid([](const Vec3& x) { return std::abs(sphere_sdf(x)); },
                       [](const Vec3& x) { return Vec3((sphere_sdf(x) < 0 ? -1.0 : 1.0) * sphere_grad(x)); }, r, true);
}

/// True when the point lies on an edge of the lattice: at least two coordinates on grid planes.
bool on_lattice_edge(const Vec3& v, double h) {
  int on = 0;
  for (int c = 0; c < 3; ++c) {
    const double t = (v[c] + 1.0) / h;
    on += std::abs(t - std::round(t)) < 1e-9;
  }
  return on >= 2;
}

}  // namespace

TEST(Grid, CallableSamples) {
  const FieldGrid g = sphere_grid(9);
  EXPECT_EQ(g.values.size(), 729u);
  EXPECT_EQ(g.values[g.index(4, 4, 4)], -0.5);
  EXPECT_NEAR(g.values[g.index(0, 0, 0)], std::sqrt(3.0) - 0.5, 1e-15);
  EXPECT_NEAR(g.values[g.index(8, 8, 8)], std::sqrt(3.0) - 0.5, 1e-15);
  EXPECT_EQ(evaluate_grid(sphere_sdf, no_grad, 8, false).values.size(), 512u);
  EXPECT_FALSE(g.has_gradients());
  EXPECT_THROW(evaluate_grid(sphere_sdf, no_grad, 7, false), Error);
}

TEST(Grid, CallableGradient) {
  const FieldGrid g = evaluate_grid(sphere_sdf, sphere_grad, 9, true);
  ASSERT_TRUE(g.has_gradients());
  EXPECT_EQ(g.position(6, 4, 4), Vec3(0.5, 0, 0));
  EXPECT_LT((g.gradients[g.index(6, 4, 4)] - Vec3(1, 0, 0)).norm(), 1e-6);
}

TEST(Grid, ModelValuesAndGradients) {
  const FieldModel m = random_model(FieldKind::Udf, 8, 2, 2, 3);
  const FieldGrid g = evaluate_grid(m, 8, true);
  for (std::size_t i : {std::size_t{0}, std::size_t{77}, std::size_t{511}}) {
    const Vec3 x = g.position(i);
    EXPECT_NEAR(g.values[i], forward(m, x)[0], 1e-14);
    EXPECT_LT((g.gradients[i] - *backward(m, x, Eigen::VectorXd::Ones(1)).input).norm(), 1e-12);
  }
}

TEST(MarchingCubes, SphereVerticesNearSurface) {
  const FieldGrid g = sphere_grid(64);
  const TriMesh mesh = marching_cubes_sdf(g);
  ASSERT_FALSE(mesh.empty());
  const double h = g.spacing();
  for (const auto& v : mesh.vertices) {
    ASSERT_TRUE(v.allFinite());
    EXPECT_LT(std::abs(v.norm() - 0.5), 2 * h);
    EXPECT_TRUE(on_lattice_edge(v, h));
  }
  for (const auto& t : mesh.triangles)
    for (auto i : t) EXPECT_LT(i, mesh.vertices.size());
}

TEST(MarchingCubes, OutwardOrientation) {
  const TriMesh mesh = marching_cubes_sdf(sphere_grid(32));
  double volume = 0;
  for (const auto& t : mesh.triangles)
    volume += mesh.vertices[t[0]].dot(mesh.vertices[t[1]].cross(mesh.vertices[t[2]])) / 6.0;
  EXPECT_NEAR(volume, 4.0 / 3.0 * std::numbers::pi * 0.125, 0.01);
}

TEST(MarchingCubes, AllPositiveIsEmpty) {
  const FieldGrid g = evaluate_grid([](const Vec3& x) { return 2.0 + x.x(); }, no_grad, 16, false);
  EXPECT_TRUE(marching_cubes_sdf(g).empty());
}

TEST(MarchingCubes, PlaneIsExact) {
  const FieldGrid g = evaluate_grid([](const Vec3& x) { return x.x() - 0.1; }, no_grad, 17, false);
  const TriMesh mesh = marching_cubes_sdf(g);
  ASSERT_FALSE(mesh.empty());
  for (const auto& v : mesh.vertices) EXPECT_NEAR(v.x(), 0.1, 1e-6);
}

TEST(MarchingCubes, IsoLevel) {
  const TriMesh mesh = marching_cubes_sdf(sphere_grid(48), 0.2);
  for (const auto& v : mesh.vertices) EXPECT_LT(std::abs(v.norm() - 0.7), 2 * 2.0 / 47);
}

TEST(UnsignedMarchingCubes, SphereVerticesNearSurface) {
  const FieldGrid g = unsigned_sphere_grid(64);
  const double h = g.spacing();
  const TriMesh mesh = marching_cubes_udf(g, 3 * h);
  ASSERT_FALSE(mesh.empty());
  for (const auto& v : mesh.vertices) EXPECT_LT(std::abs(v.norm() - 0.5), 2 * h);
}

TEST(UnsignedMarchingCubes, PlaneAtCrossing) {
  const FieldGrid g = evaluate_grid([](const Vec3& x) { return std::abs(x.x() - 0.1); },
                                    [](const Vec3& x) { return Vec3(x.x() < 0.1 ? -1.0 : 1.0, 0, 0); }, 24, true);
  const TriMesh mesh = marching_cubes_udf(g);
  ASSERT_FALSE(mesh.empty());
  for (const auto& v : mesh.vertices) EXPECT_NEAR(v.x(), 0.1, 2 * g.spacing());
}

TEST(UnsignedMarchingCubes, ConstantFieldIsEmpty) {
  const FieldGrid g = evaluate_grid([](const Vec3&) { return 1.0; }, no_grad, 16, true);
  EXPECT_TRUE(marching_cubes_udf(g).empty());
}

TEST(UnsignedMarchingCubes, MatchesSignedExtraction) {
  const TriMesh sdf = marching_cubes_sdf(sphere_grid(40));
  const TriMesh udf = marching_cubes_udf(unsigned_sphere_grid(40));
  ASSERT_EQ(udf.triangles.size(), sdf.triangles.size());
  ASSERT_EQ(udf.vertices.size(), sdf.vertices.size());
  EXPECT_EQ(udf.triangles, sdf.triangles);
  for (std::size_t i = 0; i < sdf.vertices.size(); ++i) EXPECT_LT((udf.vertices[i] - sdf.vertices[i]).norm(), 1e-6);
}

TEST(UnsignedMarchingCubes, PseudoSignsRecoverInsideOutside) {
  const FieldGrid g = unsigned_sphere_grid(32);
  const auto signs = pseudo_signs(g, default_udf_band(g));
  for (std::size_t i = 0; i < signs.size(); ++i)
    EXPECT_EQ(signs[i], sphere_sdf(g.position(i)) < 0 ? -1 : 1) << i;
}

TEST(UnsignedMarchingCubes, Deterministic) {
  const FieldGrid g = unsigned_sphere_grid(32);
  const TriMesh a = marching_cubes_udf(g), b = marching_cubes_udf(g);
  EXPECT_EQ(a.triangles, b.triangles);
  EXPECT_EQ(a.vertices, b.vertices);
  const unsigned saved = default_threads();
  default_threads() = 3;
  const TriMesh c = marching_cubes_udf(unsigned_sphere_grid(32));
  default_threads() = saved;
  EXPECT_EQ(a.triangles, c.triangles);
  EXPECT_EQ(a.vertices, c.vertices);
}

TEST(UnsignedMarchingCubes, NeedsGradients) {
  try {
    marching_cubes_udf(sphere_grid(16));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Precondition);
  }
}

TEST(DropDegenerate, RemovesZeroAreaTriangles) {
  TriMesh m = make_cube();
  m.triangles.push_back({0, 0, 1});
  m.triangles.push_back({0, 1, 1});
  EXPECT_EQ(drop_degenerate(m).triangles.size(), 12u);
}

TEST(DecodePointCloud, CountAndIdentityNormalization) {
  TriMesh quad;
  quad.vertices = {Vec3(-0.5, -0.5, 0.25), Vec3(0.5, -0.5, 0.25), Vec3(0.5, 0.5, 0.25), Vec3(-0.5, 0.5, 0.25)};
  quad.triangles = {{0, 1, 2}, {0, 2, 3}};
  const PointCloud pc = decode_to_pointcloud(quad, 100000, Normalization{}, nullptr, 1);
  ASSERT_EQ(pc.size(), 100000u);
  EXPECT_FALSE(pc.has_colors());
  for (const auto& p : pc.points) {
    ASSERT_NEAR(p.z(), 0.25, 1e-15);
    ASSERT_LE(p.cwiseAbs().head<2>().maxCoeff(), 0.5 + 1e-12);
  }
}

TEST(DecodePointCloud, AppliesNormalization) {
  const TriMesh cube = make_cube(0.5);
  Normalization norm;
  norm.center = Vec3(10, 0, 0);
  norm.scale = 2.0;
  const PointCloud pc = decode_to_pointcloud(cube, 500, norm, nullptr, 1);
  for (const auto& p : pc.points) EXPECT_NEAR((p - norm.center).cwiseAbs().maxCoeff(), 1.0, 1e-12);
}

TEST(DecodePointCloud, ZeroColorModelGivesMidGray) {
  FieldModel attr = init_params(make_arch(FieldKind::Attr, 8, 2), 1);
  for (auto& l : attr.layers) l.weight.setZero(), l.bias.setZero();
  const PointCloud pc = decode_to_pointcloud(make_cube(), 1000, Normalization{}, &attr, 2);
  ASSERT_TRUE(pc.has_colors());
  for (const auto& c : pc.colors)
    for (int k = 0; k < 3; ++k) EXPECT_EQ(color_to_u8(c[k]), 128);
}

TEST(DecodePointCloud, ColorsAreClamped) {
  FieldModel attr = init_params(make_arch(FieldKind::Attr, 8, 2), 1);
  for (auto& l : attr.layers) l.weight.setZero(), l.bias.setZero();
  attr.layers.back().bias << 3.0, -4.0, 0.5;
  const PointCloud pc = decode_to_pointcloud(make_cube(), 10, Normalization{}, &attr, 2);
  for (const auto& c : pc.colors) EXPECT_EQ(c, Vec3(1.0, -1.0, 0.5));
}

TEST(DecodePointCloud, EmptyMeshIsAnError) {
  try {
    decode_to_pointcloud(TriMesh{}, 10, Normalization{}, nullptr, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptySurface);
  }
}

TEST(ExtractMesh, LinearModelGivesExactPlane) {
  FieldArch a = make_arch(FieldKind::Sdf, 4, 0);
  a.num_hidden = 0;
  a.head = HeadActivation::Identity;
  FieldModel m = init_params(a, 1);
  m.layers[0].weight << 0.0, 1.0, 0.0;
  m.layers[0].bias << -0.3;
  const TriMesh mesh = extract_mesh(m, 16);
  ASSERT_FALSE(mesh.empty());
  for (const auto& v : mesh.vertices) EXPECT_NEAR(v.y(), 0.3, 1e-6);
}
