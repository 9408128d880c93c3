#include "test_support.hpp"

using namespace nf3d;
using namespace nf3d::testing;

namespace {

TriMesh flat_quad() {
  TriMesh q;
  q.vertices = {Vec3(-1, -1, 0), Vec3(1, -1, 0), Vec3(1, 1, 0), Vec3(-1, 1, 0)};
  q.triangles = {{0, 1, 2}, {0, 2, 3}};
  return q;
}

}  // namespace

TEST(AttributeSet, SinglePointColor) {
  PointCloud gt;
  gt.points = {Vec3(0.3, 0.1, 0.0)};
  gt.colors = {Vec3(1, -1, -1)};
  const AttributeTrainingSet set = build_attribute_set(make_cube(), gt, 200, 1);
  ASSERT_EQ(set.size(), 200u);
  for (const auto& c : set.colors) EXPECT_EQ(c, Vec3(1, -1, -1));
}

TEST(AttributeSet, RampMatchesBruteForce) {
  PointCloud gt = sample_surface(flat_quad(), 500, 3);
  for (const auto& p : gt.points) gt.colors.push_back(Vec3(p.x(), 0, 0));
  const AttributeTrainingSet set = build_attribute_set(flat_quad(), gt, 1000, 4);
  ASSERT_EQ(set.size(), 1000u);
  for (std::size_t i = 0; i < set.size(); ++i) {
    EXPECT_EQ(set.points[i].z(), 0.0);
    EXPECT_EQ(set.colors[i], gt.colors[brute_nearest(gt.points, set.points[i]).second]) << i;
  }
}

TEST(AttributeSet, EmptyAndErrors) {
  PointCloud gt = colored_sphere(100, 1);
  EXPECT_EQ(build_attribute_set(make_cube(), gt, 0, 1).size(), 0u);
  gt.colors.clear();
  try {
    build_attribute_set(make_cube(), gt, 10, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Precondition);
  }
  EXPECT_THROW(build_attribute_set(TriMesh{}, colored_sphere(10, 1), 10, 1), Error);
}

TEST(AttributeSet, Deterministic) {
  const PointCloud gt = colored_sphere(300, 1);
  const auto a = build_attribute_set(make_cube(), gt, 400, 9), b = build_attribute_set(make_cube(), gt, 400, 9);
  EXPECT_EQ(a.points, b.points);
  EXPECT_EQ(a.colors, b.colors);
}

TEST(CompressAttributes, ConstantColorIsLearned) {
  PointCloud gt = colored_sphere(200, 1);
  for (auto& c : gt.colors) c = Vec3(0.5, -0.3, 0.2);
  const AttributeTrainingSet set = build_attribute_set(make_icosphere(0.8, 2), gt, 2000, 2);
  TrainConfig cfg;
  cfg.epochs = 100;
  cfg.batch_size = 250;
  cfg.lr = 1e-3;
  cfg.param_seed = 5;
  QatConfig qat;
  qat.epochs = 0;
  const AttributeCompression ac = compress_attributes(set, 16, cfg, 8, qat);
  const double loss = attribute_loss(ac.fit.model, set.points, set.colors, 0.0).first;
  EXPECT_LT(loss, 1e-3);
}

TEST(CompressAttributes, StreamReproducesQuantizedPredictions) {
  const PointCloud gt = colored_sphere(500, 1);
  const AttributeTrainingSet set = build_attribute_set(make_icosphere(0.8, 2), gt, 1000, 2);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 500;
  cfg.param_seed = 1;
  QatConfig qat;
  qat.epochs = 2;
  qat.batch_size = 500;
  const AttributeCompression ac = compress_attributes(set, 12, cfg, 8, qat, 4);
  const DecodedField d = entropy_decode(ac.compressed.stream.bytes);
  EXPECT_EQ(d.model.arch.kind, FieldKind::Attr);
  const FieldModel decoded = dequantize(d.model);
  const FieldModel expected = dequantize(quantize(ac.compressed.shadow, 8, ac.compressed.quantized.steps));
  for (const auto& x : random_points(50, 3)) EXPECT_EQ(forward(decoded, x), forward(expected, x));
}

TEST(SequentialCodec, AttributesDoNotTouchGeometry) {
  const PointCloud pc = colored_sphere(3000, 4);
  RunConfig cfg = small_config();
  cfg.attributes = "off";
  const EncodeOutput plain = encode_shape(prepare_input(pc, cfg), cfg, 16, 8);
  EXPECT_FALSE(plain.attributes.has_value());
  cfg.attributes = "on";
  const EncodeOutput colored = encode_shape(prepare_input(pc, cfg), cfg, 16, 8);
  ASSERT_TRUE(colored.attributes.has_value());
  EXPECT_EQ(colored.geometry.bytes, plain.geometry.bytes);
  EXPECT_EQ(entropy_decode(colored.attributes->bytes).model.arch.kind, FieldKind::Attr);
  EXPECT_EQ(colored.total_bytes(), colored.geometry.total_size_bytes() + colored.attributes->total_size_bytes());
}

TEST(JointCodec, SingleFourOutputModel) {
  const PointCloud pc = colored_sphere(3000, 4);
  RunConfig cfg = small_config();
  cfg.joint = true;
  const PreparedInput in = prepare_input(pc, cfg);
  EXPECT_EQ(in.kind, FieldKind::Udf);
  const EncodeOutput out = encode_shape(in, cfg, 16, 8);
  EXPECT_FALSE(out.attributes.has_value());
  EXPECT_EQ(out.geometry_model.arch.output_dim, 4);
  const FieldModel decoded = decode_stream(out.geometry, cfg);
  EXPECT_EQ(decoded.arch.output_dim, 4);
  const TriMesh mesh = decode_mesh(decoded, cfg.r_mc);
  ASSERT_FALSE(mesh.empty());
  const PointCloud rec = decode_cloud(mesh, decoded, nullptr, 500, Normalization{}, 1);
  EXPECT_TRUE(rec.has_colors());
}
