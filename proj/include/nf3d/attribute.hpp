#pragma once

#include "nf3d/compression.hpp"
#include "nf3d/extraction.hpp"
#include "nf3d/kdtree.hpp"

namespace nf3d {

/// Points on the decoded surface and the color of their nearest ground-truth point.
struct AttributeTrainingSet {
  std::vector<Vec3> points;
  std::vector<Vec3> colors;

  std::size_t size() const { return points.size(); }
};

/// Nearest-neighbour color lookup c_NN(x, S) against a colored cloud.
class ColorLookup {
 public:
  explicit ColorLookup(const PointCloud& gt) : tree_(gt.points), colors_(gt.colors) {
    if (!gt.has_colors()) throw Error(ErrorKind::Precondition, "ground-truth point cloud carries no colors");
  }
  const Vec3& operator()(const Vec3& x) const { return colors_[tree_.nearest(x).id]; }

 private:
  KdTree tree_;
  std::vector<Vec3> colors_;
};

/// m area-uniform samples of the decoded mesh, each labelled with the color of its exact
/// nearest neighbour in the ground-truth cloud. Both inputs in normalized coordinates.
inline AttributeTrainingSet build_attribute_set(const TriMesh& decoded_mesh, const PointCloud& gt, std::size_t m,
                                                std::uint64_t seed) {
  if (!gt.has_colors()) throw Error(ErrorKind::Precondition, "ground-truth point cloud carries no colors");
  AttributeTrainingSet set;
  if (m == 0) return set;
  const TriMesh clean = drop_degenerate(decoded_mesh);
  if (clean.empty()) throw Error(ErrorKind::EmptySurface, "decoded geometry is empty; no surface to color");
  const ColorLookup lookup(gt);
  set.points = sample_surface(clean, m, mix_seed(seed, 0xa77)).points;
  set.colors.resize(m);
  parallel_chunks(m, 4096, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) set.colors[i] = lookup(set.points[i]);
  });
  return set;
}

struct AttributeCompression {
  FitResult fit;
  CompressionResult compressed;
};

/// Trains an ATTR field (positional encoding with `levels` frequencies) on the set and runs
/// it through the same quantize / retrain / entropy-code stack as geometry.
inline AttributeCompression compress_attributes(const AttributeTrainingSet& set, int width, const TrainConfig& cfg,
                                                int b, const QatConfig& qat, int levels = 8,
                                                const Normalization& norm = {}) {
  if (set.size() == 0) throw Error(ErrorKind::Precondition, "empty attribute training set");
  FieldArch arch = make_arch(FieldKind::Attr, width, levels);
  FieldModel model = init_params(arch, cfg.param_seed);
  AttributeObjective obj(set.points, set.colors, model.arch.encoding);
  AttributeCompression out;
  out.fit = fit(std::move(model), obj, cfg);
  out.compressed = compress_pipeline(out.fit.model, obj, b, qat, norm);
  return out;
}

/// Joint geometry + attribute model: a single 4-output field trained on
/// L_G + lambda_A L_A. `attr_set` supplies colored surface samples.
inline FitResult fit_joint(const FieldArch& geometry_arch, const TrainingSet& ts, const AttributeTrainingSet& attr_set,
                           const TrainConfig& cfg, bool truncate = true) {
  if (attr_set.size() == 0) throw Error(ErrorKind::Precondition, "joint training needs colored surface samples");
  FieldArch arch = geometry_arch;
  arch.output_dim = 4;
  FieldModel model = init_params(arch, cfg.param_seed);
  GeometryObjective geo(ts, model.arch.encoding, truncate);
  AttributeObjective attr(attr_set.points, attr_set.colors, model.arch.encoding, 1);
  JointObjective joint(geo, attr, cfg.lambda_a);
  return fit(std::move(model), joint, cfg);
}

}  // namespace nf3d
