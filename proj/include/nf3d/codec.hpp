#pragma once

#include "nf3d/attribute.hpp"
#include "nf3d/config.hpp"
#include "nf3d/field_oracle.hpp"

#include <chrono>
#include <random>

namespace nf3d {

/// Decides the distance kind for an input: explicit choice, else SDF for meshes and UDF
/// for point clouds. SDF on a point cloud is a configuration error.
inline FieldKind resolve_kind(const RunConfig& cfg, const Shape& shape) {
  const bool mesh = std::holds_alternative<TriMesh>(shape);
  if (cfg.kind == "sdf") {
    if (!mesh) throw Error(ErrorKind::Config, "kind sdf requires a watertight mesh input, got a point cloud");
    return FieldKind::Sdf;
  }
  if (cfg.kind == "udf") return FieldKind::Udf;
  if (cfg.kind != "auto") throw Error(ErrorKind::Config, "unknown kind '" + cfg.kind + "'");
  return mesh ? FieldKind::Sdf : FieldKind::Udf;
}

inline bool shape_has_colors(const Shape& shape) {
  const auto* pc = std::get_if<PointCloud>(&shape);
  return pc && pc->has_colors();
}

/// Whether a separate (or joint) attribute model is trained for this input.
inline bool resolve_attributes(const RunConfig& cfg, const Shape& shape) {
  const bool colors = shape_has_colors(shape);
  if (cfg.attributes == "on" && !colors)
    throw Error(ErrorKind::Config, "attribute compression requested but the input carries no colors");
  if (cfg.joint && !colors) throw Error(ErrorKind::Config, "joint mode requires a colored point cloud");
  if (cfg.attributes == "off") return false;
  return colors;
}

/// Rejects invalid combinations before any work starts.
inline void validate_for_input(const RunConfig& cfg, const Shape& shape) {
  validate(cfg);
  resolve_kind(cfg, shape);
  resolve_attributes(cfg, shape);
}

inline FieldArch geometry_arch(const RunConfig& cfg, FieldKind kind, int width) {
  FieldArch a;
  a.kind = kind;
  a.encoding.levels = cfg.levels;
  a.encoding.sigma_p = cfg.sigma_p;
  a.hidden_width = width;
  a.num_hidden = cfg.num_hidden;
  a.omega0 = cfg.omega0;
  a.d_star = cfg.d_star;
  a.head = parse_head(cfg.head);
  return a;
}

inline TrainConfig train_config(const RunConfig& cfg, std::uint64_t param_seed) {
  TrainConfig t;
  t.lr = cfg.lr;
  t.epochs = cfg.epochs;
  t.batch_size = cfg.batch_size;
  t.lambda_l1 = cfg.lambda_l1;
  t.lambda_a = cfg.lambda_a;
  t.param_seed = param_seed;
  return t;
}

inline QatConfig qat_config(const RunConfig& cfg, std::uint64_t param_seed) {
  QatConfig q;
  q.epochs = cfg.qat_epochs;
  q.lr = cfg.qat_lr;
  q.batch_size = cfg.batch_size;
  q.lambda_l1 = cfg.lambda_l1;
  q.param_seed = param_seed;
  return q;
}

/// Fills unset seeds from std::random_device. Returns true if any seed was drawn.
inline bool resolve_seeds(RunConfig& cfg) {
  bool drawn = false;
  std::random_device rd;
  auto draw = [&] { return (std::uint64_t(rd()) << 32) ^ std::uint64_t(rd()); };
  if (!cfg.seed_params) cfg.seed_params = draw(), drawn = true;
  if (!cfg.seed_data) cfg.seed_data = draw(), drawn = true;
  return drawn;
}

/// Input shape moved into the unit ball plus the resolved field kind.
struct PreparedInput {
  Shape shape;
  Normalization norm;
  FieldKind kind = FieldKind::Sdf;
  bool attributes = false;
};

inline PreparedInput prepare_input(const Shape& input, const RunConfig& cfg) {
  validate_for_input(cfg, input);
  PreparedInput p;
  p.kind = resolve_kind(cfg, input);
  p.attributes = resolve_attributes(cfg, input);
  p.shape = input;
  p.norm = normalize(p.shape);
  return p;
}

struct EncodeOutput {
  CompressedField geometry;
  std::optional<CompressedField> attributes;
  FieldModel geometry_model;                  // decoder-side (dequantized) geometry model
  std::optional<FieldModel> attribute_model;  // decoder-side attribute model
  FieldModel trained;                         // full-precision model before compression
  std::vector<double> loss_history;
  Normalization norm;
  double seconds = 0.0;

  std::size_t total_bytes() const {
    return geometry.total_size_bytes() + (attributes ? attributes->total_size_bytes() : 0);
  }
};

/// Full encoder: sample supervision, fit, compress the geometry; then (sequential mode)
/// decode the geometry, build the color set on it and compress a separate attribute
/// model. Seeds must be resolved.
inline EncodeOutput encode_shape(const PreparedInput& in, const RunConfig& cfg, int width, int bitwidth) {
  if (!cfg.seed_params || !cfg.seed_data) throw Error(ErrorKind::Precondition, "seeds must be resolved before encoding");
  const auto t0 = std::chrono::steady_clock::now();
  const std::uint64_t ps = *cfg.seed_params, ds = *cfg.seed_data;
  const double sigma = cfg.sigma < 0 ? default_sigma(in.kind) : cfg.sigma;

  const GroundTruthField field(in.shape, in.kind, cfg.d_star);
  const TrainingSet ts = build_training_set(field, in.shape, cfg.m_total, sigma, ds);
  const FieldArch arch = geometry_arch(cfg, in.kind, width);
  const TrainConfig tc = train_config(cfg, ps);

  EncodeOutput out;
  out.norm = in.norm;
  if (cfg.joint) {
    const auto& pc = std::get<PointCloud>(in.shape);
    AttributeTrainingSet colored{pc.points, pc.colors};
    FitResult fr = fit_joint(arch, ts, colored, tc, cfg.truncate);
    GeometryObjective geo(ts, fr.model.arch.encoding, cfg.truncate);
    AttributeObjective attr(colored.points, colored.colors, fr.model.arch.encoding, 1);
    JointObjective joint(geo, attr, cfg.lambda_a);
    CompressionResult cr = compress_pipeline(fr.model, joint, bitwidth, qat_config(cfg, ps), in.norm);
    out.geometry = std::move(cr.stream);
    out.geometry_model = dequantize(cr.quantized);
    out.trained = std::move(fr.model);
    out.loss_history = std::move(fr.loss_history);
  } else {
    FieldModel model = init_params(arch, ps);
    GeometryObjective geo(ts, model.arch.encoding, cfg.truncate);
    FitResult fr = fit(std::move(model), geo, tc);
    CompressionResult cr = compress_pipeline(fr.model, geo, bitwidth, qat_config(cfg, ps), in.norm);
    out.geometry = std::move(cr.stream);
    out.geometry_model = dequantize(cr.quantized);
    out.trained = std::move(fr.model);
    out.loss_history = std::move(fr.loss_history);

    if (in.attributes) {
      const TriMesh decoded = extract_mesh(out.geometry_model, cfg.r_mc);
      const AttributeTrainingSet set =
          build_attribute_set(decoded, std::get<PointCloud>(in.shape), cfg.attr_m, mix_seed(ds, 0xc010));
      const TrainConfig atc = train_config(cfg, mix_seed(ps, 0xc010));
      AttributeCompression ac =
          compress_attributes(set, cfg.attr_width, atc, bitwidth, qat_config(cfg, mix_seed(ps, 0xc010)),
                              cfg.attr_levels, in.norm);
      out.attributes = std::move(ac.compressed.stream);
      out.attribute_model = dequantize(ac.compressed.quantized);
    }
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

/// Sibling path of the attribute stream: "x.nf3d" -> "x.attr.nf3d".
inline std::filesystem::path attribute_path(const std::filesystem::path& geometry) {
  auto p = geometry;
  p.replace_extension();
  p += ".attr.nf3d";
  return p;
}

/// Mesh of a geometry model in normalized coordinates.
inline TriMesh decode_mesh(const FieldModel& geometry, int r_mc) {
  if (geometry.arch.kind == FieldKind::Attr)
    throw Error(ErrorKind::Precondition, "stream holds an attribute field, not geometry");
  return drop_degenerate(extract_mesh(geometry, r_mc));
}

/// Point cloud in the frame given by `norm`. Colors come from the separate attribute
/// model if given, else from a joint geometry model.
inline PointCloud decode_cloud(const TriMesh& normalized_mesh, const FieldModel& geometry,
                               const FieldModel* attributes, std::size_t n, const Normalization& norm,
                               std::uint64_t seed) {
  const FieldModel* colors = attributes;
  if (!colors && geometry.arch.output_dim == 4) colors = &geometry;
  return decode_to_pointcloud(normalized_mesh, n, norm, colors, seed);
}

/// Seed of the decoder-side surface sampling; a fixed constant so decoding is a pure
/// function of the bitstream.
inline constexpr std::uint64_t kDecodeSeed = 0xdec0de;

}  // namespace nf3d
