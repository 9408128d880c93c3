#pragma once

#include "nf3d/field_oracle.hpp"

#include <filesystem>
#include <fstream>
#include <random>

namespace nf3d {

/// Fixed supervision set: points with their exact distance d_S and the truncated
/// target sgn(d_S) min(|d_S|, d*).
struct TrainingSet {
  std::vector<Vec3> points;
  std::vector<double> distances;
  std::vector<double> targets;
  double d_star = 0.1;
  double sigma = 0.0;
  std::uint64_t seed = 0;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

/// Split of m_total into (uniform, surface, perturbed) counts.
struct MixtureCounts {
  std::size_t uniform, surface, perturbed;
};

inline MixtureCounts mixture_counts(std::size_t m_total) {
  const std::size_t uniform = (m_total * 2) / 10;
  const std::size_t surface = (m_total * 4 + 9) / 10;
  return {uniform, surface, m_total - uniform - surface};
}

inline double default_sigma(FieldKind kind) { return kind == FieldKind::Sdf ? 0.01 : 0.025; }

namespace detail {

template <typename Rng>
Vec3 draw_surface_point(const Shape& surface, const SurfaceSampler* sampler, Rng& rng) {
  if (sampler) return sampler->sample(rng).first;
  const auto& pc = std::get<PointCloud>(surface);
  std::uniform_int_distribution<std::size_t> pick(0, pc.size() - 1);
  return pc.points[pick(rng)];
}

}  // namespace detail

/// Draws the 20/40/40 mixture (uniform cube / surface / surface + N(0, sigma^2 I)) and
/// labels every point with the ground-truth field. Each bucket uses its own RNG stream
/// derived from `seed`, so the result does not depend on labeling parallelism.
inline TrainingSet build_training_set(const GroundTruthField& field, const Shape& surface, std::size_t m_total,
                                      double sigma, std::uint64_t seed) {
  if (m_total < 10) throw Error(ErrorKind::Precondition, "training set needs at least 10 samples");
  if (!(sigma >= 0)) throw Error(ErrorKind::Precondition, "sigma must be non-negative");

  std::optional<SurfaceSampler> sampler;
  if (const auto* mesh = std::get_if<TriMesh>(&surface)) {
    sampler.emplace(*mesh);
    if (sampler->empty()) throw Error(ErrorKind::Degenerate, "mesh has no triangle with positive area");
  } else if (std::get<PointCloud>(surface).empty()) {
    throw Error(ErrorKind::Precondition, "empty point cloud");
  }
  const SurfaceSampler* sp = sampler ? &*sampler : nullptr;

  TrainingSet ts;
  ts.d_star = field.d_star();
  ts.sigma = sigma;
  ts.seed = seed;
  const auto counts = mixture_counts(m_total);
  ts.points.reserve(m_total);

  std::mt19937_64 uniform_rng(mix_seed(seed, 1));
  std::uniform_real_distribution<double> cube(-1.0, 1.0);
  for (std::size_t i = 0; i < counts.uniform; ++i) {
    const double x = cube(uniform_rng), y = cube(uniform_rng), z = cube(uniform_rng);
    ts.points.emplace_back(x, y, z);
  }

  std::mt19937_64 surface_rng(mix_seed(seed, 2));
  for (std::size_t i = 0; i < counts.surface; ++i) ts.points.push_back(detail::draw_surface_point(surface, sp, surface_rng));

  // sources and noise come from separate streams so the sources do not depend on sigma
  std::mt19937_64 source_rng(mix_seed(seed, 3));
  std::mt19937_64 noise_rng(mix_seed(seed, 4));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < counts.perturbed; ++i) {
    Vec3 p = detail::draw_surface_point(surface, sp, source_rng);
    const double nx = normal(noise_rng), ny = normal(noise_rng), nz = normal(noise_rng);
    ts.points.push_back(p + sigma * Vec3(nx, ny, nz));
  }

  ts.distances.resize(m_total);
  ts.targets.resize(m_total);
  parallel_chunks(m_total, 4096, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      ts.distances[i] = field.distance(ts.points[i]);
      ts.targets[i] = truncate_target(ts.distances[i], ts.d_star);
    }
  });
  return ts;
}

/// Flat little-endian f32 records (x, y, z, target).
inline void dump_training_set(const std::filesystem::path& path, const TrainingSet& ts) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Parse, "cannot write '" + path.string() + "'");
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const float rec[4] = {float(ts.points[i].x()), float(ts.points[i].y()), float(ts.points[i].z()),
                          float(ts.targets[i])};
    out.write(reinterpret_cast<const char*>(rec), sizeof(rec));
  }
}

/// Inverse of dump_training_set. The exact distances are not stored, so they are
/// restored as the truncated targets.
inline TrainingSet load_training_set(const std::filesystem::path& path, double d_star) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Parse, "cannot open '" + path.string() + "'");
  TrainingSet ts;
  ts.d_star = d_star;
  float rec[4];
  while (in.read(reinterpret_cast<char*>(rec), sizeof(rec))) {
    ts.points.emplace_back(rec[0], rec[1], rec[2]);
    ts.targets.push_back(rec[3]);
    ts.distances.push_back(rec[3]);
  }
  if (in.gcount() != 0) throw Error(ErrorKind::Parse, "training-set dump length is not a multiple of 16 bytes");
  return ts;
}

}  // namespace nf3d
