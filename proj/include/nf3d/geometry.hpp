#pragma once

#include "nf3d/common.hpp"

#include <array>
#include <cmath>
#include <map>
#include <random>
#include <span>
#include <variant>
#include <vector>

namespace nf3d {

/// Points with optional per-point RGB in [-1, 1], aligned 1:1 with points.
struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> colors;

  bool has_colors() const { return !colors.empty(); }
  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

using Triangle = std::array<std::uint32_t, 3>;

struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;

  bool empty() const { return triangles.empty(); }
};

using Shape = std::variant<TriMesh, PointCloud>;

/// Similarity transform into the unit ball: x' = (x - center) / scale.
struct Normalization {
  Vec3 center = Vec3::Zero();
  double scale = 1.0;

  Vec3 apply(const Vec3& x) const { return (x - center) / scale; }
  Vec3 invert(const Vec3& x) const { return x * scale + center; }

  friend bool operator==(const Normalization&, const Normalization&) = default;
};

inline double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  return 0.5 * (b - a).cross(c - a).norm();
}

inline double triangle_area(const TriMesh& mesh, const Triangle& t) {
  return triangle_area(mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]);
}

inline void validate(const TriMesh& mesh) {
  const auto n = mesh.vertices.size();
  for (std::size_t f = 0; f < mesh.triangles.size(); ++f) {
    for (auto idx : mesh.triangles[f]) {
      if (idx >= n) {
        throw Error(ErrorKind::Parse, "triangle " + std::to_string(f) + " references vertex " +
                                          std::to_string(idx) + " but mesh has " + std::to_string(n) +
                                          " vertices (index out of range)");
      }
    }
  }
  for (const auto& v : mesh.vertices)
    if (!v.allFinite()) throw Error(ErrorKind::Parse, "non-finite vertex coordinate");
}

inline void validate(const PointCloud& pc) {
  if (pc.has_colors() && pc.colors.size() != pc.points.size())
    throw Error(ErrorKind::Parse, "color count does not match point count");
  for (const auto& p : pc.points)
    if (!p.allFinite()) throw Error(ErrorKind::Parse, "non-finite point coordinate");
}

namespace detail {

inline Normalization fit_normalization(std::span<const Vec3> pts) {
  if (pts.empty()) throw Error(ErrorKind::Degenerate, "cannot normalize an empty shape");
  Vec3 c = Vec3::Zero();
  for (const auto& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  double r = 0.0;
  for (const auto& p : pts) r = std::max(r, (p - c).norm());
  if (!(r > 0.0)) throw Error(ErrorKind::Degenerate, "degenerate shape: all points coincide");
  return {c, r};
}

}  // namespace detail

/// Centers on the centroid and scales so the farthest point has unit norm.
inline Normalization normalize(PointCloud& pc) {
  auto n = detail::fit_normalization(pc.points);
  for (auto& p : pc.points) p = n.apply(p);
  return n;
}

inline Normalization normalize(TriMesh& mesh) {
  auto n = detail::fit_normalization(mesh.vertices);
  for (auto& v : mesh.vertices) v = n.apply(v);
  return n;
}

inline void denormalize(PointCloud& pc, const Normalization& n) {
  for (auto& p : pc.points) p = n.invert(p);
}

inline void denormalize(TriMesh& mesh, const Normalization& n) {
  for (auto& v : mesh.vertices) v = n.invert(v);
}

inline Normalization normalize(Shape& shape) {
  return std::visit([](auto& s) { return normalize(s); }, shape);
}

/// Area-weighted sampler over the non-degenerate triangles of a mesh.
class SurfaceSampler {
 public:
  explicit SurfaceSampler(const TriMesh& mesh) : mesh_(&mesh) {
    double acc = 0.0;
    for (std::size_t f = 0; f < mesh.triangles.size(); ++f) {
      double a = triangle_area(mesh, mesh.triangles[f]);
      if (!(a > 1e-300)) continue;  // zero-area faces stay in the mesh, not in the CDF
      acc += a;
      cdf_.push_back(acc);
      faces_.push_back(static_cast<std::uint32_t>(f));
    }
    total_ = acc;
  }

  bool empty() const { return faces_.empty(); }
  double total_area() const { return total_; }

  /// Returns (point, face index).
  template <typename Rng>
  std::pair<Vec3, std::uint32_t> sample(Rng& rng) const {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const double u = uni(rng) * total_;
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(it - cdf_.begin()), faces_.size() - 1);
    const auto& t = mesh_->triangles[faces_[k]];
    const double r1 = std::sqrt(uni(rng));
    const double r2 = uni(rng);
    const Vec3& a = mesh_->vertices[t[0]];
    const Vec3& b = mesh_->vertices[t[1]];
    const Vec3& c = mesh_->vertices[t[2]];
    return {(1.0 - r1) * a + r1 * (1.0 - r2) * b + r1 * r2 * c, faces_[k]};
  }

 private:
  const TriMesh* mesh_;
  std::vector<double> cdf_;
  std::vector<std::uint32_t> faces_;
  double total_ = 0.0;
};

/// Draws n points uniformly by area. Deterministic in seed.
inline PointCloud sample_surface(const TriMesh& mesh, std::size_t n, std::uint64_t seed) {
  PointCloud out;
  if (n == 0) return out;
  SurfaceSampler sampler(mesh);
  if (sampler.empty()) throw Error(ErrorKind::Degenerate, "mesh has no triangle with positive area");
  std::mt19937_64 rng(seed);
  out.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.points.push_back(sampler.sample(rng).first);
  return out;
}

/// Geodesic sphere built by midpoint subdivision of an icosahedron; 20 * 4^k triangles.
inline TriMesh make_icosphere(double radius, int subdivisions, const Vec3& center = Vec3::Zero()) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  TriMesh m;
  m.vertices = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& v : m.vertices) v.normalize();
  m.triangles = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                 {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                 {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> mid;
    auto midpoint = [&](std::uint32_t a, std::uint32_t b) {
      auto key = std::minmax(a, b);
      auto it = mid.find(key);
      if (it != mid.end()) return it->second;
      m.vertices.push_back((m.vertices[a] + m.vertices[b]).normalized());
      auto id = static_cast<std::uint32_t>(m.vertices.size() - 1);
      mid.emplace(key, id);
      return id;
    };
    std::vector<Triangle> next;
    next.reserve(m.triangles.size() * 4);
    for (const auto& tri : m.triangles) {
      auto ab = midpoint(tri[0], tri[1]);
      auto bc = midpoint(tri[1], tri[2]);
      auto ca = midpoint(tri[2], tri[0]);
      next.push_back({tri[0], ab, ca});
      next.push_back({tri[1], bc, ab});
      next.push_back({tri[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    m.triangles = std::move(next);
  }
  for (auto& v : m.vertices) v = center + radius * v;
  return m;
}

}  // namespace nf3d
