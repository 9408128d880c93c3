#pragma once

#include "nf3d/geometry.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

namespace nf3d {

/// Closest point on triangle (a, b, c) to p by Voronoi-region classification
/// (vertex, edge and face regions).
inline Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return a;

  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return b;

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + (d1 / (d1 - d3)) * ab;

  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return c;

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + (d2 / (d2 - d6)) * ac;

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);

  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom, w = vc * denom;
  return a + ab * v + ac * w;
}

inline double point_triangle_distance_squared(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  return (p - closest_point_on_triangle(p, a, b, c)).squaredNorm();
}

enum class RayHit { Miss, Hit, Ambiguous };

/// Moller-Trumbore, counting only hits with t > 0. Hits within `tol` of an edge or
/// vertex, and rays coplanar with the triangle, are reported as ambiguous.
inline RayHit ray_triangle(const Vec3& o, const Vec3& d, const Vec3& a, const Vec3& b, const Vec3& c,
                           double tol = 1e-12) {
  const Vec3 e1 = b - a, e2 = c - a;
  const Vec3 pv = d.cross(e2);
  const double det = e1.dot(pv);
  const Vec3 tv = o - a;
  if (std::abs(det) < 1e-300) {
    // parallel: ambiguous only if the ray lies in the triangle's plane
    const Vec3 n = e1.cross(e2);
    if (n.squaredNorm() == 0.0) return RayHit::Miss;  // zero-area face
    return std::abs(n.dot(tv)) <= tol * n.norm() ? RayHit::Ambiguous : RayHit::Miss;
  }
  const double inv = 1.0 / det;
  const double u = tv.dot(pv) * inv;
  const Vec3 qv = tv.cross(e1);
  const double v = d.dot(qv) * inv;
  const double t = e2.dot(qv) * inv;
  const double w = 1.0 - u - v;
  if (u < -tol || v < -tol || w < -tol) return RayHit::Miss;
  if (t <= 0) return RayHit::Miss;
  if (u <= tol || v <= tol || w <= tol) return RayHit::Ambiguous;
  return RayHit::Hit;
}

/// Axis-aligned bounding-volume hierarchy over the triangles of a mesh.
class TriangleBvh {
 public:
  TriangleBvh() = default;

  explicit TriangleBvh(const TriMesh& mesh) : mesh_(mesh) {
    const auto n = mesh_.triangles.size();
    order_.resize(n);
    std::iota(order_.begin(), order_.end(), 0u);
    centroids_.resize(n);
    for (std::size_t f = 0; f < n; ++f) {
      const auto& t = mesh_.triangles[f];
      centroids_[f] = (vtx(t[0]) + vtx(t[1]) + vtx(t[2])) / 3.0;
    }
    if (n > 0) build(0, static_cast<std::uint32_t>(n));
  }

  const TriMesh& mesh() const { return mesh_; }
  bool empty() const { return mesh_.triangles.empty(); }

  struct Closest {
    double distance_squared = std::numeric_limits<double>::infinity();
    std::uint32_t face = 0;
  };

  Closest closest(const Vec3& p) const {
    if (empty()) throw Error(ErrorKind::Precondition, "closest() on an empty mesh");
    Closest best;
    closest_rec(0, p, best);
    return best;
  }

  /// Number of triangles crossed by the ray o + t d (t > 0), or nullopt if any
  /// crossing is too close to an edge or vertex to count reliably.
  std::optional<std::size_t> count_crossings(const Vec3& o, const Vec3& d) const {
    std::size_t count = 0;
    bool ambiguous = false;
    const Vec3 inv(1.0 / d.x(), 1.0 / d.y(), 1.0 / d.z());
    ray_rec(0, o, d, inv, count, ambiguous);
    if (ambiguous) return std::nullopt;
    return count;
  }

 private:
  static constexpr std::uint32_t kLeafSize = 4;

  struct Node {
    Eigen::AlignedBox3d box;
    std::uint32_t begin = 0, end = 0;
    std::int32_t left = -1, right = -1;
    bool leaf() const { return left < 0; }
  };

  const Vec3& vtx(std::uint32_t i) const { return mesh_.vertices[i]; }

  std::int32_t build(std::uint32_t begin, std::uint32_t end) {
    const auto idx = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back({});
    Eigen::AlignedBox3d box, cbox;
    for (auto i = begin; i < end; ++i) {
      const auto& t = mesh_.triangles[order_[i]];
      for (auto v : t) box.extend(vtx(v));
      cbox.extend(centroids_[order_[i]]);
    }
    nodes_[idx].box = box;
    nodes_[idx].begin = begin;
    nodes_[idx].end = end;
    if (end - begin <= kLeafSize) return idx;
    int dim = 0;
    cbox.sizes().maxCoeff(&dim);
    const auto mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) { return centroids_[a][dim] < centroids_[b][dim]; });
    const auto l = build(begin, mid);
    const auto r = build(mid, end);
    nodes_[idx].left = l;
    nodes_[idx].right = r;
    return idx;
  }

  void closest_rec(std::int32_t ni, const Vec3& p, Closest& best) const {
    const Node& n = nodes_[ni];
    if (n.leaf()) {
      for (auto i = n.begin; i < n.end; ++i) {
        const auto f = order_[i];
        const auto& t = mesh_.triangles[f];
        const double d2 = point_triangle_distance_squared(p, vtx(t[0]), vtx(t[1]), vtx(t[2]));
        if (d2 < best.distance_squared || (d2 == best.distance_squared && f < best.face)) best = {d2, f};
      }
      return;
    }
    const double dl = nodes_[n.left].box.squaredExteriorDistance(p);
    const double dr = nodes_[n.right].box.squaredExteriorDistance(p);
    const bool left_first = dl <= dr;
    const auto first = left_first ? n.left : n.right;
    const auto second = left_first ? n.right : n.left;
    const double d_first = left_first ? dl : dr;
    const double d_second = left_first ? dr : dl;
    if (d_first <= best.distance_squared) closest_rec(first, p, best);
    if (d_second <= best.distance_squared) closest_rec(second, p, best);
  }

  static bool slab(const Eigen::AlignedBox3d& box, const Vec3& o, const Vec3& inv) {
    double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 3; ++k) {
      double a = (box.min()[k] - o[k]) * inv[k];
      double b = (box.max()[k] - o[k]) * inv[k];
      if (a > b) std::swap(a, b);
      // NaN from 0 * inf (origin on a slab plane with an axis-parallel ray) keeps the box
      if (!(a <= t1) || !(b >= t0)) {
        if (std::isnan(a) || std::isnan(b)) continue;
        return false;
      }
      t0 = std::max(t0, a);
      t1 = std::min(t1, b);
    }
    return t0 <= t1 * (1.0 + 1e-12) + 1e-12;
  }

  void ray_rec(std::int32_t ni, const Vec3& o, const Vec3& d, const Vec3& inv, std::size_t& count,
               bool& ambiguous) const {
    const Node& n = nodes_[ni];
    if (!slab(n.box, o, inv)) return;
    if (n.leaf()) {
      for (auto i = n.begin; i < n.end; ++i) {
        const auto& t = mesh_.triangles[order_[i]];
        switch (ray_triangle(o, d, vtx(t[0]), vtx(t[1]), vtx(t[2]))) {
          case RayHit::Hit: ++count; break;
          case RayHit::Ambiguous: ambiguous = true; break;
          case RayHit::Miss: break;
        }
      }
      return;
    }
    ray_rec(n.left, o, d, inv, count, ambiguous);
    ray_rec(n.right, o, d, inv, count, ambiguous);
  }

  TriMesh mesh_;
  std::vector<std::uint32_t> order_;
  std::vector<Vec3> centroids_;
  std::vector<Node> nodes_;
};

}  // namespace nf3d
