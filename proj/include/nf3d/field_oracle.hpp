#pragma once

#include "nf3d/bvh.hpp"
#include "nf3d/kdtree.hpp"

#include <array>
#include <cmath>
#include <variant>

namespace nf3d {

/// sgn(d) * min(|d|, d_star).
inline double truncate_target(double d, double d_star) {
  const double m = std::min(std::abs(d), d_star);
  return d < 0 ? -m : (d > 0 ? m : 0.0);
}

/// Exact distance-to-surface queries for a mesh or point cloud.
///
/// Point clouds give the unsigned nearest-neighbour distance. Meshes give the exact
/// point-to-triangle distance; with kind == Sdf the sign is negative inside, decided by
/// a majority vote of crossing parity along three fixed rays. Meant for watertight
/// meshes only.
class GroundTruthField {
 public:
  GroundTruthField(const TriMesh& mesh, FieldKind kind, double d_star)
      : kind_(kind), d_star_(d_star), bvh_(mesh) {
    check(kind, d_star);
  }

  GroundTruthField(const PointCloud& pc, FieldKind kind, double d_star)
      : kind_(kind), d_star_(d_star), kd_(pc.points), is_mesh_(false) {
    check(kind, d_star);
    if (kind == FieldKind::Sdf)
      throw Error(ErrorKind::Unsupported, "signed distance requires a watertight mesh, got a point cloud");
    if (pc.empty()) throw Error(ErrorKind::Precondition, "empty point cloud");
  }

  GroundTruthField(const Shape& shape, FieldKind kind, double d_star)
      : GroundTruthField(std::holds_alternative<TriMesh>(shape)
                             ? GroundTruthField(std::get<TriMesh>(shape), kind, d_star)
                             : GroundTruthField(std::get<PointCloud>(shape), kind, d_star)) {}

  FieldKind kind() const { return kind_; }
  double d_star() const { return d_star_; }
  bool is_mesh() const { return is_mesh_; }

  double distance(const Vec3& x) const {
    if (!is_mesh_) return kd_.nearest(x).distance;
    const double d = std::sqrt(bvh_.closest(x).distance_squared);
    if (kind_ == FieldKind::Sdf && inside(x)) return -d;
    return d;
  }

  double truncated(const Vec3& x) const { return truncate_target(distance(x), d_star_); }

  /// Ray-parity inside test; majority of three rays.
  bool inside(const Vec3& x) const {
    static const std::array<Vec3, 3> kDirs = {Vec3(0.5773502691896258, 0.5924616551541434, 0.5619852190418013),
                                              Vec3(-0.3141592653589793, 0.8660254037844386, -0.3884375127357393),
                                              Vec3(0.7071067811865476, -0.2718281828459045, -0.6527887541131312)};
    int votes_in = 0, votes = 0;
    for (std::size_t r = 0; r < kDirs.size(); ++r) {
      Vec3 dir = kDirs[r].normalized();
      for (int attempt = 0; attempt <= kMaxRetries; ++attempt) {
        auto hits = bvh_.count_crossings(x, dir);
        if (hits) {
          ++votes;
          votes_in += (*hits % 2 == 1) ? 1 : 0;
          break;
        }
        // deterministic perturbation of the direction, then recast
        const auto h = mix_seed(r * 131 + static_cast<std::uint64_t>(attempt), 0x5eed);
        Vec3 jitter(double(h & 0xffff) / 65535.0 - 0.5, double((h >> 16) & 0xffff) / 65535.0 - 0.5,
                    double((h >> 32) & 0xffff) / 65535.0 - 0.5);
        dir = (dir + 1e-3 * jitter).normalized();
      }
    }
    return votes > 0 && 2 * votes_in > votes;
  }

 private:
  static constexpr int kMaxRetries = 8;

  static void check(FieldKind kind, double d_star) {
    if (kind == FieldKind::Attr) throw Error(ErrorKind::Precondition, "ground-truth field must be UDF or SDF");
    if (!(d_star > 0)) throw Error(ErrorKind::Precondition, "truncation distance must be positive");
  }

  FieldKind kind_;
  double d_star_;
  TriangleBvh bvh_;
  KdTree kd_;
  bool is_mesh_ = true;
};

}  // namespace nf3d
