#pragma once

#include "nf3d/common.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

namespace nf3d {

struct NearestResult {
  double distance = std::numeric_limits<double>::infinity();
  std::uint32_t id = 0;
};

/// Balanced 3-d tree over a point set. Exact Euclidean nearest neighbour; among
/// equidistant points the smallest id wins.
class KdTree {
 public:
  KdTree() = default;

  explicit KdTree(std::span<const Vec3> points) : pts_(points.begin(), points.end()) {
    order_.resize(pts_.size());
    std::iota(order_.begin(), order_.end(), 0u);
    if (!pts_.empty()) {
      nodes_.reserve(2 * pts_.size() / kLeafSize + 2);
      build(0, static_cast<std::uint32_t>(pts_.size()));
    }
  }

  std::size_t size() const { return pts_.size(); }
  bool empty() const { return pts_.empty(); }
  const Vec3& point(std::size_t i) const { return pts_[i]; }

  NearestResult nearest(const Vec3& q) const {
    if (pts_.empty()) throw Error(ErrorKind::Precondition, "nearest() on an empty index");
    Best best;
    search(0, q, best);
    return {std::sqrt(best.d2), best.id};
  }

  /// Squared distance variant; avoids the sqrt for metric accumulation.
  std::pair<double, std::uint32_t> nearest_squared(const Vec3& q) const {
    if (pts_.empty()) throw Error(ErrorKind::Precondition, "nearest() on an empty index");
    Best best;
    search(0, q, best);
    return {best.d2, best.id};
  }

 private:
  static constexpr std::uint32_t kLeafSize = 8;

  struct Node {
    std::uint32_t begin = 0, end = 0;  // leaf range into order_
    std::int32_t left = -1, right = -1;
    int dim = 0;
    double split = 0.0;
    bool leaf() const { return left < 0; }
  };

  struct Best {
    double d2 = std::numeric_limits<double>::infinity();
    std::uint32_t id = std::numeric_limits<std::uint32_t>::max();
    void offer(double d, std::uint32_t i) {
      if (d < d2 || (d == d2 && i < id)) {
        d2 = d;
        id = i;
      }
    }
  };

  std::int32_t build(std::uint32_t begin, std::uint32_t end) {
    const auto idx = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back({begin, end, -1, -1, 0, 0.0});
    if (end - begin <= kLeafSize) return idx;
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (auto i = begin; i < end; ++i) {
      lo = lo.cwiseMin(pts_[order_[i]]);
      hi = hi.cwiseMax(pts_[order_[i]]);
    }
    int dim = 0;
    (hi - lo).maxCoeff(&dim);
    const auto mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) { return pts_[a][dim] < pts_[b][dim]; });
    const double split = pts_[order_[mid]][dim];
    const auto l = build(begin, mid);
    const auto r = build(mid, end);
    auto& n = nodes_[idx];
    n.left = l;
    n.right = r;
    n.dim = dim;
    n.split = split;
    return idx;
  }

  void search(std::int32_t ni, const Vec3& q, Best& best) const {
    const Node& n = nodes_[ni];
    if (n.leaf()) {
      for (auto i = n.begin; i < n.end; ++i) {
        const auto id = order_[i];
        best.offer((pts_[id] - q).squaredNorm(), id);
      }
      return;
    }
    // left subtree holds coordinates <= split, right holds >= split
    const double diff = q[n.dim] - n.split;
    const auto first = diff <= 0 ? n.left : n.right;
    const auto second = diff <= 0 ? n.right : n.left;
    search(first, q, best);
    if (diff * diff <= best.d2) search(second, q, best);
  }

  std::vector<Vec3> pts_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace nf3d
