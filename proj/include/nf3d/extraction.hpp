#pragma once

#include "nf3d/geometry.hpp"
#include "nf3d/mc_tables.hpp"
#include "nf3d/neural_field.hpp"

#include <deque>
#include <random>
#include <unordered_map>

namespace nf3d {

/// Scalar samples on the regular lattice over [-1, 1]^3; point (i, j, k) sits at
/// -1 + (i, j, k) h with h = 2 / (r - 1). Storage is x-fastest.
struct FieldGrid {
  int resolution = 0;
  std::vector<double> values;
  std::vector<Vec3> gradients;  // empty unless requested

  double spacing() const { return 2.0 / double(resolution - 1); }
  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(resolution) * (static_cast<std::size_t>(j) + static_cast<std::size_t>(resolution) * k);
  }
  Vec3 position(int i, int j, int k) const {
    const double h = spacing();
    return {-1.0 + i * h, -1.0 + j * h, -1.0 + k * h};
  }
  Vec3 position(std::size_t idx) const {
    const auto r = static_cast<std::size_t>(resolution);
    return position(int(idx % r), int((idx / r) % r), int(idx / (r * r)));
  }
  bool has_gradients() const { return !gradients.empty(); }
};

inline void check_resolution(int r) {
  if (r < 8) throw Error(ErrorKind::Config, "marching-cubes resolution must be >= 8");
}

/// Samples an arbitrary field. `value(x)` returns the scalar, `gradient(x)` its gradient
/// (only called when with_gradients is set).
template <typename ValueFn, typename GradFn>
FieldGrid evaluate_grid(ValueFn&& value, GradFn&& gradient, int r, bool with_gradients) {
  check_resolution(r);
  FieldGrid g;
  g.resolution = r;
  const std::size_t n = std::size_t(r) * r * r;
  g.values.resize(n);
  if (with_gradients) g.gradients.resize(n);
  parallel_chunks(n, 4096, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const Vec3 p = g.position(i);
      g.values[i] = value(p);
      if (with_gradients) g.gradients[i] = gradient(p);
    }
  });
  return g;
}

/// Samples output channel 0 of a distance model, optionally with exact input gradients.
inline FieldGrid evaluate_grid(const FieldModel& model, int r, bool with_gradients) {
  check_resolution(r);
  if (model.arch.kind == FieldKind::Attr)
    throw Error(ErrorKind::Precondition, "grid evaluation needs a UDF or SDF model");
  FieldGrid g;
  g.resolution = r;
  const std::size_t n = std::size_t(r) * r * r;
  g.values.resize(n);
  if (with_gradients) g.gradients.resize(n);
  parallel_chunks(n, 4096, [&](std::size_t b, std::size_t e) {
    Eigen::Matrix3Xd pts(3, static_cast<Eigen::Index>(e - b));
    for (std::size_t i = b; i < e; ++i) pts.col(static_cast<Eigen::Index>(i - b)) = g.position(i);
    if (with_gradients) {
      auto [val, grad] = value_and_input_gradient(model, pts);
      for (std::size_t i = b; i < e; ++i) {
        g.values[i] = val[static_cast<Eigen::Index>(i - b)];
        g.gradients[i] = grad.col(static_cast<Eigen::Index>(i - b));
      }
    } else {
      const Eigen::MatrixXd out = forward_batch(model, pts);
      for (std::size_t i = b; i < e; ++i) g.values[i] = out(0, static_cast<Eigen::Index>(i - b));
    }
  });
  return g;
}

namespace detail {

/// Marching cubes over a value array laid out like FieldGrid. A lattice point is inside
/// when its value is < iso. Vertices are shared across cells (one per cut lattice
/// edge) and numbered in order of first use while visiting cells in index order.
inline TriMesh marching_cubes(const FieldGrid& grid, const std::vector<double>& values, double iso) {
  const int r = grid.resolution;
  TriMesh mesh;
  std::unordered_map<std::uint64_t, std::uint32_t> edge_vertex;
  auto vertex_on = [&](std::size_t lo, std::size_t hi, int axis) {
    const std::uint64_t key = std::uint64_t(lo) * 3 + std::uint64_t(axis);
    auto it = edge_vertex.find(key);
    if (it != edge_vertex.end()) return it->second;
    const double vlo = values[lo], vhi = values[hi];
    const double t = (iso - vlo) / (vhi - vlo);
    const Vec3 plo = grid.position(lo), phi = grid.position(hi);
    Vec3 p = plo;
    p[axis] = plo[axis] + t * (phi[axis] - plo[axis]);
    const auto id = static_cast<std::uint32_t>(mesh.vertices.size());
    mesh.vertices.push_back(p);
    edge_vertex.emplace(key, id);
    return id;
  };

  for (int k = 0; k + 1 < r; ++k) {
    for (int j = 0; j + 1 < r; ++j) {
      for (int i = 0; i + 1 < r; ++i) {
        std::array<std::size_t, 8> idx;
        int cube = 0;
        for (int c = 0; c < 8; ++c) {
          const auto& o = mc::kCornerOffset[static_cast<std::size_t>(c)];
          idx[static_cast<std::size_t>(c)] = grid.index(i + o[0], j + o[1], k + o[2]);
          if (values[idx[static_cast<std::size_t>(c)]] < iso) cube |= 1 << c;
        }
        const auto edges = mc::kEdgeTable[static_cast<std::size_t>(cube)];
        if (edges == 0) continue;
        std::array<std::uint32_t, 12> vid{};
        for (int e = 0; e < 12; ++e) {
          if (!(edges & (1 << e))) continue;
          const auto& ec = mc::kEdgeCorners[static_cast<std::size_t>(e)];
          auto a = idx[static_cast<std::size_t>(ec[0])], b = idx[static_cast<std::size_t>(ec[1])];
          if (a > b) std::swap(a, b);
          const std::size_t diff = b - a;
          const int axis = diff == 1 ? 0 : (diff == static_cast<std::size_t>(r) ? 1 : 2);
          vid[static_cast<std::size_t>(e)] = vertex_on(a, b, axis);
        }
        const auto& tri = mc::kTriTable[static_cast<std::size_t>(cube)];
        for (int t = 0; tri[static_cast<std::size_t>(t)] != -1; t += 3)
          mesh.triangles.push_back({vid[static_cast<std::size_t>(tri[static_cast<std::size_t>(t)])],
                                    vid[static_cast<std::size_t>(tri[static_cast<std::size_t>(t + 2)])],
                                    vid[static_cast<std::size_t>(tri[static_cast<std::size_t>(t + 1)])]});
      }
    }
  }
  return mesh;
}

}  // namespace detail

/// Standard marching cubes with linear edge interpolation; triangles face toward
/// increasing values. Empty when the grid has no sign change.
inline TriMesh marching_cubes_sdf(const FieldGrid& grid, double iso = 0.0) {
  return detail::marching_cubes(grid, grid.values, iso);
}

/// Default crossing band for unsigned extraction: three lattice spacings.
inline double default_udf_band(const FieldGrid& grid) { return 3.0 * grid.spacing(); }

/// Per-lattice-point pseudo-signs for an unsigned field.
///
/// A lattice edge (u, v) is a surface crossing when both values are below `eps` and the
/// gradients oppose each other (g_u . g_v < 0). Signs spread breadth-first from the
/// corner (-1, -1, -1), taken as outside (+1): a crossing flips the sign, any other edge
/// keeps it. A newly reached point takes the majority over its already-signed
/// neighbours; ties go to the neighbour it was reached from.
inline std::vector<std::int8_t> pseudo_signs(const FieldGrid& grid, double eps) {
  if (!grid.has_gradients()) throw Error(ErrorKind::Precondition, "unsigned extraction needs grid gradients");
  const int r = grid.resolution;
  const std::size_t n = grid.values.size();
  std::vector<std::int8_t> sign(n, 0);
  auto crossing = [&](std::size_t u, std::size_t v) {
    return grid.values[u] < eps && grid.values[v] < eps && grid.gradients[u].dot(grid.gradients[v]) < 0.0;
  };
  auto for_each_neighbor = [&](std::size_t u, auto&& fn) {
    const auto ru = static_cast<std::size_t>(r);
    const int i = int(u % ru), j = int((u / ru) % ru), k = int(u / (ru * ru));
    if (i > 0) fn(u - 1);
    if (i + 1 < r) fn(u + 1);
    if (j > 0) fn(u - ru);
    if (j + 1 < r) fn(u + ru);
    if (k > 0) fn(u - ru * ru);
    if (k + 1 < r) fn(u + ru * ru);
  };
  std::deque<std::size_t> queue;
  sign[0] = 1;
  queue.push_back(0);
  while (!queue.empty()) {
    const std::size_t u = queue.front();
    queue.pop_front();
    for_each_neighbor(u, [&](std::size_t v) {
      if (sign[v] != 0) return;
      const int proposed = crossing(u, v) ? -sign[u] : sign[u];
      int vote = 0;
      for_each_neighbor(v, [&](std::size_t w) {
        if (sign[w] != 0) vote += crossing(w, v) ? -sign[w] : sign[w];
      });
      sign[v] = static_cast<std::int8_t>(vote > 0 ? 1 : (vote < 0 ? -1 : proposed));
      queue.push_back(v);
    });
  }
  return sign;
}

/// Marching cubes on an unsigned field via pseudo-signs; see pseudo_signs().
inline TriMesh marching_cubes_udf(const FieldGrid& grid, double eps) {
  const auto sign = pseudo_signs(grid, eps);
  std::vector<double> signed_values(grid.values.size());
  for (std::size_t i = 0; i < signed_values.size(); ++i) signed_values[i] = double(sign[i]) * grid.values[i];
  return detail::marching_cubes(grid, signed_values, 0.0);
}

inline TriMesh marching_cubes_udf(const FieldGrid& grid) { return marching_cubes_udf(grid, default_udf_band(grid)); }

/// Removes triangles with area below min_area; vertices are kept.
inline TriMesh drop_degenerate(TriMesh mesh, double min_area = 1e-12) {
  std::erase_if(mesh.triangles, [&](const Triangle& t) { return triangle_area(mesh, t) < min_area; });
  return mesh;
}

/// Extracts the surface of a distance model: plain marching cubes for SDFs, pseudo-signed
/// marching cubes for UDFs.
inline TriMesh extract_mesh(const FieldModel& model, int r) {
  if (model.arch.kind == FieldKind::Sdf) return marching_cubes_sdf(evaluate_grid(model, r, false));
  const FieldGrid g = evaluate_grid(model, r, true);
  return marching_cubes_udf(g, default_udf_band(g));
}

/// Area-uniform samples of an extracted mesh mapped back through `norm`. Colors come
/// from `attr_model` (RGB channels; channels 1..3 of a joint model) evaluated in
/// normalized coordinates and clamped to [-1, 1].
inline PointCloud decode_to_pointcloud(const TriMesh& mesh, std::size_t n, const Normalization& norm,
                                       const FieldModel* attr_model, std::uint64_t seed) {
  const TriMesh clean = drop_degenerate(mesh);
  if (clean.empty()) throw Error(ErrorKind::EmptySurface, "decoded surface is empty: shape lost at this rate");
  PointCloud pc = sample_surface(clean, n, seed);
  if (attr_model) {
    const int first = attr_model->arch.output_dim == 4 ? 1 : 0;
    pc.colors.resize(pc.size());
    parallel_chunks(pc.size(), 4096, [&](std::size_t b, std::size_t e) {
      Eigen::Matrix3Xd pts(3, static_cast<Eigen::Index>(e - b));
      for (std::size_t i = b; i < e; ++i) pts.col(static_cast<Eigen::Index>(i - b)) = pc.points[i];
      const Eigen::MatrixXd out = forward_batch(*attr_model, pts);
      for (std::size_t i = b; i < e; ++i)
        for (int c = 0; c < 3; ++c)
          pc.colors[i][c] = std::clamp(out(first + c, static_cast<Eigen::Index>(i - b)), -1.0, 1.0);
    });
  }
  denormalize(pc, norm);
  return pc;
}

}  // namespace nf3d
