#pragma once

#include "nf3d/codec.hpp"
#include "nf3d/io.hpp"
#include "nf3d/kdtree.hpp"

#include <future>

namespace nf3d {

namespace detail {

/// Mean over `from` of the squared distance to the nearest point of `to`.
inline double mean_nn_squared(std::span<const Vec3> from, const KdTree& to) {
  constexpr std::size_t kChunk = 4096;
  std::vector<double> partial((from.size() + kChunk - 1) / kChunk, 0.0);
  parallel_chunks(from.size(), kChunk, [&](std::size_t b, std::size_t e) {
    double s = 0.0;
    for (std::size_t i = b; i < e; ++i) s += to.nearest_squared(from[i]).first;
    partial[b / kChunk] = s;
  });
  double total = 0.0;
  for (double p : partial) total += p;
  return total / double(from.size());
}

/// Mean squared 8-bit color error from each point of `a` to its nearest neighbour in `b`.
inline double directional_color_mse(const PointCloud& a, const PointCloud& b, const KdTree& tree_b) {
  constexpr std::size_t kChunk = 4096;
  std::vector<double> partial((a.size() + kChunk - 1) / kChunk, 0.0);
  parallel_chunks(a.size(), kChunk, [&](std::size_t lo, std::size_t hi) {
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      const Vec3& cb = b.colors[tree_b.nearest(a.points[i]).id];
      for (int c = 0; c < 3; ++c) {
        const double d = double(color_to_u8(a.colors[i][c])) - double(color_to_u8(cb[c]));
        s += d * d;
      }
    }
    partial[lo / kChunk] = s;
  });
  double total = 0.0;
  for (double p : partial) total += p;
  return total / (3.0 * double(a.size()));
}

}  // namespace detail

/// Symmetric Chamfer distance with squared nearest-neighbour distances:
/// 0.5 (mean_a min_b |a - b|^2 + mean_b min_a |a - b|^2).
inline double chamfer(std::span<const Vec3> a, std::span<const Vec3> b) {
  if (a.empty() || b.empty()) throw Error(ErrorKind::Precondition, "Chamfer distance of an empty point cloud");
  const KdTree ta(a), tb(b);
  return 0.5 * (detail::mean_nn_squared(a, tb) + detail::mean_nn_squared(b, ta));
}

inline double chamfer(const PointCloud& a, const PointCloud& b) { return chamfer(a.points, b.points); }

inline constexpr double kPsnrCap = 100.0;

inline double psnr_from_mse(double mse) {
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(255.0 * 255.0 / mse));
}

/// Symmetric nearest-neighbour-matched color PSNR in 8-bit RGB, the mean of the two
/// directional values.
inline double attribute_psnr(const PointCloud& a, const PointCloud& b) {
  if (!a.has_colors() || !b.has_colors()) throw Error(ErrorKind::Precondition, "PSNR needs colors on both clouds");
  if (a.empty() || b.empty()) throw Error(ErrorKind::Precondition, "PSNR of an empty point cloud");
  const KdTree ta(a.points), tb(b.points);
  const double ab = psnr_from_mse(detail::directional_color_mse(a, b, tb));
  const double ba = psnr_from_mse(detail::directional_color_mse(b, a, ta));
  return 0.5 * (ab + ba);
}

/// Reference cloud of a normalized input: n area-uniform samples of a mesh, or the
/// cloud itself.
inline PointCloud reference_cloud(const Shape& normalized, std::size_t n, std::uint64_t seed) {
  if (const auto* mesh = std::get_if<TriMesh>(&normalized)) return sample_surface(*mesh, n, seed);
  return std::get<PointCloud>(normalized);
}

/// Decoder view of a stream: the dequantized model with the run's head activation.
inline FieldModel decode_stream(const CompressedField& stream, const RunConfig& cfg, Normalization* norm = nullptr) {
  DecodedField d = entropy_decode(stream.bytes);
  if (norm) *norm = d.normalization;
  FieldModel m = dequantize(d.model);
  if (m.arch.kind != FieldKind::Attr) m.arch.head = parse_head(cfg.head);
  return m;
}

struct RDPoint {
  int width = 0;
  int bitwidth = 8;
  std::size_t bytes = 0;
  double cd = 0.0;
  std::optional<double> psnr;
  double t_encode_s = 0.0;
  double t_decode_s = 0.0;
  bool ok = true;
  std::string error;
};

struct SweepPoint {
  int width;
  int bitwidth;
};

/// Operating points of a sweep: every width at the configured bitwidth, or (bitwidth
/// ablation) every listed bitwidth at the configured width.
inline std::vector<SweepPoint> sweep_points(const RunConfig& cfg) {
  std::vector<SweepPoint> pts;
  if (!cfg.bitwidths.empty()) {
    for (int b : cfg.bitwidths) pts.push_back({cfg.width, b});
  } else {
    for (int w : cfg.widths) pts.push_back({w, cfg.bitwidth});
  }
  return pts;
}

/// Encodes, decodes from the bitstream and scores one operating point. Failures are
/// recorded in the returned point.
inline RDPoint evaluate_point(const PreparedInput& in, const PointCloud& reference, const RunConfig& cfg,
                              SweepPoint sp) {
  RDPoint p;
  p.width = sp.width;
  p.bitwidth = sp.bitwidth;
  try {
    const EncodeOutput enc = encode_shape(in, cfg, sp.width, sp.bitwidth);
    p.bytes = enc.total_bytes();
    p.t_encode_s = enc.seconds;
    const auto t0 = std::chrono::steady_clock::now();
    const FieldModel geo = decode_stream(enc.geometry, cfg);
    std::optional<FieldModel> attr;
    if (enc.attributes) attr = decode_stream(*enc.attributes, cfg);
    const TriMesh mesh = decode_mesh(geo, cfg.r_mc);
    const PointCloud rec =
        decode_cloud(mesh, geo, attr ? &*attr : nullptr, cfg.n_points, Normalization{}, kDecodeSeed);
    p.t_decode_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    p.cd = chamfer(reference, rec);
    if (reference.has_colors() && rec.has_colors()) p.psnr = attribute_psnr(reference, rec);
  } catch (const Error& e) {
    p.ok = false;
    p.error = e.what();
  }
  return p;
}

/// Rate-distortion sweep. Metrics are computed in normalized coordinates against the
/// reference cloud of the input. With `parallel` the points run concurrently; results
/// are identical to the sequential run.
inline std::vector<RDPoint> rd_sweep(const Shape& input, const RunConfig& cfg, bool parallel = false) {
  const PreparedInput in = prepare_input(input, cfg);
  if (!cfg.seed_params || !cfg.seed_data) throw Error(ErrorKind::Precondition, "seeds must be resolved before a sweep");
  const PointCloud reference = reference_cloud(in.shape, cfg.n_points, mix_seed(*cfg.seed_data, 0xe7a1));
  const auto pts = sweep_points(cfg);
  std::vector<RDPoint> out;
  if (parallel) {
    std::vector<std::future<RDPoint>> jobs;
    for (const auto& sp : pts)
      jobs.push_back(std::async(std::launch::async, [&, sp] { return evaluate_point(in, reference, cfg, sp); }));
    for (auto& j : jobs) out.push_back(j.get());
  } else {
    for (const auto& sp : pts) out.push_back(evaluate_point(in, reference, cfg, sp));
  }
  return out;
}

inline constexpr const char* kRdCsvHeader = "width,bytes,cd,psnr,t_encode_s,t_decode_s";

/// One header row plus one row per point; failed points carry cd = nan and an empty psnr.
inline std::string rd_csv(const std::vector<RDPoint>& pts) {
  std::ostringstream os;
  os << kRdCsvHeader << '\n';
  os << std::setprecision(9);
  for (const auto& p : pts) {
    os << p.width << ',' << p.bytes << ',';
    if (p.ok) os << p.cd;
    else os << "nan";
    os << ',';
    if (p.ok && p.psnr) os << *p.psnr;
    os << ',' << p.t_encode_s << ',' << p.t_decode_s << '\n';
  }
  return os.str();
}

/// Scatter plot of Chamfer distance (log scale) against file size.
inline std::string rd_svg(const std::vector<RDPoint>& pts) {
  std::vector<const RDPoint*> good;
  for (const auto& p : pts)
    if (p.ok && p.cd > 0) good.push_back(&p);
  constexpr double W = 480, H = 320, M = 50;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<line x1=\"" << M << "\" y1=\"" << H - M << "\" x2=\"" << W - M / 2 << "\" y2=\"" << H - M
     << "\" stroke=\"black\"/>\n"
     << "<line x1=\"" << M << "\" y1=\"" << H - M << "\" x2=\"" << M << "\" y2=\"" << M / 2 << "\" stroke=\"black\"/>\n"
     << "<text x=\"" << W / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\" font-size=\"12\">bytes</text>\n"
     << "<text x=\"14\" y=\"" << H / 2 << "\" font-size=\"12\" transform=\"rotate(-90 14 " << H / 2
     << ")\" text-anchor=\"middle\">log10 CD</text>\n";
  if (!good.empty()) {
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto* p : good) {
      xmin = std::min(xmin, double(p->bytes));
      xmax = std::max(xmax, double(p->bytes));
      ymin = std::min(ymin, std::log10(p->cd));
      ymax = std::max(ymax, std::log10(p->cd));
    }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    auto sx = [&](double x) { return M + (x - xmin) / (xmax - xmin) * (W - 1.5 * M - M / 2); };
    auto sy = [&](double y) { return H - M - (y - ymin) / (ymax - ymin) * (H - 1.5 * M - M / 2); };
    os << "<polyline fill=\"none\" stroke=\"steelblue\" points=\"";
    for (const auto* p : good) os << sx(double(p->bytes)) << ',' << sy(std::log10(p->cd)) << ' ';
    os << "\"/>\n";
    for (const auto* p : good) {
      os << "<circle cx=\"" << sx(double(p->bytes)) << "\" cy=\"" << sy(std::log10(p->cd))
         << "\" r=\"3\" fill=\"steelblue\"><title>width " << p->width << ", b " << p->bitwidth << "</title></circle>\n";
    }
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace nf3d
