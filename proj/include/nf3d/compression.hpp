#pragma once

#include "nf3d/geometry.hpp"
#include "nf3d/training.hpp"

#include <zlib.h>

#include <array>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace nf3d {

/// Per-layer symmetric uniform quantization of a FieldModel. Layer l stores integer
/// indices k with |k| <= 2^b - 1 and a step size s_l; the parameter is k * s_l.
struct QuantizedModel {
  FieldArch arch;
  int bitwidth = 8;
  std::vector<float> steps;                         // s_l per layer
  std::vector<std::vector<std::int32_t>> indices;   // per layer, weights row-major then biases

  std::int32_t max_index() const { return (std::int32_t{1} << bitwidth) - 1; }

  friend bool operator==(const QuantizedModel&, const QuantizedModel&) = default;
};

/// Rounds half away from zero.
inline double round_away(double x) { return x < 0 ? -std::floor(-x + 0.5) : std::floor(x + 0.5); }

inline void check_bitwidth(int b) {
  if (b < 2 || b > 16) throw Error(ErrorKind::Config, "bitwidth must be in [2, 16], got " + std::to_string(b));
}

/// Step size max|param| / (2^b - 1) at f32 precision.
inline float step_size(double max_abs, int b) {
  return static_cast<float>(max_abs / double((std::int64_t{1} << b) - 1));
}

/// Quantizes with the given per-layer steps (or freshly computed ones when `steps` is
/// empty). Indices are clamped to +-(2^b - 1).
inline QuantizedModel quantize(const FieldModel& model, int b, std::span<const float> steps = {}) {
  check_bitwidth(b);
  QuantizedModel q;
  q.arch = model.arch;
  q.bitwidth = b;
  const std::int32_t kmax = q.max_index();
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const Eigen::VectorXd params = flatten(std::vector<Layer>{model.layers[l]});
    if (!params.allFinite()) throw Error(ErrorKind::Divergence, "non-finite parameter in layer " + std::to_string(l));
    const float s = steps.empty() ? step_size(params.size() ? params.cwiseAbs().maxCoeff() : 0.0, b) : steps[l];
    std::vector<std::int32_t> idx(static_cast<std::size_t>(params.size()), 0);
    if (s > 0.0f) {
      for (Eigen::Index i = 0; i < params.size(); ++i) {
        const double k = std::clamp(round_away(params[i] / double(s)), double(-kmax), double(kmax));
        idx[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(k);
      }
    }
    q.steps.push_back(s);
    q.indices.push_back(std::move(idx));
  }
  return q;
}

inline FieldModel dequantize(const QuantizedModel& q) {
  FieldModel m;
  m.arch = q.arch;
  for (auto [out, in] : layer_shapes(q.arch))
    m.layers.push_back({Eigen::MatrixXd::Zero(out, in), Eigen::VectorXd::Zero(out)});
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(q.indices[l].size()));
    for (std::size_t i = 0; i < q.indices[l].size(); ++i)
      v[static_cast<Eigen::Index>(i)] = double(q.indices[l][i]) * double(q.steps[l]);
    std::vector<Layer> one{m.layers[l]};
    unflatten(v, one);
    m.layers[l] = std::move(one[0]);
  }
  return m;
}

/// Straight-through estimator of the quantizer: identity inside the clamp range.
inline double ste_gradient(double param, float step, int b) {
  const double lim = double(step) * double((std::int64_t{1} << b) - 1);
  return std::abs(param) <= lim ? 1.0 : 0.0;
}

struct QatConfig {
  int epochs = 50;
  double lr = 1e-7;
  std::size_t batch_size = 10000;
  double lambda_l1 = 1e-8;
  std::uint64_t param_seed = 0;
};

/// Quantization-aware retraining of the full-precision shadow weights on a fixed grid.
///
/// Forward passes use dequantize(quantize(shadow, grid)); gradients flow to the shadow
/// unchanged (straight-through). After each step the shadow is clamped into the grid
/// range. The returned shadow is the epoch (including the starting point) whose
/// quantized model has the lowest full training objective.
inline FieldModel qat_retrain(const FieldModel& model, const QuantizedModel& grid, const Objective& obj,
                              const QatConfig& cfg) {
  if (cfg.epochs <= 0) return model;
  const int b = grid.bitwidth;
  const std::vector<float> steps = grid.steps;
  auto effective = [b, steps](const FieldModel& shadow) { return dequantize(quantize(shadow, b, steps)); };
  auto clamp_shadow = [b, steps](FieldModel& shadow) {
    for (std::size_t l = 0; l < shadow.layers.size(); ++l) {
      const double lim = double(steps[l]) * double((std::int64_t{1} << b) - 1);
      shadow.layers[l].weight = shadow.layers[l].weight.cwiseMax(-lim).cwiseMin(lim);
      shadow.layers[l].bias = shadow.layers[l].bias.cwiseMax(-lim).cwiseMin(lim);
    }
  };

  FieldModel best = model;
  double best_loss = objective_loss(effective(model), obj, cfg.lambda_l1, cfg.batch_size);
  TrainConfig tc;
  tc.lr = cfg.lr;
  tc.epochs = cfg.epochs;
  tc.batch_size = cfg.batch_size;
  tc.lambda_l1 = cfg.lambda_l1;
  tc.param_seed = mix_seed(cfg.param_seed, 0x9a7);
  StepHooks hooks;
  hooks.effective = effective;
  hooks.after_step = clamp_shadow;
  hooks.after_epoch = [&](int, const FieldModel& shadow) {
    const double loss = objective_loss(effective(shadow), obj, cfg.lambda_l1, cfg.batch_size);
    if (loss < best_loss) {
      best_loss = loss;
      best = shadow;
    }
  };
  fit(model, obj, tc, hooks);
  return best;
}

// ---------------------------------------------------------------------------------
// Bitstream
//
// All fields little-endian:
//   "NF3D" | version u8 = 1 | field_kind u8 | bitwidth u8 | num_hidden u8 |
//   hidden_width u16 | L u8 | sigma_p f32 | omega0 f32 | d_star f32 |
//   center f32 x3 | scale f32 | num_layers u8 | per layer { s_l f32, index_count u32 } |
//   payload_len u32 | raw DEFLATE payload | crc32 u32 over all preceding bytes
//
// The payload inflates to every index as a (b+1)-bit two's complement value stored in
// ceil((b+1)/8) little-endian bytes, layer by layer.
// ---------------------------------------------------------------------------------

inline constexpr std::array<char, 4> kMagic = {'N', 'F', '3', 'D'};
inline constexpr std::uint8_t kVersion = 1;

struct CompressedField {
  std::vector<std::uint8_t> bytes;

  std::size_t total_size_bytes() const { return bytes.size(); }
};

struct DecodedField {
  QuantizedModel model;
  Normalization normalization;
};

inline std::size_t index_bytes(int b) { return static_cast<std::size_t>((b + 1 + 7) / 8); }

namespace detail {

static_assert(std::endian::native == std::endian::little, "bitstream writer assumes a little-endian host");

class ByteWriter {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    buf.insert(buf.end(), p, p + sizeof(T));
  }
  std::vector<std::uint8_t> buf;
};

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> data, std::size_t limit) : data_(data), limit_(limit) {}
  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > limit_)
      throw Error(ErrorKind::Corrupt, "bitstream truncated at byte offset " + std::to_string(pos_));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::size_t pos() const { return pos_; }
  void skip(std::size_t n) {
    if (pos_ + n > limit_) throw Error(ErrorKind::Corrupt, "bitstream truncated at byte offset " + std::to_string(pos_));
    pos_ += n;
  }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t limit_;
  std::size_t pos_ = 0;
};

inline std::vector<std::uint8_t> deflate_raw(const std::vector<std::uint8_t>& in) {
  z_stream zs{};
  if (deflateInit2(&zs, 9, Z_DEFLATED, -15, 9, Z_DEFAULT_STRATEGY) != Z_OK)
    throw Error(ErrorKind::Precondition, "deflateInit2 failed");
  std::vector<std::uint8_t> out(deflateBound(&zs, static_cast<uLong>(in.size())));
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = deflate(&zs, Z_FINISH);
  const auto produced = zs.total_out;
  deflateEnd(&zs);
  if (rc != Z_STREAM_END) throw Error(ErrorKind::Precondition, "deflate failed");
  out.resize(produced);
  return out;
}

inline std::vector<std::uint8_t> inflate_raw(std::span<const std::uint8_t> in, std::size_t expected) {
  z_stream zs{};
  if (inflateInit2(&zs, -15) != Z_OK) throw Error(ErrorKind::Corrupt, "inflateInit2 failed");
  std::vector<std::uint8_t> out(expected);
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = inflate(&zs, Z_FINISH);
  const auto produced = zs.total_out;
  inflateEnd(&zs);
  if (rc != Z_STREAM_END || produced != expected)
    throw Error(ErrorKind::Corrupt, "payload does not inflate to the " + std::to_string(expected) + " bytes announced by the header");
  return out;
}

inline std::uint32_t crc32_of(std::span<const std::uint8_t> data) {
  return static_cast<std::uint32_t>(::crc32(0L, data.data(), static_cast<uInt>(data.size())));
}

}  // namespace detail

inline CompressedField entropy_encode(const QuantizedModel& q, const Normalization& norm = {}) {
  check_bitwidth(q.bitwidth);
  const auto& a = q.arch;
  if (a.hidden_width > 0xffff || a.encoding.levels > 0xff || a.num_hidden > 0xff || q.indices.size() > 0xff)
    throw Error(ErrorKind::Config, "architecture does not fit the bitstream header");
  detail::ByteWriter w;
  for (char c : kMagic) w.put(static_cast<std::uint8_t>(c));
  w.put(kVersion);
  w.put(static_cast<std::uint8_t>(a.kind));
  w.put(static_cast<std::uint8_t>(q.bitwidth));
  w.put(static_cast<std::uint8_t>(a.num_hidden));
  w.put(static_cast<std::uint16_t>(a.hidden_width));
  w.put(static_cast<std::uint8_t>(a.encoding.levels));
  w.put(static_cast<float>(a.encoding.sigma_p));
  w.put(static_cast<float>(a.omega0));
  w.put(static_cast<float>(a.kind == FieldKind::Attr ? 0.0 : a.d_star));
  for (int c = 0; c < 3; ++c) w.put(static_cast<float>(norm.center[c]));
  w.put(static_cast<float>(norm.scale));
  w.put(static_cast<std::uint8_t>(q.indices.size()));
  for (std::size_t l = 0; l < q.indices.size(); ++l) {
    w.put(q.steps[l]);
    w.put(static_cast<std::uint32_t>(q.indices[l].size()));
  }

  const std::size_t nb = index_bytes(q.bitwidth);
  std::vector<std::uint8_t> raw;
  for (const auto& layer : q.indices) {
    for (std::int32_t k : layer) {
      if (std::abs(k) > q.max_index()) throw Error(ErrorKind::Precondition, "quantization index out of range");
      const auto u = static_cast<std::uint32_t>(k);
      for (std::size_t byte = 0; byte < nb; ++byte) raw.push_back(static_cast<std::uint8_t>(u >> (8 * byte)));
    }
  }
  const auto payload = detail::deflate_raw(raw);
  w.put(static_cast<std::uint32_t>(payload.size()));
  w.buf.insert(w.buf.end(), payload.begin(), payload.end());
  w.put(detail::crc32_of(w.buf));
  return {std::move(w.buf)};
}

/// Parses and verifies a bitstream. Any damage surfaces as ErrorKind::Corrupt.
inline DecodedField entropy_decode(std::span<const std::uint8_t> bytes) {
  constexpr std::size_t kMinSize = 4 + 1 + 1 + 1 + 1 + 2 + 1 + 4 * 3 + 4 * 4 + 1 + 4 + 4;
  if (bytes.size() < kMinSize)
    throw Error(ErrorKind::Corrupt, "bitstream truncated: " + std::to_string(bytes.size()) +
                                        " bytes, header alone needs " + std::to_string(kMinSize) +
                                        " (byte offset " + std::to_string(bytes.size()) + ")");
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + body, 4);
  if (detail::crc32_of(bytes.first(body)) != stored)
    throw Error(ErrorKind::Corrupt, "CRC32 mismatch over bytes [0, " + std::to_string(body) +
                                        "); checksum stored at byte offset " + std::to_string(body));

  detail::ByteReader r(bytes, body);
  for (char c : kMagic)
    if (r.get<std::uint8_t>() != static_cast<std::uint8_t>(c)) throw Error(ErrorKind::Corrupt, "bad magic at byte offset 0");
  if (const auto v = r.get<std::uint8_t>(); v != kVersion)
    throw Error(ErrorKind::Corrupt, "unsupported bitstream version " + std::to_string(v) + " at byte offset 4");

  DecodedField out;
  QuantizedModel& q = out.model;
  FieldArch& a = q.arch;
  const auto kind = r.get<std::uint8_t>();
  if (kind > 2) throw Error(ErrorKind::Corrupt, "invalid field_kind at byte offset 5");
  a.kind = static_cast<FieldKind>(kind);
  q.bitwidth = r.get<std::uint8_t>();
  if (q.bitwidth < 2 || q.bitwidth > 16) throw Error(ErrorKind::Corrupt, "invalid bitwidth at byte offset 6");
  a.num_hidden = r.get<std::uint8_t>();
  a.hidden_width = r.get<std::uint16_t>();
  a.encoding.levels = r.get<std::uint8_t>();
  a.encoding.sigma_p = r.get<float>();
  a.omega0 = r.get<float>();
  a.d_star = r.get<float>();
  for (int c = 0; c < 3; ++c) out.normalization.center[c] = r.get<float>();
  out.normalization.scale = r.get<float>();
  const auto num_layers = r.get<std::uint8_t>();
  if (num_layers != a.num_hidden + 1)
    throw Error(ErrorKind::Corrupt, "layer count " + std::to_string(num_layers) + " does not match num_hidden");
  std::vector<std::uint32_t> counts;
  for (int l = 0; l < num_layers; ++l) {
    q.steps.push_back(r.get<float>());
    counts.push_back(r.get<std::uint32_t>());
  }
  // output width is implied by the last layer's index count
  const int last_in = a.num_hidden == 0 ? a.encoding.dim() : a.hidden_width;
  if (counts.back() % static_cast<std::uint32_t>(last_in + 1) != 0)
    throw Error(ErrorKind::Corrupt, "last layer index count is inconsistent with the architecture");
  a.output_dim = static_cast<int>(counts.back() / static_cast<std::uint32_t>(last_in + 1));
  const auto shapes = layer_shapes(a);
  for (std::size_t l = 0; l < shapes.size(); ++l)
    if (counts[l] != static_cast<std::uint32_t>(shapes[l].first * (shapes[l].second + 1)))
      throw Error(ErrorKind::Corrupt, "index count of layer " + std::to_string(l) + " is inconsistent with the architecture");

  const auto payload_len = r.get<std::uint32_t>();
  const std::size_t payload_at = r.pos();
  r.skip(payload_len);
  if (r.pos() != body)
    throw Error(ErrorKind::Corrupt, "trailing bytes after payload at byte offset " + std::to_string(r.pos()));

  const std::size_t nb = index_bytes(q.bitwidth);
  std::size_t total = 0;
  for (auto c : counts) total += c;
  const auto raw = detail::inflate_raw(bytes.subspan(payload_at, payload_len), total * nb);
  std::size_t pos = 0;
  const int shift = 32 - int(8 * nb);
  for (auto c : counts) {
    std::vector<std::int32_t> layer(c);
    for (auto& k : layer) {
      std::uint32_t u = 0;
      for (std::size_t byte = 0; byte < nb; ++byte) u |= std::uint32_t(raw[pos++]) << (8 * byte);
      k = static_cast<std::int32_t>(u << shift) >> shift;  // sign-extend
      if (std::abs(k) > q.max_index()) throw Error(ErrorKind::Corrupt, "quantization index out of range");
    }
    q.indices.push_back(std::move(layer));
  }
  return out;
}

inline void write_compressed(const std::filesystem::path& path, const CompressedField& cf) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Parse, "cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(cf.bytes.data()), static_cast<std::streamsize>(cf.bytes.size()));
}

inline CompressedField read_compressed(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Parse, "cannot open '" + path.string() + "'");
  CompressedField cf;
  cf.bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  return cf;
}

struct CompressionResult {
  CompressedField stream;
  QuantizedModel quantized;
  FieldModel shadow;
};

/// quantize -> quantization-aware retraining on that grid -> re-quantize on the same
/// grid -> entropy code.
inline CompressionResult compress_pipeline(const FieldModel& model, const Objective& obj, int b, const QatConfig& qat,
                                           const Normalization& norm = {}) {
  const QuantizedModel grid = quantize(model, b);
  FieldModel shadow = qat_retrain(model, grid, obj, qat);
  QuantizedModel q = quantize(shadow, b, grid.steps);
  CompressedField cf = entropy_encode(q, norm);
  return {std::move(cf), std::move(q), std::move(shadow)};
}

}  // namespace nf3d
