#pragma once

#include "nf3d/common.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <vector>

namespace nf3d {

/// Per-coordinate positional encoding
///   p -> (p, sin(s^0 pi p), cos(s^0 pi p), ..., sin(s^(L-1) pi p), cos(s^(L-1) pi p))
/// with s = sigma_p, applied to x, y, z and concatenated in that order.
struct EncodingConfig {
  int levels = 16;
  double sigma_p = 1.4;

  int block() const { return 1 + 2 * levels; }
  int dim() const { return 3 * block(); }
  double frequency(int k) const { return std::pow(sigma_p, k) * std::numbers::pi; }

  friend bool operator==(const EncodingConfig&, const EncodingConfig&) = default;
};

/// Final activation applied to output channel 0. Default resolves to abs for UDFs and
/// identity otherwise; the explicit values exist for head ablations.
enum class HeadActivation : std::uint8_t { Default, Abs, Relu, Identity };

struct FieldArch {
  FieldKind kind = FieldKind::Sdf;
  EncodingConfig encoding;
  int hidden_width = 32;
  int num_hidden = 2;
  double omega0 = 30.0;
  double d_star = 0.1;
  /// 1 for UDF/SDF, 3 for ATTR, 4 for a joint distance+RGB model.
  int output_dim = 1;
  HeadActivation head = HeadActivation::Default;

  HeadActivation resolved_head() const {
    if (head != HeadActivation::Default) return head;
    return kind == FieldKind::Udf ? HeadActivation::Abs : HeadActivation::Identity;
  }

  friend bool operator==(const FieldArch&, const FieldArch&) = default;
};

/// Rounds the real-valued hyperparameters through f32, the precision the bitstream
/// stores them at, so encoder and decoder evaluate the same function.
inline FieldArch canonical(FieldArch a) {
  a.encoding.sigma_p = static_cast<float>(a.encoding.sigma_p);
  a.omega0 = static_cast<float>(a.omega0);
  a.d_star = a.kind == FieldKind::Attr ? 0.0 : static_cast<double>(static_cast<float>(a.d_star));
  return a;
}

inline FieldArch make_arch(FieldKind kind, int width, int levels) {
  FieldArch a;
  a.kind = kind;
  a.hidden_width = width;
  a.encoding.levels = levels;
  a.output_dim = kind == FieldKind::Attr ? 3 : 1;
  if (kind == FieldKind::Attr) a.d_star = 0.0;
  return a;
}

struct Layer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;

  Eigen::Index param_count() const { return weight.size() + bias.size(); }
};

/// Sinusoidal MLP: num_hidden layers h <- sin(omega0 (W h + b)) followed by a linear
/// output layer and the head activation.
struct FieldModel {
  FieldArch arch;
  std::vector<Layer> layers;

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.param_count());
    return n;
  }
};

/// Layer shapes implied by an architecture, as (out, in) pairs.
inline std::vector<std::pair<int, int>> layer_shapes(const FieldArch& a) {
  std::vector<std::pair<int, int>> s;
  int in = a.encoding.dim();
  for (int l = 0; l < a.num_hidden; ++l) {
    s.emplace_back(a.hidden_width, in);
    in = a.hidden_width;
  }
  s.emplace_back(a.output_dim, in);
  return s;
}

inline void validate_arch(const FieldArch& a) {
  if (a.encoding.levels < 0) throw Error(ErrorKind::Config, "encoding levels must be >= 0");
  if (!(a.encoding.sigma_p > 0)) throw Error(ErrorKind::Config, "sigma_p must be positive");
  if (a.hidden_width < 1 || a.hidden_width > 65535) throw Error(ErrorKind::Config, "hidden width out of range");
  if (a.num_hidden < 0 || a.num_hidden > 254) throw Error(ErrorKind::Config, "num_hidden out of range");
  if (a.output_dim < 1) throw Error(ErrorKind::Config, "output_dim must be positive");
}

/// Same shape as the model, zero-filled.
inline std::vector<Layer> zeros_like(const FieldModel& m) {
  std::vector<Layer> g;
  g.reserve(m.layers.size());
  for (const auto& l : m.layers)
    g.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()), Eigen::VectorXd::Zero(l.bias.size())});
  return g;
}

/// Parameter gradients mirroring the model, plus optional per-point input gradients.
struct Gradients {
  std::vector<Layer> layers;
  std::optional<Vec3> input;
};

/// Flattened parameter order: per layer, weights row-major then biases.
inline Eigen::VectorXd flatten(const std::vector<Layer>& layers) {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.param_count());
  Eigen::VectorXd v(n);
  Eigen::Index k = 0;
  for (const auto& l : layers) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) v[k++] = l.weight(r, c);
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) v[k++] = l.bias[r];
  }
  return v;
}

inline void unflatten(const Eigen::VectorXd& v, std::vector<Layer>& layers) {
  Eigen::Index k = 0;
  for (auto& l : layers) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = v[k++];
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias[r] = v[k++];
  }
}

/// SIREN initialisation: first layer U(-1/fan_in, 1/fan_in), later layers
/// U(-sqrt(6/fan_in)/omega0, +...), zero biases.
inline FieldModel init_params(const FieldArch& arch, std::uint64_t seed) {
  validate_arch(arch);
  FieldModel m;
  m.arch = canonical(arch);
  std::mt19937_64 rng(mix_seed(seed, 0x1417));
  bool first = true;
  for (auto [out, in] : layer_shapes(arch)) {
    const double bound = first ? 1.0 / in : std::sqrt(6.0 / in) / m.arch.omega0;
    std::uniform_real_distribution<double> u(-bound, bound);
    Layer l{Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(out)};
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) l.weight(r, c) = u(rng);
    m.layers.push_back(std::move(l));
    first = false;
  }
  return m;
}

/// Encodes a batch of points given as columns of a 3 x N matrix; result is dim x N.
inline Eigen::MatrixXd encode_batch(const Eigen::Ref<const Eigen::Matrix3Xd>& x, const EncodingConfig& cfg) {
  const int blk = cfg.block();
  Eigen::MatrixXd e(cfg.dim(), x.cols());
  std::vector<double> freq(static_cast<std::size_t>(cfg.levels));
  for (int k = 0; k < cfg.levels; ++k) freq[static_cast<std::size_t>(k)] = cfg.frequency(k);
  for (Eigen::Index n = 0; n < x.cols(); ++n) {
    for (int c = 0; c < 3; ++c) {
      const double p = x(c, n);
      const int base = c * blk;
      e(base, n) = p;
      for (int k = 0; k < cfg.levels; ++k) {
        double s, co;
        ::sincos(freq[static_cast<std::size_t>(k)] * p, &s, &co);
        e(base + 1 + 2 * k, n) = s;
        e(base + 2 + 2 * k, n) = co;
      }
    }
  }
  return e;
}

inline Eigen::VectorXd encode(const Vec3& x, const EncodingConfig& cfg) {
  Eigen::Matrix3Xd m(3, 1);
  m.col(0) = x;
  return encode_batch(m, cfg).col(0);
}

/// Intermediates of a batched forward pass.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> sines;    // per hidden layer, width x N
  std::vector<Eigen::MatrixXd> cosines;  // kept only when gradients are needed
  Eigen::MatrixXd pre_head;              // output_dim x N, before the head activation
  Eigen::MatrixXd output;                // output_dim x N
};

inline double apply_head(HeadActivation h, double z) {
  switch (h) {
    case HeadActivation::Abs: return std::abs(z);
    case HeadActivation::Relu: return z > 0 ? z : 0.0;
    default: return z;
  }
}

/// Derivative of the head; abs uses sign(z) with sign(0) = 0.
inline double head_derivative(HeadActivation h, double z) {
  switch (h) {
    case HeadActivation::Abs: return z > 0 ? 1.0 : (z < 0 ? -1.0 : 0.0);
    case HeadActivation::Relu: return z > 0 ? 1.0 : 0.0;
    default: return 1.0;
  }
}

/// Forward pass on already-encoded inputs (dim x N).
inline void forward_encoded(const FieldModel& m, const Eigen::Ref<const Eigen::MatrixXd>& encoded, ForwardCache& cache,
                            bool keep_cosines) {
  const auto n_hidden = static_cast<std::size_t>(m.arch.num_hidden);
  cache.sines.resize(n_hidden);
  cache.cosines.resize(keep_cosines ? n_hidden : 0);
  const double w0 = m.arch.omega0;
  for (std::size_t l = 0; l < n_hidden; ++l) {
    const Layer& layer = m.layers[l];
    Eigen::MatrixXd arg = layer.weight * (l == 0 ? encoded : Eigen::Ref<const Eigen::MatrixXd>(cache.sines[l - 1]));
    arg.colwise() += layer.bias;
    arg *= w0;
    auto& s = cache.sines[l];
    s.resize(arg.rows(), arg.cols());
    if (keep_cosines) {
      auto& c = cache.cosines[l];
      c.resize(arg.rows(), arg.cols());
      for (Eigen::Index i = 0; i < arg.size(); ++i) ::sincos(arg.data()[i], s.data() + i, c.data() + i);
    } else {
      s = arg.array().sin();
    }
  }
  const Layer& last = m.layers.back();
  cache.pre_head = last.weight * (n_hidden == 0 ? encoded : Eigen::Ref<const Eigen::MatrixXd>(cache.sines.back()));
  cache.pre_head.colwise() += last.bias;
  cache.output = cache.pre_head;
  const auto head = m.arch.resolved_head();
  for (Eigen::Index n = 0; n < cache.output.cols(); ++n) cache.output(0, n) = apply_head(head, cache.pre_head(0, n));
}

/// Reverse pass. `upstream` is the cotangent of the output (output_dim x N). Parameter
/// gradients are accumulated into `grads` when non-null; if `input_grad` is non-null it receives the
/// 3 x N gradient with respect to the input points.
inline void backward_encoded(const FieldModel& m, const Eigen::Ref<const Eigen::MatrixXd>& encoded,
                             const ForwardCache& cache, const Eigen::Ref<const Eigen::MatrixXd>& upstream,
                             std::vector<Layer>* grads, Eigen::Matrix3Xd* input_grad) {
  const auto n_hidden = static_cast<std::size_t>(m.arch.num_hidden);
  if (n_hidden > 0 && cache.cosines.size() != n_hidden)
    throw Error(ErrorKind::Precondition, "forward pass did not keep the intermediates needed for backward");
  const auto head = m.arch.resolved_head();
  Eigen::MatrixXd delta = upstream;
  for (Eigen::Index n = 0; n < delta.cols(); ++n) delta(0, n) *= head_derivative(head, cache.pre_head(0, n));

  for (std::size_t li = m.layers.size(); li-- > 0;) {
    const Eigen::Ref<const Eigen::MatrixXd> input = li == 0 ? encoded : Eigen::Ref<const Eigen::MatrixXd>(cache.sines[li - 1]);
    if (grads) {
      (*grads)[li].weight.noalias() += delta * input.transpose();
      (*grads)[li].bias += delta.rowwise().sum();
    }
    if (li == 0 && input_grad == nullptr) break;
    Eigen::MatrixXd d_input = m.layers[li].weight.transpose() * delta;
    if (li == 0) {
      const EncodingConfig& enc = m.arch.encoding;
      const int blk = enc.block();
      input_grad->resize(3, d_input.cols());
      for (Eigen::Index n = 0; n < d_input.cols(); ++n) {
        for (int c = 0; c < 3; ++c) {
          const int base = c * blk;
          double g = d_input(base, n);
          for (int k = 0; k < enc.levels; ++k) {
            const double f = enc.frequency(k);
            const int is = base + 1 + 2 * k, ic = base + 2 + 2 * k;
            g += f * (encoded(ic, n) * d_input(is, n) - encoded(is, n) * d_input(ic, n));
          }
          (*input_grad)(c, n) = g;
        }
      }
      break;
    }
    // through h = sin(omega0 * z)
    delta = (d_input.array() * cache.cosines[li - 1].array() * m.arch.omega0).matrix();
  }
}

/// Evaluates a batch of points (3 x N) and returns output_dim x N.
inline Eigen::MatrixXd forward_batch(const FieldModel& m, const Eigen::Ref<const Eigen::Matrix3Xd>& x) {
  ForwardCache cache;
  forward_encoded(m, encode_batch(x, m.arch.encoding), cache, false);
  return std::move(cache.output);
}

/// Single-point evaluation: scalar distance (size 1), RGB (size 3) or joint (size 4).
inline Eigen::VectorXd forward(const FieldModel& m, const Vec3& x) {
  Eigen::Matrix3Xd pts(3, 1);
  pts.col(0) = x;
  return forward_batch(m, pts).col(0);
}

/// Exact gradients of <output(x), upstream> with respect to every parameter and x.
inline Gradients backward(const FieldModel& m, const Vec3& x, const Eigen::VectorXd& upstream) {
  Eigen::Matrix3Xd pts(3, 1);
  pts.col(0) = x;
  const Eigen::MatrixXd enc = encode_batch(pts, m.arch.encoding);
  ForwardCache cache;
  forward_encoded(m, enc, cache, true);
  Gradients g{zeros_like(m), std::nullopt};
  Eigen::Matrix3Xd dx;
  backward_encoded(m, enc, cache, upstream, &g.layers, &dx);
  g.input = dx.col(0);
  return g;
}

/// Values and input gradients of output channel 0 for a batch of points.
inline std::pair<Eigen::VectorXd, Eigen::Matrix3Xd> value_and_input_gradient(
    const FieldModel& m, const Eigen::Ref<const Eigen::Matrix3Xd>& x) {
  const Eigen::MatrixXd enc = encode_batch(x, m.arch.encoding);
  ForwardCache cache;
  forward_encoded(m, enc, cache, true);
  Eigen::MatrixXd up = Eigen::MatrixXd::Zero(m.arch.output_dim, x.cols());
  up.row(0).setOnes();
  Eigen::Matrix3Xd dx;
  backward_encoded(m, enc, cache, up, nullptr, &dx);
  return {cache.output.row(0).transpose(), std::move(dx)};
}

}  // namespace nf3d
