#pragma once

#include "nf3d/neural_field.hpp"
#include "nf3d/sampler.hpp"

#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>

namespace nf3d {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  double lr = 1e-4;
  int epochs = 500;
  std::size_t batch_size = 10000;
  double lambda_l1 = 1e-8;
  double lambda_a = 1e-3;  // joint mode only
  std::uint64_t param_seed = 0;
  AdamConfig adam;
};

struct AdamState {
  std::vector<Layer> m;
  std::vector<Layer> v;
  std::int64_t step = 0;
};

inline AdamState make_adam_state(const FieldModel& model) { return {zeros_like(model), zeros_like(model), 0}; }

/// One bias-corrected Adam update. Throws ErrorKind::Divergence on a non-finite gradient.
inline void adam_step(FieldModel& model, const std::vector<Layer>& grads, AdamState& st, double lr,
                      const AdamConfig& cfg = {}) {
  for (std::size_t l = 0; l < grads.size(); ++l) {
    if (!grads[l].weight.allFinite() || !grads[l].bias.allFinite()) {
      std::ostringstream os;
      os << "non-finite gradient in layer " << l << " at optimizer step " << st.step + 1;
      throw Error(ErrorKind::Divergence, os.str());
    }
  }
  ++st.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, double(st.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, double(st.step));
  auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.epsilon);
  };
  for (std::size_t l = 0; l < grads.size(); ++l) {
    update(model.layers[l].weight, grads[l].weight, st.m[l].weight, st.v[l].weight);
    update(model.layers[l].bias, grads[l].bias, st.m[l].bias, st.v[l].bias);
  }
}

inline double l1_norm(const FieldModel& m) {
  double s = 0.0;
  for (const auto& l : m.layers) s += l.weight.cwiseAbs().sum() + l.bias.cwiseAbs().sum();
  return s;
}

/// Adds lambda * sign(params) (sign(0) = 0) to grads.
inline void add_l1_gradient(const FieldModel& m, double lambda, std::vector<Layer>& grads) {
  if (lambda == 0.0) return;
  auto sgn = [](double x) { return double((x > 0) - (x < 0)); };
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    grads[l].weight += lambda * m.layers[l].weight.unaryExpr(sgn);
    grads[l].bias += lambda * m.layers[l].bias.unaryExpr(sgn);
  }
}

inline void add_into(std::vector<Layer>& acc, const std::vector<Layer>& g) {
  for (std::size_t l = 0; l < acc.size(); ++l) {
    acc[l].weight += g[l].weight;
    acc[l].bias += g[l].bias;
  }
}

namespace detail {

inline Eigen::Matrix3Xd to_matrix(std::span<const Vec3> pts) {
  Eigen::Matrix3Xd m(3, static_cast<Eigen::Index>(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = pts[i];
  return m;
}

/// Samples per gradient block. Blocks are reduced in index order, so results do not
/// depend on how many threads process them.
constexpr std::size_t kGradBlock = 2048;

/// Residuals r (output_dim x n) from which loss = sum(r^2)/N and upstream = 2 r / N.
using ResidualFn = std::function<void(const ForwardCache&, std::size_t begin, Eigen::MatrixXd& residual)>;

/// Mean squared residual over a batch of pre-encoded columns, plus the gradient.
inline double blocked_loss(const FieldModel& model, const Eigen::MatrixXd& encoded, const ResidualFn& residual_fn,
                           std::vector<Layer>* grads, double weight = 1.0) {
  const auto n = static_cast<std::size_t>(encoded.cols());
  if (n == 0) return 0.0;
  const std::size_t blocks = (n + kGradBlock - 1) / kGradBlock;
  std::vector<double> partial(blocks, 0.0);
  std::vector<std::vector<Layer>> block_grads(grads ? blocks : 0);
  parallel_chunks(n, kGradBlock, [&](std::size_t b, std::size_t e) {
    const std::size_t bi = b / kGradBlock;
    const auto cols = static_cast<Eigen::Index>(e - b);
    auto enc = encoded.middleCols(static_cast<Eigen::Index>(b), cols);
    ForwardCache cache;
    forward_encoded(model, enc, cache, grads != nullptr);
    Eigen::MatrixXd r = Eigen::MatrixXd::Zero(cache.output.rows(), cols);
    residual_fn(cache, b, r);
    partial[bi] = r.squaredNorm();
    if (grads) {
      block_grads[bi] = zeros_like(model);
      const Eigen::MatrixXd up = (2.0 * weight / double(n)) * r;
      backward_encoded(model, enc, cache, up, &block_grads[bi], nullptr);
    }
  });
  double total = 0.0;
  for (std::size_t bi = 0; bi < blocks; ++bi) {
    total += partial[bi];
    if (grads) add_into(*grads, block_grads[bi]);
  }
  return weight * total / double(n);
}

}  // namespace detail

/// Per-sample residual of the masked truncated distance loss. A sample is active when
/// |d_S| <= d* or |d_hat| <= d*; inactive samples yield exactly zero.
inline double geometry_residual(double d_hat, double d_s, double d_star, bool truncate = true) {
  if (!truncate) return d_hat - d_s;
  const bool active = std::abs(d_s) <= d_star || std::abs(d_hat) <= d_star;
  return active ? d_hat - truncate_target(d_s, d_star) : 0.0;
}

/// A dataset the optimizer can draw mini-batches from. batch_loss returns the mean data
/// loss over the given sample ids and accumulates its gradient into grads (if non-null).
class Objective {
 public:
  virtual ~Objective() = default;
  virtual std::size_t size() const = 0;
  virtual double batch_loss(const FieldModel& model, std::span<const std::uint32_t> ids,
                            std::vector<Layer>* grads) const = 0;
};

/// Masked truncated-distance loss on a TrainingSet; encodings are computed once.
class GeometryObjective final : public Objective {
 public:
  GeometryObjective(const TrainingSet& ts, const EncodingConfig& enc, bool truncate = true)
      : ts_(&ts), truncate_(truncate), encoded_(encode_batch(detail::to_matrix(ts.points), enc)) {}

  std::size_t size() const override { return ts_->size(); }

  double batch_loss(const FieldModel& model, std::span<const std::uint32_t> ids,
                    std::vector<Layer>* grads) const override {
    Eigen::MatrixXd enc(encoded_.rows(), static_cast<Eigen::Index>(ids.size()));
    for (std::size_t k = 0; k < ids.size(); ++k) enc.col(static_cast<Eigen::Index>(k)) = encoded_.col(ids[k]);
    return loss_on(model, enc, ids, grads, 1.0);
  }

  double loss_on(const FieldModel& model, const Eigen::MatrixXd& enc, std::span<const std::uint32_t> ids,
                 std::vector<Layer>* grads, double weight) const {
    const double d_star = ts_->d_star;
    return detail::blocked_loss(
        model, enc,
        [&](const ForwardCache& c, std::size_t begin, Eigen::MatrixXd& r) {
          for (Eigen::Index j = 0; j < r.cols(); ++j) {
            const double d_s = ts_->distances[ids[begin + static_cast<std::size_t>(j)]];
            r(0, j) = geometry_residual(c.output(0, j), d_s, d_star, truncate_);
          }
        },
        grads, weight);
  }

  const Eigen::MatrixXd& encoded() const { return encoded_; }

 private:
  const TrainingSet* ts_;
  bool truncate_;
  Eigen::MatrixXd encoded_;
};

/// Mean over points of the squared RGB error (summed over channels). Colors live in
/// output channels [first_channel, first_channel + 3).
class AttributeObjective final : public Objective {
 public:
  AttributeObjective(std::span<const Vec3> points, std::span<const Vec3> colors, const EncodingConfig& enc,
                     int first_channel = 0)
      : colors_(colors.begin(), colors.end()),
        first_(first_channel),
        encoded_(encode_batch(detail::to_matrix(points), enc)) {
    if (points.size() != colors.size()) throw Error(ErrorKind::Precondition, "attribute points/colors size mismatch");
  }

  std::size_t size() const override { return colors_.size(); }

  double batch_loss(const FieldModel& model, std::span<const std::uint32_t> ids,
                    std::vector<Layer>* grads) const override {
    return weighted_loss(model, ids, grads, 1.0);
  }

  double weighted_loss(const FieldModel& model, std::span<const std::uint32_t> ids, std::vector<Layer>* grads,
                       double weight) const {
    Eigen::MatrixXd enc(encoded_.rows(), static_cast<Eigen::Index>(ids.size()));
    for (std::size_t k = 0; k < ids.size(); ++k) enc.col(static_cast<Eigen::Index>(k)) = encoded_.col(ids[k]);
    return detail::blocked_loss(
        model, enc,
        [&](const ForwardCache& c, std::size_t begin, Eigen::MatrixXd& r) {
          for (Eigen::Index j = 0; j < r.cols(); ++j) {
            const Vec3& t = colors_[ids[begin + static_cast<std::size_t>(j)]];
            for (int ch = 0; ch < 3; ++ch) r(first_ + ch, j) = c.output(first_ + ch, j) - t[ch];
          }
        },
        grads, weight);
  }

 private:
  std::vector<Vec3> colors_;
  int first_;
  Eigen::MatrixXd encoded_;
};

/// L_G + lambda_A L_A on a single 4-output model (distance in channel 0, RGB in 1..3).
/// Attribute samples are visited as ids modulo the attribute set size.
class JointObjective final : public Objective {
 public:
  JointObjective(const GeometryObjective& geo, const AttributeObjective& attr, double lambda_a)
      : geo_(&geo), attr_(&attr), lambda_a_(lambda_a) {}

  std::size_t size() const override { return geo_->size(); }

  double batch_loss(const FieldModel& model, std::span<const std::uint32_t> ids,
                    std::vector<Layer>* grads) const override {
    double loss = geo_->batch_loss(model, ids, grads);
    std::vector<std::uint32_t> attr_ids(ids.size());
    const auto na = static_cast<std::uint32_t>(attr_->size());
    for (std::size_t k = 0; k < ids.size(); ++k) attr_ids[k] = ids[k] % na;
    loss += attr_->weighted_loss(model, attr_ids, grads, lambda_a_);
    return loss;
  }

 private:
  const GeometryObjective* geo_;
  const AttributeObjective* attr_;
  double lambda_a_;
};

/// Stand-alone geometry loss on a batch with exact distances d_S:
/// mean masked squared error + lambda_l1 ||params||_1, with its gradient.
inline std::pair<double, Gradients> geometry_loss(const FieldModel& model, std::span<const Vec3> points,
                                                  std::span<const double> distances, double d_star, double lambda_l1,
                                                  bool truncate = true) {
  TrainingSet ts;
  ts.points.assign(points.begin(), points.end());
  ts.distances.assign(distances.begin(), distances.end());
  ts.d_star = d_star;
  for (double d : distances) ts.targets.push_back(truncate_target(d, d_star));
  GeometryObjective obj(ts, model.arch.encoding, truncate);
  std::vector<std::uint32_t> ids(points.size());
  std::iota(ids.begin(), ids.end(), 0u);
  Gradients g{zeros_like(model), std::nullopt};
  double loss = obj.batch_loss(model, ids, &g.layers) + lambda_l1 * l1_norm(model);
  add_l1_gradient(model, lambda_l1, g.layers);
  return {loss, std::move(g)};
}

/// Stand-alone attribute loss: mean over points of ||NF(x) - c||^2 + lambda_l1 ||params||_1.
inline std::pair<double, Gradients> attribute_loss(const FieldModel& model, std::span<const Vec3> points,
                                                   std::span<const Vec3> colors, double lambda_l1) {
  AttributeObjective obj(points, colors, model.arch.encoding);
  std::vector<std::uint32_t> ids(points.size());
  std::iota(ids.begin(), ids.end(), 0u);
  Gradients g{zeros_like(model), std::nullopt};
  double loss = (points.empty() ? 0.0 : obj.batch_loss(model, ids, &g.layers)) + lambda_l1 * l1_norm(model);
  add_l1_gradient(model, lambda_l1, g.layers);
  return {loss, std::move(g)};
}

/// Full objective (data loss over every sample + l1 penalty) evaluated in batches.
inline double objective_loss(const FieldModel& model, const Objective& obj, double lambda_l1,
                             std::size_t batch = 10000) {
  const std::size_t n = obj.size();
  double acc = 0.0;
  std::vector<std::uint32_t> ids;
  for (std::size_t b = 0; b < n; b += batch) {
    const std::size_t e = std::min(n, b + batch);
    ids.resize(e - b);
    std::iota(ids.begin(), ids.end(), static_cast<std::uint32_t>(b));
    acc += obj.batch_loss(model, ids, nullptr) * double(e - b);
  }
  return (n ? acc / double(n) : 0.0) + lambda_l1 * l1_norm(model);
}

/// Per-epoch shuffle: Fisher-Yates driven by a seed derived from (param_seed, epoch).
inline void epoch_permutation(std::vector<std::uint32_t>& perm, std::uint64_t param_seed, int epoch) {
  std::iota(perm.begin(), perm.end(), 0u);
  std::mt19937_64 rng(mix_seed(param_seed, 0x5aff1e00ULL + static_cast<std::uint64_t>(epoch)));
  for (std::size_t i = perm.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(perm[i - 1], perm[pick(rng)]);
  }
}

struct FitResult {
  FieldModel model;
  std::vector<double> loss_history;  // per-epoch mean batch loss (including the l1 term)
};

/// Callbacks that let quantization-aware retraining reuse the training loop:
/// `effective` maps the trained (shadow) parameters to the model that is evaluated,
/// `after_step` may project the shadow parameters after each update.
struct StepHooks {
  std::function<FieldModel(const FieldModel&)> effective;
  std::function<void(FieldModel&)> after_step;
  std::function<void(int epoch, const FieldModel&)> after_epoch;
};

inline FitResult fit(FieldModel model, const Objective& obj, const TrainConfig& cfg, const StepHooks& hooks = {}) {
  if (obj.size() == 0) throw Error(ErrorKind::Precondition, "cannot fit on an empty training set");
  if (!(cfg.lr >= 0) || cfg.batch_size < 1 || !(cfg.lambda_l1 >= 0))
    throw Error(ErrorKind::Config, "invalid training configuration");
  FitResult res;
  AdamState adam = make_adam_state(model);
  std::vector<std::uint32_t> perm(obj.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    epoch_permutation(perm, cfg.param_seed, epoch);
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < perm.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(perm.size(), b + cfg.batch_size);
      std::span<const std::uint32_t> ids(perm.data() + b, e - b);
      std::vector<Layer> grads = zeros_like(model);
      double loss;
      if (hooks.effective) {
        const FieldModel eff = hooks.effective(model);
        loss = obj.batch_loss(eff, ids, &grads) + cfg.lambda_l1 * l1_norm(eff);
        add_l1_gradient(eff, cfg.lambda_l1, grads);  // straight-through: d/d shadow = d/d quantized
      } else {
        loss = obj.batch_loss(model, ids, &grads) + cfg.lambda_l1 * l1_norm(model);
        add_l1_gradient(model, cfg.lambda_l1, grads);
      }
      if (!std::isfinite(loss)) {
        std::ostringstream os;
        os << "training diverged: non-finite loss at epoch " << epoch << ", batch " << b / cfg.batch_size;
        throw Error(ErrorKind::Divergence, os.str());
      }
      adam_step(model, grads, adam, cfg.lr, cfg.adam);
      if (hooks.after_step) hooks.after_step(model);
      epoch_loss += loss * double(e - b);
    }
    res.loss_history.push_back(epoch_loss / double(perm.size()));
    if (hooks.after_epoch) hooks.after_epoch(epoch, model);
  }
  res.model = std::move(model);
  return res;
}

}  // namespace nf3d
