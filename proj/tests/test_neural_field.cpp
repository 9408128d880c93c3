#include "test_support.hpp"

using namespace nf3d;
using namespace nf3d::testing;

TEST(Encoding, ZeroInput) {
  const EncodingConfig cfg{2, 1.7};
  const Eigen::VectorXd e = encode(Vec3::Zero(), cfg);
  ASSERT_EQ(e.size(), 15);
  for (int c = 0; c < 3; ++c) {
    const Eigen::VectorXd block = e.segment(c * 5, 5);
    EXPECT_EQ(block, (Eigen::VectorXd(5) << 0, 0, 1, 0, 1).finished());
  }
}

TEST(Encoding, HalfWithOneLevel) {
  const EncodingConfig cfg{1, 1.4};
  const Eigen::VectorXd e = encode(Vec3(0.5, 0.5, 0.5), cfg);
  for (int c = 0; c < 3; ++c) {
    EXPECT_EQ(e[c * 3], 0.5);
    EXPECT_NEAR(e[c * 3 + 1], 1.0, 1e-15);
    EXPECT_NEAR(e[c * 3 + 2], 0.0, 1e-15);
  }
}

TEST(Encoding, LayoutAndDimension) {
  const Vec3 x(0.3, -0.7, 0.11);
  EXPECT_EQ(encode(x, EncodingConfig{0, 1.4}), Eigen::VectorXd(x));
  for (int L = 0; L <= 16; ++L) EXPECT_EQ(encode(x, EncodingConfig{L, 1.4}).size(), 3 * (1 + 2 * L));
  const EncodingConfig cfg{4, 1.4};
  const Eigen::VectorXd e = encode(x, cfg);
  for (int c = 0; c < 3; ++c) {
    EXPECT_EQ(e[c * 9], x[c]);
    for (int k = 0; k < 4; ++k) {
      const double f = std::pow(1.4, k) * std::numbers::pi;
      EXPECT_NEAR(e[c * 9 + 1 + 2 * k], std::sin(f * x[c]), 1e-15);
      EXPECT_NEAR(e[c * 9 + 2 + 2 * k], std::cos(f * x[c]), 1e-15);
    }
  }
}

TEST(Init, BoundsShapesDeterminism) {
  const FieldArch a = make_arch(FieldKind::Sdf, 32, 16);
  const FieldModel m = init_params(a, 5);
  ASSERT_EQ(m.layers.size(), 3u);
  EXPECT_EQ(m.layers[0].weight.rows(), 32);
  EXPECT_EQ(m.layers[0].weight.cols(), 99);
  EXPECT_LE(m.layers[0].weight.cwiseAbs().maxCoeff(), 1.0 / 99.0);
  const double lim = std::sqrt(6.0 / 32.0) / 30.0;
  EXPECT_LE(m.layers[1].weight.cwiseAbs().maxCoeff(), lim);
  EXPECT_LE(m.layers[2].weight.cwiseAbs().maxCoeff(), lim);
  EXPECT_GT(m.layers[1].weight.cwiseAbs().maxCoeff(), 0.5 * lim);
  for (const auto& l : m.layers) EXPECT_EQ(l.bias.cwiseAbs().maxCoeff(), 0.0);
  const FieldModel m2 = init_params(a, 5);
  for (std::size_t l = 0; l < 3; ++l) EXPECT_EQ(m.layers[l].weight, m2.layers[l].weight);
  EXPECT_NE(init_params(a, 6).layers[0].weight, m.layers[0].weight);
  EXPECT_EQ(m.param_count(), std::size_t(32 * 99 + 32 + 32 * 32 + 32 + 32 + 1));
  EXPECT_EQ(init_params(make_arch(FieldKind::Attr, 16, 8), 1).layers.back().weight.rows(), 3);
}

TEST(Forward, Heads) {
  FieldModel m = random_model(FieldKind::Udf, 8, 2, 1, 3);
  // Force the pre-activation to -0.3 through the output bias alone.
  m.layers.back().weight.setZero();
  m.layers.back().bias[0] = -0.3;
  EXPECT_NEAR(forward(m, Vec3(0.1, 0.2, 0.3))[0], 0.3, 1e-15);
  m.arch.kind = FieldKind::Sdf;
  EXPECT_NEAR(forward(m, Vec3(0.1, 0.2, 0.3))[0], -0.3, 1e-15);
  m.arch.head = HeadActivation::Relu;
  EXPECT_EQ(forward(m, Vec3(0.1, 0.2, 0.3))[0], 0.0);
}

TEST(Forward, ZeroModelIsZero) {
  FieldModel m = init_params(make_arch(FieldKind::Udf, 16, 4), 1);
  for (auto& l : m.layers) l.weight.setZero(), l.bias.setZero();
  for (const auto& x : random_points(20, 1)) EXPECT_EQ(forward(m, x)[0], 0.0);
}

TEST(Forward, UdfIsNonNegative) {
  const FieldModel m = random_model(FieldKind::Udf, 16, 6, 2, 9, 3.0);
  Eigen::Matrix3Xd pts(3, 2000);
  const auto p = random_points(2000, 2, -1.5, 1.5);
  for (int i = 0; i < 2000; ++i) pts.col(i) = p[static_cast<std::size_t>(i)];
  EXPECT_GE(forward_batch(m, pts).minCoeff(), 0.0);
}

TEST(Forward, HeadsAgreeOnPositivePreActivations) {
  FieldModel m = random_model(FieldKind::Udf, 16, 4, 2, 4);
  m.layers.back().bias[0] = 10.0;  // keeps every pre-activation positive
  const auto pts = random_points(50, 4);
  for (const auto& x : pts) {
    FieldModel a = m, r = m, i = m;
    a.arch.head = HeadActivation::Abs;
    r.arch.head = HeadActivation::Relu;
    i.arch.head = HeadActivation::Identity;
    const double va = forward(a, x)[0];
    ASSERT_GT(va, 0.0);
    EXPECT_EQ(va, forward(r, x)[0]);
    EXPECT_EQ(va, forward(i, x)[0]);
  }
}

TEST(Forward, BatchMatchesSingle) {
  const FieldModel m = random_model(FieldKind::Attr, 12, 3, 2, 4);
  const auto pts = random_points(37, 8);
  Eigen::Matrix3Xd X(3, 37);
  for (int i = 0; i < 37; ++i) X.col(i) = pts[static_cast<std::size_t>(i)];
  const Eigen::MatrixXd out = forward_batch(m, X);
  ASSERT_EQ(out.rows(), 3);
  for (int i = 0; i < 37; ++i) EXPECT_LT((out.col(i) - forward(m, pts[static_cast<std::size_t>(i)])).norm(), 1e-14);
}

TEST(Backward, ZeroUpstream) {
  const FieldModel m = random_model(FieldKind::Sdf, 8, 3, 2, 1);
  const Gradients g = backward(m, Vec3(0.2, 0.1, -0.4), Eigen::VectorXd::Zero(1));
  for (const auto& l : g.layers) {
    EXPECT_EQ(l.weight.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(l.bias.cwiseAbs().maxCoeff(), 0.0);
  }
  EXPECT_EQ(g.input->norm(), 0.0);
}

TEST(Backward, LinearModelInputGradient) {
  FieldArch a = make_arch(FieldKind::Sdf, 4, 0);
  a.num_hidden = 0;
  FieldModel m = init_params(a, 1);
  ASSERT_EQ(m.layers.size(), 1u);
  m.layers[0].weight << 0.7, -1.3, 2.5;
  const Gradients g = backward(m, Vec3(0.3, 0.4, 0.5), Eigen::VectorXd::Ones(1));
  EXPECT_NEAR((*g.input - Vec3(0.7, -1.3, 2.5)).norm(), 0.0, 1e-15);
}

namespace {

double output_dot(const FieldModel& m, const Vec3& x, const Eigen::VectorXd& up) { return forward(m, x).dot(up); }

/// Relative error with an absolute floor for gradients that are numerically zero.
double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

/// Central difference at step h, Richardson-extrapolated with step h/2.
template <class F>
double central_difference(F&& f, double h) {
  const auto d = [&](double s) { return (f(s) - f(-s)) / (2 * s); };
  return (4 * d(h / 2) - d(h)) / 3;
}

}  // namespace

TEST(Backward, FiniteDifferencesAllHeads) {
  const double h = 1e-4;
  int triples = 0;
  std::mt19937_64 rng(2024);
  for (std::uint64_t s = 0; s < 12; ++s) {
    for (auto head : {HeadActivation::Abs, HeadActivation::Relu, HeadActivation::Identity}) {
      const FieldKind kind = s % 3 == 0 ? FieldKind::Attr : (s % 3 == 1 ? FieldKind::Udf : FieldKind::Sdf);
      FieldModel m = random_model(kind, 6 + int(s % 4), 2 + int(s % 3), 1 + int(s % 2), s, 1.0, head);
      for (const auto& x : random_points(4, s * 31 + 7, -0.9, 0.9)) {
        Eigen::VectorXd up = Eigen::VectorXd::Random(m.arch.output_dim);
        const Gradients g = backward(m, x, up);
        FieldModel lin = m;
        lin.arch.head = HeadActivation::Identity;
        const double pre = forward(lin, x)[0];
        if (head != HeadActivation::Identity && kind != FieldKind::Attr && std::abs(pre) < 1e-2) continue;
        for (std::size_t l = 0; l < m.layers.size(); ++l) {
          std::uniform_int_distribution<Eigen::Index> pr(0, m.layers[l].weight.rows() - 1);
          std::uniform_int_distribution<Eigen::Index> pc(0, m.layers[l].weight.cols() - 1);
          for (int rep = 0; rep < 3; ++rep) {
            const Eigen::Index r = pr(rng), c = pc(rng);
            const double fd = central_difference(
                [&](double e) {
                  FieldModel p = m;
                  p.layers[l].weight(r, c) += e;
                  return output_dot(p, x, up);
                },
                h);
            EXPECT_LE(rel_err(g.layers[l].weight(r, c), fd), 1e-4) << "layer " << l;
            const double fdb = central_difference(
                [&](double e) {
                  FieldModel p = m;
                  p.layers[l].bias[r] += e;
                  return output_dot(p, x, up);
                },
                h);
            EXPECT_LE(rel_err(g.layers[l].bias[r], fdb), 1e-4) << "bias layer " << l;
          }
        }
        for (int c = 0; c < 3; ++c) {
          const double fd = central_difference(
              [&](double e) {
                Vec3 xp = x;
                xp[c] += e;
                return output_dot(m, xp, up);
              },
              h);
          EXPECT_LE(rel_err((*g.input)[c], fd), 1e-4) << "input " << c;
        }
        ++triples;
      }
    }
  }
  EXPECT_GE(triples, 100);
}

TEST(Backward, BatchedInputGradientMatchesSingle) {
  const FieldModel m = random_model(FieldKind::Udf, 10, 4, 2, 77);
  const auto pts = random_points(25, 3);
  Eigen::Matrix3Xd X(3, 25);
  for (int i = 0; i < 25; ++i) X.col(i) = pts[static_cast<std::size_t>(i)];
  const auto [val, grad] = value_and_input_gradient(m, X);
  for (int i = 0; i < 25; ++i) {
    const Gradients g = backward(m, pts[static_cast<std::size_t>(i)], Eigen::VectorXd::Ones(1));
    EXPECT_LT((grad.col(i) - *g.input).norm(), 1e-12);
    EXPECT_NEAR(val[i], forward(m, pts[static_cast<std::size_t>(i)])[0], 1e-14);
  }
}

TEST(Params, FlattenRoundTrip) {
  const FieldModel m = random_model(FieldKind::Sdf, 7, 2, 2, 1);
  const Eigen::VectorXd v = flatten(m.layers);
  EXPECT_EQ(std::size_t(v.size()), m.param_count());
  std::vector<Layer> back = zeros_like(m);
  unflatten(v, back);
  for (std::size_t l = 0; l < back.size(); ++l) {
    EXPECT_EQ(back[l].weight, m.layers[l].weight);
    EXPECT_EQ(back[l].bias, m.layers[l].bias);
  }
  EXPECT_EQ(v[0], m.layers[0].weight(0, 0));
  EXPECT_EQ(v[1], m.layers[0].weight(0, 1));
}
