#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "pbrs/gradcheck.hpp"
#include "pbrs/neural.hpp"
#include "pbrs/rng.hpp"

using namespace pbrs;

namespace {

// Plain loops, no Eigen products.
std::vector<double> oracle_forward(const Mlp<float>& net, const std::vector<double>& x) {
  std::vector<double> a = x;
  const auto& layers = net.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& L = layers[l];
    std::vector<double> z(L.weight.rows(), 0.0);
    for (Eigen::Index r = 0; r < L.weight.rows(); ++r) {
      double acc = L.bias(r);
      for (Eigen::Index c = 0; c < L.weight.cols(); ++c) acc += double(L.weight(r, c)) * a[c];
      if (l + 1 < layers.size())
        acc = acc > 0 ? acc : 0;
      else if (net.output_activation() == OutputActivation::kTanh)
        acc = std::tanh(acc);
      z[r] = acc;
    }
    a = z;
  }
  return a;
}

}  // namespace

TEST(Neural, IdentityNetwork) {
  Mlp<double> net({3, 3}, OutputActivation::kIdentity, 1);
  net.layers()[0].weight.setIdentity();
  net.layers()[0].bias.setZero();
  Mlp<double>::Vector x(3);
  x << 0.5, -2.0, 7.0;
  EXPECT_EQ(net.forward(x), x);
}

TEST(Neural, TanhHeadBounded) {
  Mlp<float> net({4, 16, 16, 3}, OutputActivation::kTanh, 2);
  for (auto& l : net.layers()) l.weight *= 20.0f;
  SplitMix64 rng(3);
  for (int i = 0; i < 200; ++i) {
    Mlp<float>::Vector x(4);
    for (int k = 0; k < 4; ++k) x(k) = static_cast<float>(rng.uniform(-10, 10));
    const auto y = net.forward(x);
    EXPECT_LE(y.cwiseAbs().maxCoeff(), 1.0f);
  }
}

TEST(Neural, ForwardMatchesOracle) {
  SplitMix64 rng(4);
  for (int i = 0; i < 20; ++i) {
    Mlp<float> net({7, 12, 9, 4}, i % 2 ? OutputActivation::kTanh : OutputActivation::kIdentity, rng.next());
    std::vector<double> x(7);
    Mlp<float>::Vector xf(7);
    for (int k = 0; k < 7; ++k) {
      xf(k) = static_cast<float>(rng.uniform(-1, 1));
      x[k] = xf(k);
    }
    const auto y = net.forward(xf);
    const auto o = oracle_forward(net, x);
    for (int k = 0; k < 4; ++k) EXPECT_NEAR(y(k), o[k], 1e-5);
  }
}

TEST(Neural, ShapeErrors) {
  Mlp<float> net({5, 4, 2}, OutputActivation::kIdentity, 1);
  EXPECT_THROW(net.forward(Mlp<float>::Vector::Zero(4)), ShapeError);
  Mlp<float>::Tape tape;
  net.forward_batch(Mlp<float>::Matrix::Zero(5, 3), tape);
  EXPECT_THROW(net.backward(tape, Mlp<float>::Matrix::Zero(2, 2)), ShapeError);
  Mlp<float> other({5, 3, 2}, OutputActivation::kIdentity, 1);
  EXPECT_THROW(soft_update(net, other, 0.5), ShapeError);
  EXPECT_THROW(Mlp<float>({5}, OutputActivation::kIdentity, 1), ShapeError);
}

TEST(Neural, ZeroUpstreamGivesZeroGradients) {
  Mlp<double> net({6, 8, 8, 3}, OutputActivation::kTanh, 5);
  Mlp<double>::Tape tape;
  net.forward_batch(Mlp<double>::Matrix::Random(6, 4), tape);
  const auto g = net.backward(tape, Mlp<double>::Matrix::Zero(3, 4));
  for (const auto& l : g.layers) {
    EXPECT_EQ(l.weight.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(l.bias.cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Neural, LinearLayerGradientIsOuterProduct) {
  Mlp<double> net({3, 2}, OutputActivation::kIdentity, 6);
  Mlp<double>::Matrix x(3, 1), up(2, 1);
  x << 1.0, -2.0, 0.5;
  up << 0.25, -4.0;
  Mlp<double>::Tape tape;
  net.forward_batch(x, tape);
  const auto g = net.backward(tape, up);
  EXPECT_EQ(g.layers[0].weight, up * x.transpose());
  EXPECT_EQ(g.layers[0].bias, up.col(0));
  EXPECT_EQ(g.input_grad, net.layers()[0].weight.transpose() * up);
}

TEST(Neural, GradientCheckThreeLayer) {
  GradCheckOptions opt;
  opt.max_params = 1u << 30;  // every parameter
  for (int c = 0; c < 5; ++c) {
    const GradCheckResult r = gradient_check_case({10, 16, 16, 16, 4}, OutputActivation::kTanh, 100 + c, opt);
    EXPECT_LT(r.max_rel_error, 1e-4);
    EXPECT_GT(r.checked, 700u);
  }
}

TEST(Neural, GradientCheckTopologies) {
  for (auto [layers, width] : {std::pair{2, 8}, std::pair{3, 32}}) {
    const TopologyCheck tc = gradient_check_topology(layers, width, 20, 7);
    EXPECT_LT(tc.result.max_rel_error, 1e-4) << tc.name;
  }
}

TEST(Neural, AdamZeroGradientKeepsParameters) {
  Mlp<float> net({3, 4, 2}, OutputActivation::kIdentity, 8);
  const auto before = net.layers();
  Mlp<float>::Tape tape;
  net.forward_batch(Mlp<float>::Matrix::Ones(3, 1), tape);
  net.adam_step(net.backward(tape, Mlp<float>::Matrix::Zero(2, 1)), 0.1);
  EXPECT_EQ(net.adam_steps(), 1);
  for (std::size_t l = 0; l < before.size(); ++l) {
    EXPECT_EQ(net.layers()[l].weight, before[l].weight);
    EXPECT_EQ(net.layers()[l].bias, before[l].bias);
  }
}

TEST(Neural, AdamFirstStepIsAboutLr) {
  // Scalar "network": one weight, no bias contribution to the gradient.
  Mlp<double> net({1, 1}, OutputActivation::kIdentity, 9);
  const double w0 = net.layers()[0].weight(0, 0);
  Mlp<double>::Gradients g;
  g.layers.resize(1);
  g.layers[0].weight = Mlp<double>::Matrix::Constant(1, 1, 1.0);
  g.layers[0].bias = Mlp<double>::Vector::Zero(1);
  net.adam_step(g, 0.1);
  // m_hat = 1, v_hat = 1 -> step = lr / (1 + eps).
  EXPECT_NEAR(w0 - net.layers()[0].weight(0, 0), 0.1 / (1.0 + 1e-8), 1e-12);
}

TEST(Neural, AdamMinimizesQuadratic) {
  Mlp<double> net({1, 1}, OutputActivation::kIdentity, 10);
  net.layers()[0].weight(0, 0) = 1.0;
  Mlp<double>::Gradients g;
  g.layers.resize(1);
  g.layers[0].bias = Mlp<double>::Vector::Zero(1);
  int steps = 0;
  for (; steps < 500 && std::abs(net.layers()[0].weight(0, 0)) >= 1e-3; ++steps) {
    g.layers[0].weight = Mlp<double>::Matrix::Constant(1, 1, 2.0 * net.layers()[0].weight(0, 0));
    net.adam_step(g, 0.05);
  }
  EXPECT_LT(std::abs(net.layers()[0].weight(0, 0)), 1e-3) << "after " << steps << " steps";
}

TEST(Neural, AdamRejectsNonFinite) {
  Mlp<float> net({2, 2}, OutputActivation::kIdentity, 11);
  const auto before = net.layers();
  Mlp<float>::Gradients g;
  g.layers.resize(1);
  g.layers[0].weight = Mlp<float>::Matrix::Zero(2, 2);
  g.layers[0].weight(1, 0) = NAN;
  g.layers[0].bias = Mlp<float>::Vector::Zero(2);
  EXPECT_THROW(net.adam_step(g, 0.1), ContractError);
  EXPECT_EQ(net.layers()[0].weight, before[0].weight);
  EXPECT_EQ(net.adam_steps(), 0);
}

TEST(Neural, SoftUpdate) {
  Mlp<float> target({2, 2}, OutputActivation::kIdentity, 1);
  Mlp<float> online({2, 2}, OutputActivation::kIdentity, 2);
  Mlp<float> t = target;
  soft_update(t, online, 0.0);
  EXPECT_EQ(t.layers()[0].weight, target.layers()[0].weight);
  soft_update(t, online, 1.0);
  EXPECT_EQ(t.layers()[0].weight, online.layers()[0].weight);
  target.layers()[0].weight.setZero();
  online.layers()[0].weight.setConstant(2.0f);
  soft_update(target, online, 0.5);
  EXPECT_EQ(target.layers()[0].weight(1, 1), 1.0f);
}

TEST(Neural, FloatAndDoubleAgree) {
  SplitMix64 rng(12);
  Mlp<float> net({40, 128, 128, 128, 128, 128, 6}, OutputActivation::kTanh, 13);
  const Mlp<double> wide = net.cast<double>();
  for (int i = 0; i < 20; ++i) {
    Mlp<float>::Vector x(40);
    for (int k = 0; k < 40; ++k) x(k) = static_cast<float>(rng.uniform(-2, 2));
    const auto yf = net.forward(x);
    const auto yd = wide.forward(x.cast<double>());
    EXPECT_LT((yf.cast<double>() - yd).cwiseAbs().maxCoeff(), 1e-4);
  }
}

TEST(Neural, CheckpointRoundTrip) {
  Mlp<float> net({5, 7, 3}, OutputActivation::kTanh, 14);
  std::stringstream buf;
  save_mlp(net, buf);
  const std::string bytes = buf.str();
  EXPECT_EQ(bytes.substr(0, 4), "MLP1");
  EXPECT_EQ(bytes.size(), 4u + 4u + 3 * 4u + 4u * (5 * 7 + 7 + 7 * 3 + 3));
  const Mlp<float> back = load_mlp(buf, OutputActivation::kTanh);
  EXPECT_EQ(back.topology(), net.topology());
  Mlp<float>::Matrix x = Mlp<float>::Matrix::Random(5, 9);
  EXPECT_EQ(back.forward_batch(x), net.forward_batch(x));
}

TEST(Neural, CheckpointRejectsGarbage) {
  std::stringstream bad("MLP2....");
  EXPECT_THROW(load_mlp(bad, OutputActivation::kTanh), DataError);
  Mlp<float> net({5, 7, 3}, OutputActivation::kTanh, 14);
  std::stringstream buf;
  save_mlp(net, buf);
  std::stringstream cut(buf.str().substr(0, 40));
  EXPECT_THROW(load_mlp(cut, OutputActivation::kTanh), DataError);
}

TEST(Neural, SeededInitIsDeterministicAndBounded) {
  Mlp<float> a({40, 64, 6}, OutputActivation::kTanh, 15), b({40, 64, 6}, OutputActivation::kTanh, 15);
  EXPECT_EQ(a.layers()[0].weight, b.layers()[0].weight);
  EXPECT_LE(a.layers()[0].weight.cwiseAbs().maxCoeff(), 1.0f / std::sqrt(40.0f));
  EXPECT_LE(a.layers()[1].weight.cwiseAbs().maxCoeff(), 1.0f / 8.0f);
}
