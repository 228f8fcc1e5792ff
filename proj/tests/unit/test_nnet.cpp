#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "ventctl/errors.hpp"
#include "ventctl/nnet.hpp"

namespace ventctl {
namespace {

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1e-6, std::abs(a), std::abs(b)});
}

// Scalar loss sum(y .* w) for a fixed weighting w.
double weighted_output(const Mlp& net, const Vec& x, const Vec& w) {
  return net.forward(x).dot(w);
}

TEST(Mlp, ZeroWeightsGiveFinalBias) {
  Rng rng(1);
  const std::size_t widths[] = {3, 4, 2};
  Mlp net(widths, rng);
  for (DenseLayer& l : net.mutable_layers()) l.weights.setZero();
  net.mutable_layers().back().bias << 0.5, -1.5;
  const Vec y = net.forward(Vec(Vec::Constant(3, 7.0)));
  EXPECT_DOUBLE_EQ(y(0), 0.5);
  EXPECT_DOUBLE_EQ(y(1), -1.5);
}

TEST(Mlp, IdentityLinearLayer) {
  DenseLayer l{Mat::Identity(3, 3), Vec::Zero(3), Activation::kLinear};
  Mlp net({l});
  const Vec x = (Vec(3) << 1.0, -2.0, 3.5).finished();
  EXPECT_EQ(net.forward(x), x);
}

TEST(Mlp, HandComputedTwoTwoOne) {
  Mat w1(2, 2);
  w1 << 0.5, -1.0, 2.0, 0.25;
  DenseLayer l1{w1, (Vec(2) << 0.1, -0.2).finished(), Activation::kTanh};
  Mat w2(1, 2);
  w2 << 1.5, -0.5;
  DenseLayer l2{w2, (Vec(1) << 0.3).finished(), Activation::kLinear};
  Mlp net({l1, l2});
  const double x0 = 0.4, x1 = -0.8;
  const double h0 = std::tanh(0.5 * x0 - 1.0 * x1 + 0.1);
  const double h1 = std::tanh(2.0 * x0 + 0.25 * x1 - 0.2);
  const double expected = 1.5 * h0 - 0.5 * h1 + 0.3;
  const double in[] = {x0, x1};
  EXPECT_NEAR(net.forward_scalar(in), expected, 1e-15);
}

TEST(Mlp, ForwardIsPure) {
  Rng rng(2);
  const std::size_t widths[] = {5, 8, 8, 3};
  const Mlp net(widths, rng);
  const Vec x = Vec::Random(5);
  const Vec a = net.forward(x);
  const Vec b = net.forward(x);
  EXPECT_EQ(a, b);
}

TEST(Mlp, InitializationIsBoundedAndSeeded) {
  Rng a(3), b(3);
  const std::size_t widths[] = {16, 4, 1};
  const Mlp na(widths, a), nb(widths, b);
  EXPECT_EQ(na.parameters(), nb.parameters());
  const double bound = 1.0 / std::sqrt(16.0);
  EXPECT_LE(na.layers()[0].weights.cwiseAbs().maxCoeff(), bound);
  EXPECT_EQ(na.layers()[0].activation, Activation::kTanh);
  EXPECT_EQ(na.layers()[1].activation, Activation::kLinear);
}

TEST(Backward, LinearLayerClosedForm) {
  Mat w(2, 3);
  w << 1, 2, 3, -1, 0.5, 0;
  Mlp net({DenseLayer{w, Vec::Zero(2), Activation::kLinear}});
  const Vec x = (Vec(3) << 0.2, -0.4, 1.0).finished();
  const Vec dy = (Vec(2) << 1.5, -2.0).finished();
  Tape tape;
  net.forward(x, &tape);
  const BackwardResult r = backward(net, tape, dy);
  EXPECT_TRUE(r.grads.weights[0].isApprox(dy * x.transpose()));
  EXPECT_TRUE(r.grads.bias[0].isApprox(dy));
  EXPECT_TRUE(Vec(r.dx).isApprox(w.transpose() * dy));
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
  Rng rng(4);
  const std::size_t widths[] = {4, 6, 2};
  const Mlp net(widths, rng);
  Tape tape;
  net.forward(Vec(Vec::Random(4)), &tape);
  const BackwardResult r = backward(net, tape, Mat::Zero(2, 1));
  for (double g : r.grads.flatten()) EXPECT_EQ(g, 0.0);
  EXPECT_EQ(r.dx.norm(), 0.0);
}

TEST(Backward, MatchesFiniteDifferencesOnRandomNets) {
  Rng rng(5);
  std::uniform_int_distribution<std::size_t> width(1, 8);
  std::uniform_int_distribution<std::size_t> depth(1, 3);
  const double h = 1e-5;
  double worst = 0.0;
  for (int draw = 0; draw < 100; ++draw) {
    std::vector<std::size_t> widths{width(rng)};
    const std::size_t d = depth(rng);
    for (std::size_t i = 0; i < d; ++i) widths.push_back(width(rng));
    Mlp net(widths, rng);
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    Vec x(static_cast<Eigen::Index>(widths.front()));
    for (auto& v : x) v = u(rng);
    Vec w(static_cast<Eigen::Index>(widths.back()));
    for (auto& v : w) v = u(rng);

    Tape tape;
    net.forward(x, &tape);
    const BackwardResult r = backward(net, tape, w);
    const std::vector<double> analytic = r.grads.flatten();
    std::vector<double> theta = net.parameters();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double t0 = theta[i];
      theta[i] = t0 + h;
      net.set_parameters(theta);
      const double up = weighted_output(net, x, w);
      theta[i] = t0 - h;
      net.set_parameters(theta);
      const double down = weighted_output(net, x, w);
      theta[i] = t0;
      net.set_parameters(theta);
      const double numeric = (up - down) / (2 * h);
      if (std::abs(numeric) + std::abs(analytic[i]) < 1e-7) continue;
      worst = std::max(worst, rel_err(analytic[i], numeric));
    }
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      Vec xp = x, xm = x;
      xp(j) += h;
      xm(j) -= h;
      const double numeric = (weighted_output(net, xp, w) - weighted_output(net, xm, w)) / (2 * h);
      if (std::abs(numeric) + std::abs(r.dx(j, 0)) < 1e-7) continue;
      worst = std::max(worst, rel_err(r.dx(j, 0), numeric));
    }
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(Backward, ChainedForwardsMatchFiniteDifferences) {
  // x_{t+1} = net(x_t), loss = sum of the final state; differentiate the
  // parameters through T = 8 applications.
  Rng rng(6);
  const std::size_t widths[] = {3, 6, 3};
  Mlp net(widths, rng);
  const Vec x0 = (Vec(3) << 0.3, -0.2, 0.5).finished();
  constexpr int T = 8;
  const auto loss = [&](const Mlp& n) {
    Vec x = x0;
    for (int t = 0; t < T; ++t) x = n.forward(x);
    return x.sum();
  };
  std::vector<Tape> tapes(T);
  Vec x = x0;
  for (int t = 0; t < T; ++t) x = net.forward(x, &tapes[t]);
  MlpGradients grads = net.zero_gradients();
  Mat dy = Mat::Ones(3, 1);
  for (int t = T - 1; t >= 0; --t) dy = backward_accumulate(net, tapes[t], dy, grads);
  const std::vector<double> analytic = grads.flatten();
  std::vector<double> theta = net.parameters();
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double t0 = theta[i];
    theta[i] = t0 + h;
    net.set_parameters(theta);
    const double up = loss(net);
    theta[i] = t0 - h;
    net.set_parameters(theta);
    const double down = loss(net);
    theta[i] = t0;
    net.set_parameters(theta);
    const double numeric = (up - down) / (2 * h);
    if (std::abs(numeric) + std::abs(analytic[i]) < 1e-7) continue;
    worst = std::max(worst, rel_err(analytic[i], numeric));
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(Backward, BatchGradientIsSumOfSamples) {
  Rng rng(7);
  const std::size_t widths[] = {2, 5, 1};
  const Mlp net(widths, rng);
  const Mat x = Mat::Random(2, 4);
  Tape tape;
  net.forward(x, &tape);
  const BackwardResult batch = backward(net, tape, Mat::Ones(1, 4));
  MlpGradients sum = net.zero_gradients();
  for (int c = 0; c < 4; ++c) {
    Tape t;
    net.forward(Vec(x.col(c)), &t);
    sum.add(backward(net, t, Mat::Ones(1, 1)).grads);
  }
  const auto a = batch.grads.flatten();
  const auto b = sum.flatten();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(Backward, StaleTapeIsRejected) {
  Rng rng(8);
  const std::size_t widths[] = {2, 3, 1};
  Mlp net(widths, rng);
  Tape tape;
  net.forward(Vec(Vec::Ones(2)), &tape);
  net.zero_output_layer();
  EXPECT_THROW(backward(net, tape, Mat::Ones(1, 1)), StaleTape);
  Mlp other(widths, rng);
  Tape t2;
  other.forward(Vec(Vec::Ones(2)), &t2);
  EXPECT_THROW(backward(net, t2, Mat::Ones(1, 1)), StaleTape);
  Tape t3;
  net.forward(Vec(Vec::Ones(2)), &t3);
  EXPECT_THROW(backward(net, t3, Mat::Ones(2, 1)), ShapeMismatch);
}

TEST(Sgd, ZeroLearningRateLeavesParameters) {
  Rng rng(9);
  const std::size_t widths[] = {3, 3, 1};
  Mlp net(widths, rng);
  const auto before = net.parameters();
  MlpGradients g = net.zero_gradients();
  for (auto& w : g.weights) w.setConstant(1.0);
  sgd_step(net, g, 0.0, 1e-5);
  EXPECT_EQ(net.parameters(), before);
}

TEST(Sgd, ScalarStep) {
  Mat w(1, 1);
  w << 1.0;
  Mlp net({DenseLayer{w, Vec::Zero(1), Activation::kLinear}});
  MlpGradients g = net.zero_gradients();
  g.weights[0](0, 0) = 2.0;
  sgd_step(net, g, 0.1, 0.0);
  EXPECT_NEAR(net.layers()[0].weights(0, 0), 0.8, 1e-15);
}

TEST(Sgd, WeightDecayOnlyStep) {
  Mat w(1, 1);
  w << 3.0;
  Mlp net({DenseLayer{w, Vec::Zero(1), Activation::kLinear}});
  sgd_step(net, net.zero_gradients(), 0.1, 1e-5);
  EXPECT_NEAR(net.layers()[0].weights(0, 0), 3.0 * (1.0 - 0.1 * 1e-5), 1e-15);
}

TEST(Sgd, CosineSchedule) {
  EXPECT_DOUBLE_EQ(cosine_lr(0.1, 0, 30), 0.1);
  EXPECT_NEAR(cosine_lr(0.1, 15, 30), 0.05, 1e-15);
  EXPECT_LT(cosine_lr(0.1, 29, 30), 0.001);
}

TEST(Mlp, JsonRoundTripIsExact) {
  Rng rng(10);
  const std::size_t widths[] = {4, 7, 2};
  const Mlp net(widths, rng);
  const Mlp back = mlp_from_json(nlohmann::json::parse(to_json(net).dump()));
  EXPECT_EQ(back.parameters(), net.parameters());
  EXPECT_EQ(back.widths(), net.widths());
  nlohmann::json bad = to_json(net);
  bad["version"] = 99;
  EXPECT_THROW(mlp_from_json(bad), ConfigInvalid);
}

TEST(Mlp, CopiesAreIndependent) {
  Rng rng(11);
  const std::size_t widths[] = {2, 2, 1};
  Mlp a(widths, rng);
  Mlp b = a;
  EXPECT_NE(a.id(), b.id());
  b.zero_output_layer();
  EXPECT_NE(a.parameters(), b.parameters());
}

}  // namespace
}  // namespace ventctl
