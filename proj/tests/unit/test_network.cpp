// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "keygaze/network.hpp"
#include "test_support.hpp"

namespace keygaze {
namespace {

TEST(ParamCount, StandardArchitecture) {
  const ModelWeights w = init_weights(0);
  EXPECT_EQ(param_count(w), 283u);
  const ParamLayout l = w.layout();
  EXPECT_EQ(l.fc1_weight - l.input, 30u);
  EXPECT_EQ(l.fc2_weight - l.fc1_weight, 110u);
  EXPECT_EQ(l.out_weight - l.fc2_weight, 110u);
  EXPECT_EQ(l.total - l.out_weight, 33u);
  EXPECT_EQ(w.params.size(), l.total);
  EXPECT_EQ(w.arch.tag(), "cgu10-fc10-fc10-out3");
}

TEST(ParamCount, OtherDescriptors) {
  ArchDescriptor five;
  five.input_units = 5;
  // 5 CGUs, then 10x5+10, 10x10+10, 3x10+3.
  EXPECT_EQ(param_count(five), 15u + 60u + 110u + 33u);
  EXPECT_FALSE(five.is_standard());
  EXPECT_EQ(param_count(ArchDescriptor::standard(InputVariant::Net0)), 20u + 110u + 110u + 33u);
  EXPECT_EQ(param_count(ArchDescriptor::standard(InputVariant::ReluConf)), 30u + 160u + 110u + 33u);
}

TEST(InitWeights, OnesAndHeStatistics) {
  const ModelWeights a = init_weights(42);
  const ModelWeights b = init_weights(42);
  EXPECT_EQ(a, b);
  EXPECT_NE(a.params, init_weights(43).params);
  for (std::size_t u = 0; u < 10; ++u) {
    const CguParams p = a.cgu(u);
    EXPECT_EQ(p.w_q, 1.0);
    EXPECT_EQ(p.b_q, 1.0);
    EXPECT_EQ(p.w_c, 1.0);
  }
  const ParamLayout l = a.layout();
  for (std::size_t i = l.fc1_bias; i < l.fc2_weight; ++i) EXPECT_EQ(a.params[i], 0.0);
  for (std::size_t i = l.fc2_bias; i < l.out_weight; ++i) EXPECT_EQ(a.params[i], 0.0);
  for (std::size_t i = l.out_bias; i < l.total; ++i) EXPECT_EQ(a.params[i], 0.0);
  EXPECT_EQ(a.conf_mean, 0.0);
  EXPECT_EQ(a.conf_std, 1.0);

  // Pooled over many seeds, fc1 weights have variance close to 2 / 10.
  double sum = 0.0;
  double sq = 0.0;
  std::size_t n = 0;
  for (std::uint64_t s = 0; s < 200; ++s) {
    const ModelWeights w = init_weights(s);
    for (std::size_t i = l.fc1_weight; i < l.fc1_bias; ++i) {
      sum += w.params[i];
      sq += w.params[i] * w.params[i];
      ++n;
    }
  }
  const double mean = sum / static_cast<double>(n);
  const double var = sq / static_cast<double>(n) - mean * mean;
  EXPECT_NEAR(mean, 0.0, 0.01);
  EXPECT_NEAR(var, 0.2, 0.01);
}

TEST(Cgu, ClosedForms) {
  EXPECT_DOUBLE_EQ(cgu_forward(0.5, 0.0, {}), 0.75);
  EXPECT_LT(cgu_forward(0.7, -60.0, {}), 1e-20);
  EXPECT_EQ(cgu_forward(-2.0, 3.0, {}), 0.0);
  EXPECT_EQ(cgu_forward(0.3, 1.0, {1.0, -0.5, 2.0}), 0.0);
}

TEST(Cgu, GateMonotoneInConfidence) {
  const CguParams p{0.8, 0.3, 1.7};
  double prev = cgu_forward(0.4, -8.0, p);
  for (double c = -7.9; c <= 8.0; c += 0.1) {
    const double v = cgu_forward(0.4, c, p);
    EXPECT_GT(v, prev);
    prev = v;
  }
}

TEST(Cgu, AbsentKeypointGatesBelowMeanConfidence) {
  const double mean = 0.62;
  const double stddev = 0.3;
  const CguParams p{1.0, 1.0, 0.9};
  const double absent = sigmoid(p.w_c * (0.0 - mean) / stddev);
  const double typical = sigmoid(p.w_c * (mean - mean) / stddev);
  EXPECT_LT(absent, typical);
}

TEST(Activations, Stable) {
  EXPECT_EQ(sigmoid(0.0), 0.5);
  EXPECT_NEAR(sigmoid(800.0), 1.0, 0.0);
  EXPECT_GT(sigmoid(-700.0), 0.0);
  EXPECT_NEAR(softplus(0.0), std::log(2.0), 1e-15);
  EXPECT_DOUBLE_EQ(softplus(800.0), 800.0);
  EXPECT_GT(softplus(-700.0), 0.0);
  EXPECT_TRUE(std::isfinite(softplus(-1e6)));
}

/// Four layers rolled out by hand for the all-zero input.
TEST(Forward, ZeroInputIsolatesBiases) {
  ModelWeights w = init_weights(9);
  Rng rng(1);
  for (double& p : w.params) p = rng.uniform(-1.0, 1.0);
  w.conf_mean = 0.4;
  w.conf_std = 0.25;
  const ParamLayout l = w.layout();

  std::array<double, 10> in{};
  for (std::size_t u = 0; u < 10; ++u) {
    const CguParams c = w.cgu(u);
    in[u] = std::max(0.0, c.b_q) * sigmoid(c.w_c * (0.0 - 0.4) / 0.25);
  }
  auto dense = [&](std::size_t wo, std::size_t bo, std::size_t rows, const auto& x, bool relu) {
    std::array<double, 10> y{};
    for (std::size_t r = 0; r < rows; ++r) {
      double acc = w.params[bo + r];
      for (std::size_t c = 0; c < 10; ++c) acc += w.params[wo + r * 10 + c] * x[c];
      y[r] = relu ? std::max(0.0, acc) : acc;
    }
    return y;
  };
  const auto h1 = dense(l.fc1_weight, l.fc1_bias, 10, in, true);
  const auto h2 = dense(l.fc2_weight, l.fc2_bias, 10, h1, true);
  const auto out = dense(l.out_weight, l.out_bias, 3, h2, false);

  const GazePrediction p = forward(FeatureVector{}, w);
  EXPECT_NEAR(p.g.x, out[0], 1e-14);
  EXPECT_NEAR(p.g.y, out[1], 1e-14);
  EXPECT_NEAR(p.sigma, std::log1p(std::exp(out[2])) + kSigmaFloor, 1e-14);
}

TEST(Forward, DeterministicAndSigmaFloored) {
  Rng rng(4);
  for (int trial = 0; trial < 500; ++trial) {
    ModelWeights w = init_weights(trial);
    for (double& p : w.params) p += rng.normal(0.0, 3.0);
    const FeatureVector f = test::random_sample(rng).features;
    const GazePrediction a = forward(f, w);
    const GazePrediction b = forward(f, w);
    EXPECT_EQ(a.g, b.g);
    EXPECT_EQ(a.sigma, b.sigma);
    EXPECT_GE(a.sigma, kSigmaFloor);
    EXPECT_NEAR(norm(a.g_unit), 1.0, 1e-12);
  }
}

TEST(Backward, ZeroUpstreamGivesZeroGradient) {
  Rng rng(6);
  const ModelWeights w = init_weights(1);
  ForwardCache cache;
  forward(test::random_sample(rng).features, w, &cache);
  const std::vector<double> g = backward(cache, w, OutputGrad{});
  ASSERT_EQ(g.size(), param_count(w));
  for (double v : g) EXPECT_EQ(v, 0.0);
}

TEST(Backward, ClosedGateSilencesCoordinatePath) {
  ModelWeights w = init_weights(2);
  w.conf_mean = 0.5;
  w.conf_std = 0.01;
  w.set_cgu(0, {1.0, 1.0, 1.0});  // nose x; gate sees (0 - 0.5) / 0.01 = -50
  FeatureVector f;
  f.values = {0.3, 0.2, 0.0, -0.5, -0.4, 0.9, 0.5, -0.4, 0.9, 0, 0, 0, 0, 0, 0};
  f.present = {false, true, true, false, false};
  ForwardCache cache;
  forward(f, w, &cache);
  ASSERT_LT(cache.gate[0], 1e-12);
  const std::vector<double> g = backward(cache, w, {0.7, -1.3, 0.4});
  const std::size_t at = w.layout().input;
  EXPECT_LT(std::abs(g[at + 0]), 1e-12);
  EXPECT_LT(std::abs(g[at + 1]), 1e-12);
  // The eye units are open and do receive gradient.
  double eye = 0.0;
  for (std::size_t i = at + 6; i < at + 18; ++i) eye += std::abs(g[i]);
  EXPECT_GT(eye, 1e-6);
}

TEST(Backward, AccumulatesIntoSpan) {
  Rng rng(7);
  const ModelWeights w = init_weights(3);
  ForwardCache cache;
  forward(test::random_sample(rng).features, w, &cache);
  const OutputGrad up{0.2, -0.1, 0.5};
  const std::vector<double> once = backward(cache, w, up);
  std::vector<double> twice(once.size(), 0.0);
  backward(cache, w, up, twice);
  backward(cache, w, up, twice);
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_DOUBLE_EQ(twice[i], 2.0 * once[i]);
}

}  // namespace
}  // namespace keygaze
