#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "trn/model.hpp"
#include "trn/nn.hpp"

namespace trn {
namespace {

TEST(MlpForward, HandComputedAffineRelu) {
  DenseLayer<double> l(2, 2, Activation::relu);
  l.weight(0, 0) = 2;
  l.weight(1, 1) = 3;
  l.bias()[0] = 1;
  l.bias()[1] = -1;
  const Mlp<double> m({l});
  const std::vector<double> x{1, 0};
  EXPECT_EQ(mlp_forward(m, std::span<const double>(x)), (std::vector<double>{3, 0}));
}

TEST(MlpForward, ZeroWeightsGiveActivatedBias) {
  auto m = Mlp<double>::stack({3, 2}, Activation::relu, Activation::relu);
  m.layer(0).bias()[0] = -1.5;
  m.layer(0).bias()[1] = 2.5;
  const std::vector<double> x{4, -2, 7};
  EXPECT_EQ(mlp_forward(m, std::span<const double>(x)), (std::vector<double>{0, 2.5}));

  m.layer(0) = DenseLayer<double>(3, 2, Activation::none);
  m.layer(0).bias()[0] = -1.5;
  EXPECT_EQ(mlp_forward(m, std::span<const double>(x)), (std::vector<double>{-1.5, 0}));
}

TEST(MlpForward, MatchesStraightLineOracle) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    auto m = Mlp<double>::stack({7, 5, 3}, Activation::relu, Activation::none);
    oracle::randomize(m, rng);
    const auto x = oracle::random_vector(7, rng);
    const auto got = mlp_forward(m, std::span<const double>(x));
    const auto want = oracle::straight_line_mlp(m, x);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
  }
}

TEST(MlpForward, IsBitDeterministic) {
  std::mt19937_64 rng(3);
  auto m = Mlp<float>::stack({16, 64, 64}, Activation::relu, Activation::relu);
  glorot_uniform_init(m, rng);
  std::vector<float> x(16);
  for (auto& v : x) v = std::uniform_real_distribution<float>(-1, 1)(rng);
  EXPECT_EQ(mlp_forward(m, std::span<const float>(x)), mlp_forward(m, std::span<const float>(x)));
}

TEST(MlpForward, RejectsWrongInputLength) {
  const auto m = Mlp<double>::stack({3, 2}, Activation::none, Activation::none);
  const std::vector<double> x{1, 2};
  EXPECT_THROW(mlp_forward(m, std::span<const double>(x)), InvalidInput);
}

TEST(Mlp, RejectsInconsistentLayers) {
  std::vector<DenseLayer<double>> layers;
  layers.emplace_back(3, 4, Activation::relu);
  layers.emplace_back(5, 2, Activation::none);
  EXPECT_THROW(Mlp<double>(std::move(layers)), InvalidInput);
}

TEST(MlpBackward, ZeroUpstreamGivesZeroGradients) {
  std::mt19937_64 rng(5);
  auto m = Mlp<double>::stack({4, 6, 3}, Activation::relu, Activation::none);
  oracle::randomize(m, rng);
  const auto x = oracle::random_vector(4, rng);
  const std::vector<double> up(3, 0.0);
  const auto r = mlp_backward(m, std::span<const double>(x), std::span<const double>(up));
  EXPECT_EQ(r.grads, GradientSet<double>::zeros_like(m));
  EXPECT_EQ(r.input_gradient, std::vector<double>(4, 0.0));
}

TEST(MlpBackward, LinearLayerWeightGradientIsOuterProduct) {
  std::mt19937_64 rng(8);
  auto m = Mlp<double>::stack({3, 2}, Activation::none, Activation::none);
  oracle::randomize(m, rng);
  const std::vector<double> x{0.5, -2, 3};
  const std::vector<double> up{1.5, -0.25};
  const auto r = mlp_backward(m, std::span<const double>(x), std::span<const double>(up));
  for (std::size_t o = 0; o < 2; ++o) {
    for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(r.grads.layers[0].weights[o * 3 + i], up[o] * x[i]);
    EXPECT_DOUBLE_EQ(r.grads.layers[0].bias[o], up[o]);
  }
}

TEST(MlpBackward, RejectsWrongUpstreamLength) {
  const auto m = Mlp<double>::stack({3, 2}, Activation::none, Activation::none);
  const std::vector<double> x{1, 2, 3};
  const std::vector<double> up{1};
  EXPECT_THROW(mlp_backward(m, std::span<const double>(x), std::span<const double>(up)), InvalidInput);
}

// Every relation-head shape used by the library: g (d*D -> H -> H, ReLU),
// h (H -> C) and the pooled head (D -> H -> H -> C).
TEST(MlpBackward, MatchesFiniteDifferencesOnRandomTriples) {
  struct Shape {
    std::vector<std::size_t> widths;
    Activation hidden, output;
  };
  const std::vector<Shape> shapes{{{6, 4, 4}, Activation::relu, Activation::relu},
                                  {{4, 2}, Activation::none, Activation::none},
                                  {{3, 4, 4, 2}, Activation::relu, Activation::none},
                                  {{2, 5, 3}, Activation::relu, Activation::none}};
  std::mt19937_64 rng(2024);
  std::size_t checked = 0, skipped = 0;
  for (const auto& shape : shapes) {
    for (int trial = 0; trial < 100; ++trial) {
      auto m = Mlp<double>::stack(std::span<const std::size_t>(shape.widths), shape.hidden, shape.output);
      oracle::randomize(m, rng);
      auto x = oracle::random_vector(m.in_dim(), rng);
      const auto up = oracle::random_vector(m.out_dim(), rng);
      const auto r = mlp_backward(m, std::span<const double>(x), std::span<const double>(up));

      auto objective = [&] {
        const auto y = mlp_forward(m, std::span<const double>(x));
        return std::inner_product(y.begin(), y.end(), up.begin(), 0.0);
      };
      auto pattern = [&] { return oracle::relu_pattern(m, std::span<const double>(x)); };
      auto check = [&](double& value, double analytic) {
        const auto num = oracle::central_difference(value, 1e-5, objective, pattern);
        if (!num) {
          ++skipped;
          return;
        }
        ++checked;
        EXPECT_LT(oracle::relative_error(analytic, *num), 1e-4) << "analytic " << analytic << " numeric " << *num;
      };
      for (std::size_t li = 0; li < m.depth(); ++li) {
        auto w = m.layer(li).weights();
        for (std::size_t i = 0; i < w.size(); ++i) check(w[i], r.grads.layers[li].weights[i]);
        auto b = m.layer(li).bias();
        for (std::size_t i = 0; i < b.size(); ++i) check(b[i], r.grads.layers[li].bias[i]);
      }
      for (std::size_t i = 0; i < x.size(); ++i) check(x[i], r.input_gradient[i]);
    }
  }
  EXPECT_GT(checked, 10000u);
  EXPECT_LT(static_cast<double>(skipped), 0.01 * static_cast<double>(checked));
}

TEST(SoftmaxCrossEntropy, UniformLogitsGiveLogC) {
  for (std::size_t C : {2u, 5u, 174u}) {
    const std::vector<double> z(C, 0.7);
    const auto r = softmax_cross_entropy(std::span<const double>(z), C - 1);
    EXPECT_NEAR(r.loss, std::log(static_cast<double>(C)), 1e-12);
  }
}

TEST(SoftmaxCrossEntropy, LargeLogitsDoNotOverflow) {
  const std::vector<double> z{1000, 0};
  const auto r = softmax_cross_entropy(std::span<const double>(z), 0);
  EXPECT_TRUE(std::isfinite(r.loss));
  EXPECT_NEAR(r.loss, 0.0, 1e-12);
  const auto wrong = softmax_cross_entropy(std::span<const double>(z), 1);
  EXPECT_NEAR(wrong.loss, 1000.0, 1e-9);

  const std::vector<float> zf{1000.f, 0.f};
  EXPECT_TRUE(std::isfinite(softmax_cross_entropy(std::span<const float>(zf), 1).loss));
}

TEST(SoftmaxCrossEntropy, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    auto z = oracle::random_vector(6, rng, 4.0);
    const std::size_t label = static_cast<std::size_t>(trial % 6);
    const auto r = softmax_cross_entropy(std::span<const double>(z), label);
    for (std::size_t i = 0; i < z.size(); ++i) {
      const auto num = oracle::central_difference(
          z[i], 1e-5, [&] { return softmax_cross_entropy(std::span<const double>(z), label).loss; },
          [] { return 0; });
      EXPECT_NEAR(r.grad_logits[i], *num, 1e-6);
    }
  }
}

TEST(SoftmaxCrossEntropy, RejectsOutOfRangeLabel) {
  const std::vector<double> z{1, 2};
  EXPECT_THROW(softmax_cross_entropy(std::span<const double>(z), 2), InvalidInput);
}

TEST(Softmax, IsAProbabilityVector) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 500; ++trial) {
    const auto z = oracle::random_vector(1 + trial % 20, rng, 50.0);
    const auto p = softmax(std::span<const double>(z));
    double sum = 0;
    for (double v : p) {
      EXPECT_GE(v, 0.0);
      sum += v;
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);
  }
}

std::vector<std::span<double>> as_spans(std::vector<std::vector<double>>& v) {
  return {v.begin(), v.end()};
}

TEST(Sgd, ZeroLearningRateLeavesParameters) {
  std::vector<std::vector<double>> p{{1, 2, 3}};
  const auto before = p;
  const std::vector<double> g{5, -5, 1};
  Sgd<double> opt({0.0, 0.9});
  auto params = as_spans(p);
  const std::vector<std::span<const double>> grads{g};
  opt.step(params, grads);
  opt.step(params, grads);
  EXPECT_EQ(p, before);
}

TEST(Sgd, UnitStepSubtractsGradient) {
  std::vector<std::vector<double>> p{{1, 2, 3}};
  const std::vector<double> g{0.5, -0.25, 3};
  Sgd<double> opt({1.0, 0.0});
  auto params = as_spans(p);
  const std::vector<std::span<const double>> grads{g};
  opt.step(params, grads);
  EXPECT_EQ(p[0], (std::vector<double>{0.5, 2.25, 0}));
}

TEST(Sgd, MomentumMatchesHandUnrolledRecurrence) {
  // v1 = g, p1 = p0 - lr g; v2 = mu g + g, p2 = p1 - lr (1 + mu) g
  std::vector<std::vector<double>> p{{1.0}};
  const std::vector<double> g{0.5};
  Sgd<double> opt({0.1, 0.9});
  auto params = as_spans(p);
  const std::vector<std::span<const double>> grads{g};
  opt.step(params, grads);
  EXPECT_NEAR(p[0][0], 0.95, 1e-15);
  opt.step(params, grads);
  EXPECT_NEAR(p[0][0], 0.855, 1e-15);
}

TEST(Sgd, NonFiniteGradientIsDivergence) {
  std::vector<std::vector<double>> p{{1, 2}};
  const std::vector<double> g{0.5, std::numeric_limits<double>::quiet_NaN()};
  Sgd<double> opt({0.1, 0.0});
  auto params = as_spans(p);
  const std::vector<std::span<const double>> grads{g};
  EXPECT_THROW(opt.step(params, grads), DivergenceError);
  EXPECT_EQ(p[0], (std::vector<double>{1, 2}));
}

TEST(GlorotInit, StaysWithinFanBound) {
  std::mt19937_64 rng(1);
  auto m = Mlp<double>::stack({48, 64, 64}, Activation::relu, Activation::relu);
  glorot_uniform_init(m, rng);
  for (const auto& l : m.layers()) {
    const double a = std::sqrt(6.0 / static_cast<double>(l.in_dim() + l.out_dim()));
    for (double w : l.weights()) EXPECT_LE(std::abs(w), a);
    for (double b : l.bias()) EXPECT_EQ(b, 0.0);
  }
}

TEST(MlpCheckpoint, RoundTripsFloatParametersExactly) {
  std::mt19937_64 rng(4);
  auto m = Mlp<float>::stack({5, 7, 3}, Activation::relu, Activation::none);
  glorot_uniform_init(m, rng);
  EXPECT_EQ(decode_mlp<float>(encode_mlp(m)), m);
}

TEST(MlpCheckpoint, BadMagicReportsOffsetZero) {
  auto bytes = encode_mlp(Mlp<float>::stack({2, 2}, Activation::none, Activation::none));
  bytes[0] = 'X';
  try {
    decode_mlp<float>(bytes);
    FAIL() << "expected a format error";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
}

TEST(MlpCheckpoint, TruncationIsAFormatError) {
  auto bytes = encode_mlp(Mlp<float>::stack({2, 2}, Activation::none, Activation::none));
  bytes.resize(bytes.size() - 3);
  EXPECT_THROW(decode_mlp<float>(bytes), FormatError);
}

}  // namespace
}  // namespace trn
