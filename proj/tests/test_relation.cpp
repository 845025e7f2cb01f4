#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "oracles.hpp"
#include "trn/relation.hpp"

namespace trn {
namespace {

std::vector<Tuple> tuples_of(std::initializer_list<Tuple> t) { return t; }

TEST(RelationTerm, ZeroGGivesHBias) {
  std::mt19937_64 rng(1);
  RelationModule<double> rm(2, 3, 4, 5);
  oracle::randomize(rm.h(), rng);
  const auto frames = oracle::random_frames(4, 3, rng);
  const auto t = tuples_of({{0, 1}, {1, 3}});
  const auto logits = relation_term_forward(rm, frames, std::span<const Tuple>(t));
  const auto bias = rm.h().layer(0).bias();
  ASSERT_EQ(logits.size(), 5u);
  for (std::size_t c = 0; c < 5; ++c) EXPECT_EQ(logits[c], bias[c]);
}

TEST(RelationTerm, SingleTupleWithLinearHead) {
  std::mt19937_64 rng(2);
  RelationModule<double> rm(3, 2, 4, 4);
  oracle::randomize(rm.g(), rng);
  oracle::randomize(rm.h(), rng);
  for (auto& b : rm.h().layer(0).bias()) b = 0;
  const auto frames = oracle::random_frames(5, 2, rng);
  const auto t = tuples_of({{0, 2, 4}});
  std::vector<double> x;
  for (std::size_t p : t[0]) x.insert(x.end(), frames.row(p).begin(), frames.row(p).end());
  const auto g = oracle::straight_line_mlp(rm.g(), x);
  const auto logits = relation_term_forward(rm, frames, std::span<const Tuple>(t));
  for (std::size_t c = 0; c < 4; ++c) {
    double want = 0;
    for (std::size_t i = 0; i < 4; ++i) want += rm.h().layer(0).weight(c, i) * g[i];
    EXPECT_NEAR(logits[c], want, 1e-12);
  }
}

TEST(RelationTerm, MatchesStraightLineOracleOnThreeTuples) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    RelationModule<double> rm(3, 4, 6, 5);
    oracle::randomize(rm.g(), rng);
    oracle::randomize(rm.h(), rng);
    const auto frames = oracle::random_frames(8, 4, rng);
    const auto t = subsample_tuples(8, 3, 3, rng);
    const auto got = relation_term_forward(rm, frames, std::span<const Tuple>(t));
    const auto want = oracle::straight_line_relation(rm, frames, t);
    for (std::size_t c = 0; c < 5; ++c) EXPECT_NEAR(got[c], want[c], 1e-10);
  }
}

TEST(RelationTerm, RejectsMalformedTuples) {
  RelationModule<double> rm(2, 3, 4, 2);
  const FrameMatrix<double> frames(4, 3);
  const auto wrong_arity = tuples_of({{0, 1, 2}});
  EXPECT_THROW(relation_term_forward(rm, frames, std::span<const Tuple>(wrong_arity)), InvalidInput);
  const std::vector<Tuple> none;
  EXPECT_THROW(relation_term_forward(rm, frames, std::span<const Tuple>(none)), InvalidInput);
  const auto unsorted = tuples_of({{2, 1}});
  EXPECT_THROW(relation_term_forward(rm, frames, std::span<const Tuple>(unsorted)), InvalidInput);
  const auto repeated = tuples_of({{1, 1}});
  EXPECT_THROW(relation_term_forward(rm, frames, std::span<const Tuple>(repeated)), InvalidInput);
  const auto out_of_range = tuples_of({{1, 4}});
  EXPECT_THROW(relation_term_forward(rm, frames, std::span<const Tuple>(out_of_range)), InvalidInput);
  const FrameMatrix<double> wrong_dim(4, 2);
  const auto ok = tuples_of({{0, 1}});
  EXPECT_THROW(relation_term_forward(rm, wrong_dim, std::span<const Tuple>(ok)), InvalidInput);
}

TEST(RelationModule, HasExpectedShapes) {
  RelationModule<float> rm(4, 16, 64, 8);
  EXPECT_EQ(rm.g().in_dim(), 64u);
  EXPECT_EQ(rm.g().out_dim(), 64u);
  EXPECT_EQ(rm.g().depth(), 2u);
  EXPECT_EQ(rm.g().layer(1).activation(), Activation::relu);
  EXPECT_EQ(rm.h().depth(), 1u);
  EXPECT_EQ(rm.h().layer(0).activation(), Activation::none);
  EXPECT_EQ(rm.h().out_dim(), 8u);
  EXPECT_THROW(RelationModule<float>(1, 16, 64, 8), InvalidInput);
}

TEST(MultiScale, HasOneModulePerScale) {
  const MultiScaleTrn<float> trn(16, 64, 8, 8);
  ASSERT_EQ(trn.modules().size(), 7u);
  for (std::size_t d = 2; d <= 8; ++d) EXPECT_EQ(trn.module(d).scale(), d);
  EXPECT_THROW(trn.module(9), InvalidInput);
  EXPECT_THROW(trn.module(1), InvalidInput);
}

TEST(MultiScale, TwoFramesEqualsLoneModule) {
  std::mt19937_64 rng(4);
  const auto trn = oracle::random_trn(3, 5, 4, 2, rng);
  const auto frames = oracle::random_frames(2, 3, rng);
  const auto sets = inference_tuples(2, 3);
  const auto got = multiscale_forward(trn, frames, sets).logits;
  const auto want = relation_term_forward(trn.module(2), frames, std::span<const Tuple>(sets.at(2).tuples));
  EXPECT_EQ(got, want);
}

TEST(MultiScale, ZeroHWeightsSumBiases) {
  std::mt19937_64 rng(5);
  auto trn = oracle::random_trn(3, 4, 3, 5, rng);
  std::vector<double> want(3, 0.0);
  for (auto& rm : trn.modules()) {
    for (auto& w : rm.h().layer(0).weights()) w = 0;
    for (std::size_t c = 0; c < 3; ++c) want[c] += rm.h().layer(0).bias()[c];
  }
  const auto frames = oracle::random_frames(5, 3, rng);
  const auto logits = multiscale_forward(trn, frames, training_tuples(5, 3, rng)).logits;
  for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(logits[c], want[c], 1e-12);
}

TEST(MultiScale, FourFramesEqualsSumOfIndependentTerms) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const auto trn = oracle::random_trn(3, 5, 4, 4, rng);
    const auto frames = oracle::random_frames(4, 3, rng);
    const auto sets = training_tuples(4, 3, rng);
    const auto got = multiscale_forward(trn, frames, sets).logits;
    std::vector<double> want(4, 0.0);
    for (std::size_t d = 2; d <= 4; ++d) {
      const auto t = oracle::straight_line_relation(trn.module(d), frames, sets.at(d).tuples);
      for (std::size_t c = 0; c < 4; ++c) want[c] += t[c];
    }
    for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(got[c], want[c], 1e-10);
  }
}

TEST(MultiScale, MissingScaleIsRejected) {
  const MultiScaleTrn<double> trn(3, 4, 2, 4);
  const FrameMatrix<double> frames(4, 3);
  auto sets = inference_tuples(4, 3);
  sets.erase(3);
  EXPECT_THROW(multiscale_forward(trn, frames, sets), InvalidInput);
  sets = inference_tuples(4, 3);
  sets[3].tuples.clear();
  EXPECT_THROW(multiscale_forward(trn, frames, sets), InvalidInput);
}

TEST(MultiScale, LogitsAreBitExactSumOfScaleLogits) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const auto trn = oracle::random_trn(4, 6, 5, 6, rng);
    const auto frames = oracle::random_frames(6, 4, rng);
    const auto out = multiscale_forward(trn, frames, training_tuples(6, 3, rng));
    std::vector<double> sum(5, 0.0);
    for (const auto& s : out.scales)
      for (std::size_t c = 0; c < 5; ++c) sum[c] += s.logits[c];
    EXPECT_EQ(out.logits, sum);
  }
}

TEST(MultiScale, PerturbingOneModuleChangesOnlyItsTerm) {
  std::mt19937_64 rng(8);
  auto trn = oracle::random_trn(3, 5, 4, 5, rng);
  const auto frames = oracle::random_frames(5, 3, rng);
  const auto sets = training_tuples(5, 3, rng);
  const auto before = multiscale_forward(trn, frames, sets);
  for (auto& w : trn.module(3).g().layer(0).weights()) w += 0.3;
  const auto after = multiscale_forward(trn, frames, sets);
  for (std::size_t d = 2; d <= 5; ++d) {
    if (d == 3) {
      EXPECT_NE(before.at_scale(d).logits, after.at_scale(d).logits);
    } else {
      EXPECT_EQ(before.at_scale(d).logits, after.at_scale(d).logits);
    }
  }
  for (std::size_t c = 0; c < 4; ++c) {
    const double delta = after.at_scale(3).logits[c] - before.at_scale(3).logits[c];
    EXPECT_NEAR(after.logits[c] - before.logits[c], delta, 1e-12);
  }
}

TEST(RelationTerm, SwappingFramesInsideATupleChangesOutput) {
  std::mt19937_64 rng(9);
  int changed = 0;
  for (int trial = 0; trial < 100; ++trial) {
    RelationModule<double> rm(3, 4, 8, 3);
    glorot_uniform_init(rm.g(), rng);
    glorot_uniform_init(rm.h(), rng);
    auto frames = oracle::random_frames(3, 4, rng);
    const auto t = tuples_of({{0, 1, 2}});
    const auto a = relation_term_forward(rm, frames, std::span<const Tuple>(t));
    std::uniform_int_distribution<std::size_t> pick(0, 2);
    const std::size_t i = pick(rng);
    const std::size_t j = (i + 1 + pick(rng) % 2) % 3;
    std::vector<double> tmp(frames.row(i).begin(), frames.row(i).end());
    std::copy(frames.row(j).begin(), frames.row(j).end(), frames.row(i).begin());
    std::copy(tmp.begin(), tmp.end(), frames.row(j).begin());
    if (relation_term_forward(rm, frames, std::span<const Tuple>(t)) != a) ++changed;
  }
  EXPECT_GE(changed, 99);
}

TEST(RelationTerm, HiddenSumIsAdditiveOverDisjointTupleSets) {
  std::mt19937_64 rng(10);
  RelationModule<double> rm(2, 3, 6, 2);
  oracle::randomize(rm.g(), rng);
  const auto frames = oracle::random_frames(6, 3, rng);
  const auto all = enumerate_tuples(6, 2);
  const std::vector<Tuple> first(all.begin(), all.begin() + 7);
  const std::vector<Tuple> second(all.begin() + 7, all.end());
  const auto whole = relation_term_evaluate(rm, frames, std::span<const Tuple>(all)).hidden;
  const auto a = relation_term_evaluate(rm, frames, std::span<const Tuple>(first)).hidden;
  const auto b = relation_term_evaluate(rm, frames, std::span<const Tuple>(second)).hidden;
  for (std::size_t i = 0; i < whole.size(); ++i) EXPECT_NEAR(whole[i], a[i] + b[i], 1e-12);
}

TEST(RelationTerm, WeightScalesTheHiddenSum) {
  std::mt19937_64 rng(11);
  RelationModule<double> rm(2, 3, 5, 2);
  oracle::randomize(rm.g(), rng);
  oracle::randomize(rm.h(), rng);
  const auto frames = oracle::random_frames(4, 3, rng);
  const auto all = enumerate_tuples(4, 2);
  const auto got = relation_term_forward(rm, frames, std::span<const Tuple>(all), 0.5);
  const auto want = oracle::straight_line_relation(rm, frames, all, 0.5);
  for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(got[c], want[c], 1e-12);
}

TEST(MultiScaleBackward, ZeroUpstreamGivesZeroGradients) {
  std::mt19937_64 rng(12);
  const auto trn = oracle::random_trn(3, 4, 2, 3, rng);
  const auto frames = oracle::random_frames(3, 3, rng);
  const auto sets = inference_tuples(3, 3);
  const std::vector<double> up(2, 0.0);
  const auto g = multiscale_backward(trn, frames, sets, std::span<const double>(up));
  const auto zero = MultiScaleGradient<double>::zeros_like(trn, 3);
  for (std::size_t i = 0; i < g.modules.size(); ++i) {
    EXPECT_EQ(g.modules[i].g, zero.modules[i].g);
    EXPECT_EQ(g.modules[i].h, zero.modules[i].h);
  }
  EXPECT_EQ(g.frames, zero.frames);
}

TEST(MultiScaleBackward, SharedFrameGradientIsSumOfTupleContributions) {
  std::mt19937_64 rng(13);
  const auto trn = oracle::random_trn(3, 5, 3, 4, rng);
  const auto frames = oracle::random_frames(4, 3, rng);
  const auto up = oracle::random_vector(3, rng);
  // Frame 0 is shared by every scale-2 tuple.
  TupleSets sets = inference_tuples(4, 3);
  sets[2] = ScaleTuples{tuples_of({{0, 1}, {0, 2}, {0, 3}}), 1.0};
  const auto full = multiscale_backward(trn, frames, sets, std::span<const double>(up));

  // Scales 3 and 4 contribute identically to every run below; a copy with
  // scale 2 silenced isolates that share.
  auto silenced = trn;
  for (auto& w : silenced.module(2).h().layer(0).weights()) w = 0;
  const auto rest = multiscale_backward(silenced, frames, sets, std::span<const double>(up));
  std::vector<double> summed(3, 0.0);
  for (const Tuple& t : sets[2].tuples) {
    auto single = sets;
    single[2] = ScaleTuples{{t}, 1.0};
    const auto g = multiscale_backward(trn, frames, single, std::span<const double>(up));
    for (std::size_t c = 0; c < 3; ++c) summed[c] += g.frames.row(0)[c] - rest.frames.row(0)[c];
  }
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_NEAR(full.frames.row(0)[c] - rest.frames.row(0)[c], summed[c], 1e-12);
  }
}

struct GradCheckStats {
  std::size_t checked = 0;
  std::size_t skipped = 0;
  double max_error = 0;
};

GradCheckStats grad_check_tiny(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto trn = oracle::random_trn(3, 4, 2, 3, rng);
  auto frames = oracle::random_frames(3, 3, rng);
  const auto sets = training_tuples(3, 3, rng);
  const auto up = oracle::random_vector(2, rng);
  const auto grads = multiscale_backward(trn, frames, sets, std::span<const double>(up));

  auto objective = [&] {
    const auto y = multiscale_forward(trn, frames, sets).logits;
    return std::inner_product(y.begin(), y.end(), up.begin(), 0.0);
  };
  auto pattern = [&] { return oracle::relu_pattern(trn, frames, sets); };
  GradCheckStats s;
  auto check = [&](double& value, double analytic) {
    const auto num = oracle::central_difference(value, 1e-5, objective, pattern);
    if (!num) {
      ++s.skipped;
      return;
    }
    ++s.checked;
    s.max_error = std::max(s.max_error, oracle::relative_error(analytic, *num));
  };
  for (std::size_t slot = 0; slot < trn.modules().size(); ++slot) {
    auto& rm = trn.modules()[slot];
    const auto& mg = grads.modules[slot];
    for (auto [net, gs] : {std::pair{&rm.g(), &mg.g}, std::pair{&rm.h(), &mg.h}}) {
      for (std::size_t li = 0; li < net->depth(); ++li) {
        auto w = net->layer(li).weights();
        for (std::size_t i = 0; i < w.size(); ++i) check(w[i], gs->layers[li].weights[i]);
        auto b = net->layer(li).bias();
        for (std::size_t i = 0; i < b.size(); ++i) check(b[i], gs->layers[li].bias[i]);
      }
    }
  }
  auto fv = frames.values();
  const auto gv = grads.frames.values();
  for (std::size_t i = 0; i < fv.size(); ++i) check(fv[i], gv[i]);
  return s;
}

TEST(MultiScaleBackward, TinyModelMatchesFiniteDifferences) {
  std::size_t checked = 0, skipped = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const auto s = grad_check_tiny(seed);
    EXPECT_LT(s.max_error, 1e-4) << "seed " << seed;
    checked += s.checked;
    skipped += s.skipped;
  }
  EXPECT_GT(checked, 5000u);
  EXPECT_LT(static_cast<double>(skipped), 0.01 * static_cast<double>(checked));
}

TEST(Predict, ArgmaxAndTieRule) {
  const std::vector<double> z{0, 5, 1};
  EXPECT_EQ(predict(std::span<const double>(z)).label, 1u);
  const std::vector<double> flat(4, 2.5);
  const auto p = predict(std::span<const double>(flat));
  EXPECT_EQ(p.label, 0u);
  for (double v : p.probabilities) EXPECT_DOUBLE_EQ(v, 0.25);
  const std::vector<double> none;
  EXPECT_THROW(predict(std::span<const double>(none)), InvalidInput);
}

TEST(Predict, ProbabilitiesSumToOne) {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 200; ++trial) {
    const auto z = oracle::random_vector(10, rng, 30.0);
    const auto p = predict(std::span<const double>(z));
    EXPECT_NEAR(std::accumulate(p.probabilities.begin(), p.probabilities.end(), 0.0), 1.0, 1e-9);
    EXPECT_EQ(p.label, static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin()));
  }
}

}  // namespace
}  // namespace trn
