// Copyright (C) 2026 The stu Authors
// SPDX-License-Identifier: Apache-2.0
//

#include <gtest/gtest.h>

#include <cmath>

#include "oracles/finite_difference.hpp"
#include "oracles/naive_model.hpp"
#include "stu/model.hpp"
#include "stu/rng.hpp"

namespace {

using stu::Architecture;
using stu::Matrix;
using stu::ParamVector;

Matrix random_frames(stu::Rng& rng, std::size_t t, std::size_t f) {
  Matrix m(t, f);
  for (double& v : m.data()) v = rng.gaussian();
  return m;
}

Architecture small_arch(stu::Rng& rng) {
  Architecture a;
  a.feature_dim = static_cast<int>(rng.uniform_int(1, 4));
  a.context = static_cast<int>(rng.uniform_int(0, 2));
  a.hidden_sizes.clear();
  const auto layers = rng.uniform_int(0, 2);
  for (std::int64_t i = 0; i < layers; ++i) a.hidden_sizes.push_back(static_cast<int>(rng.uniform_int(1, 8)));
  a.vocab_size = static_cast<int>(rng.uniform_int(1, 4));
  return a;
}

}  // namespace

TEST(Architecture, ParamCountFormula) {
  Architecture a;  // 16 features, context 2, hidden {64, 64}, 8 tokens
  EXPECT_EQ(a.input_dim(), 80);
  EXPECT_EQ(a.output_dim(), 9);
  EXPECT_EQ(a.param_count(), static_cast<std::size_t>(80 * 64 + 64 + 64 * 64 + 64 + 64 * 9 + 9));
  EXPECT_EQ(stu::init_params(a, 1).size(), a.param_count());
  Architecture bare;
  bare.hidden_sizes.clear();
  bare.context = 0;
  EXPECT_EQ(bare.param_count(), static_cast<std::size_t>(16 * 9 + 9));
}

TEST(Architecture, InvalidValuesRejected) {
  Architecture a;
  a.context = -1;
  EXPECT_THROW(a.validate(), stu::ConfigError);
  a = Architecture{};
  a.hidden_sizes = {4, 0};
  EXPECT_THROW(stu::init_params(a, 1), stu::ConfigError);
}

TEST(InitParams, BiasesZeroAndSeedDeterministic) {
  Architecture a;
  const auto p = stu::init_params(a, 5);
  EXPECT_EQ(p, stu::init_params(a, 5));
  EXPECT_NE(p, stu::init_params(a, 6));
  const auto w = a.widths();
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    const auto in = static_cast<std::size_t>(w[l]), out = static_cast<std::size_t>(w[l + 1]);
    off += in * out;
    for (std::size_t k = 0; k < out; ++k) EXPECT_EQ(p.values[off + k], 0.0);
    off += out;
  }
}

TEST(InitParams, WeightMomentsMatchUniformBound) {
  Architecture a;
  const auto p = stu::init_params(a, 42);
  const auto w = a.widths();
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    const auto in = static_cast<std::size_t>(w[l]), out = static_cast<std::size_t>(w[l + 1]);
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    const double n = static_cast<double>(in * out);
    double s = 0.0, s2 = 0.0;
    for (std::size_t k = 0; k < in * out; ++k) {
      const double v = p.values[off + k];
      ASSERT_LE(std::abs(v), bound);
      s += v;
      s2 += v * v;
    }
    const double var = bound * bound / 3.0;  // variance of U(-b, b)
    EXPECT_LE(std::abs(s / n), 3.0 * std::sqrt(var / n)) << "layer " << l;
    // E[x^4] = b^4 / 5 for U(-b, b), so Var(x^2) = b^4/5 - b^4/9.
    const double var_sq = std::pow(bound, 4) * (1.0 / 5.0 - 1.0 / 9.0);
    EXPECT_LE(std::abs(s2 / n - var), 3.0 * std::sqrt(var_sq / n)) << "layer " << l;
    off += in * out + out;
  }
}

TEST(Forward, ZeroParametersGiveUniformPosteriors) {
  Architecture a;
  ParamVector p{a, std::vector<double>(a.param_count(), 0.0)};
  stu::Rng rng(1);
  const auto g = stu::forward(p, random_frames(rng, 5, 16));
  for (double v : g.posteriors.data()) EXPECT_DOUBLE_EQ(v, 1.0 / 9.0);
}

TEST(Forward, SingleFrameIsRepeatedAcrossContext) {
  Matrix f = Matrix::from_rows({{1.0, 2.0}});
  const auto x = stu::stack_context(f, 1);
  ASSERT_EQ(x.rows(), 1u);
  ASSERT_EQ(x.cols(), 6u);
  EXPECT_EQ(x.data(), (std::vector<double>{1, 2, 1, 2, 1, 2}));
}

TEST(Forward, EdgeFramesRepeatBoundary) {
  Matrix f = Matrix::from_rows({{1.0}, {2.0}, {3.0}});
  const auto x = stu::stack_context(f, 2);
  EXPECT_EQ(x.data(), (std::vector<double>{1, 1, 1, 2, 3, 1, 1, 2, 3, 3, 1, 2, 3, 3, 3}));
}

TEST(Forward, MatchesNaiveImplementation) {
  stu::Rng rng(77);
  for (int trial = 0; trial < 60; ++trial) {
    const auto a = small_arch(rng);
    const auto p = stu::init_params(a, static_cast<std::uint64_t>(trial));
    const auto frames = random_frames(rng, static_cast<std::size_t>(rng.uniform_int(1, 6)),
                                      static_cast<std::size_t>(a.feature_dim));
    const auto g = stu::forward(p, frames);
    const auto ref = oracle::naive_posteriors(p, frames);
    const auto ref_logits = oracle::naive_logits(p, frames);
    for (std::size_t t = 0; t < frames.rows(); ++t)
      for (std::size_t k = 0; k < g.posteriors.cols(); ++k) {
        ASSERT_NEAR(g.posteriors(t, k), ref[t][k], 1e-12);
        ASSERT_NEAR(g.logits(t, k), ref_logits[t][k], 1e-12);
      }
  }
}

TEST(Forward, PosteriorRowsAreDistributions) {
  stu::Rng rng(5);
  Architecture a;
  const auto p = stu::init_params(a, 3);
  const auto g = stu::forward(p, random_frames(rng, 20, 16));
  for (std::size_t t = 0; t < g.posteriors.rows(); ++t) {
    double s = 0.0;
    for (double v : g.posteriors.row(t)) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(Forward, SoftmaxInvariantToRowShift) {
  stu::Rng rng(8);
  Matrix logits = random_frames(rng, 6, 5);
  Matrix shifted = logits;
  for (std::size_t t = 0; t < 6; ++t) {
    const double c = rng.uniform(-50, 50);
    for (double& v : shifted.row(t)) v += c;
  }
  const auto a = stu::softmax_rows(logits), b = stu::softmax_rows(shifted);
  for (std::size_t i = 0; i < a.data().size(); ++i) EXPECT_NEAR(a.data()[i], b.data()[i], 1e-12);
}

TEST(Forward, IsPure) {
  stu::Rng rng(9);
  Architecture a;
  const auto p = stu::init_params(a, 3);
  const auto f = random_frames(rng, 7, 16);
  const auto g1 = stu::forward(p, f), g2 = stu::forward(p, f);
  EXPECT_EQ(g1.logits, g2.logits);
  EXPECT_EQ(g1.posteriors, g2.posteriors);
}

TEST(Forward, WidthMismatchIsShapeError) {
  Architecture a;
  const auto p = stu::init_params(a, 3);
  EXPECT_THROW(stu::forward(p, Matrix(3, 15)), stu::ShapeError);
  ParamVector broken{a, std::vector<double>(10, 0.0)};
  EXPECT_THROW(stu::forward(broken, Matrix(3, 16)), stu::ShapeError);
}

TEST(Backward, ZeroUpstreamGivesZeroGradient) {
  stu::Rng rng(10);
  Architecture a;
  const auto p = stu::init_params(a, 3);
  const auto g = stu::backward(p, random_frames(rng, 4, 16), Matrix(4, 9, 0.0));
  for (double v : g) EXPECT_EQ(v, 0.0);
}

TEST(Backward, ShapeMismatchIsShapeError) {
  stu::Rng rng(10);
  Architecture a;
  const auto p = stu::init_params(a, 3);
  EXPECT_THROW(stu::backward(p, random_frames(rng, 4, 16), Matrix(3, 9)), stu::ShapeError);
}

// Central differences of sum_t <w_t, logits_t> through the naive network in
// extended precision.
TEST(Backward, MatchesCentralDifferences) {
  stu::Rng rng(2024);
  for (int trial = 0; trial < 50; ++trial) {
    auto a = small_arch(rng);
    auto p = stu::init_params(a, static_cast<std::uint64_t>(trial) + 100);
    for (double& v : p.values) v += 0.1 * rng.gaussian();  // nonzero biases too
    const auto frames = random_frames(rng, static_cast<std::size_t>(rng.uniform_int(1, 5)),
                                      static_cast<std::size_t>(a.feature_dim));
    const auto w = random_frames(rng, frames.rows(), static_cast<std::size_t>(a.output_dim()));
    const auto grad = stu::backward(p, frames, w);
    std::vector<long double> ext(p.values.begin(), p.values.end());
    auto loss = [&] {
      const auto z = oracle::naive_logits<long double>(a, ext, frames);
      long double s = 0;
      for (std::size_t t = 0; t < z.size(); ++t)
        for (std::size_t k = 0; k < z[t].size(); ++k) s += static_cast<long double>(w(t, k)) * z[t][k];
      return s;
    };
    for (std::size_t i = 0; i < p.size(); ++i) {
      const long double x0 = ext[i];
      ext[i] = x0 + 1e-6L;
      const long double up = loss();
      ext[i] = x0 - 1e-6L;
      const long double down = loss();
      ext[i] = x0;
      const double num = static_cast<double>((up - down) / 2e-6L);
      ASSERT_LE(oracle::relative_error(grad[i], num, 1e-12), 1e-6)
          << "trial " << trial << " param " << i << " analytic " << grad[i] << " numeric " << num;
    }
  }
}

TEST(Backward, DuplicatedUtteranceDoublesGradient) {
  stu::Rng rng(11);
  Architecture a;
  a.hidden_sizes = {8};
  const auto p = stu::init_params(a, 3);
  const auto f = random_frames(rng, 5, 16);
  const auto w = random_frames(rng, 5, 9);
  const auto cache = stu::forward_cached(p, f);
  std::vector<double> acc(p.size(), 0.0);
  stu::backward_accumulate(p, cache, w, acc);
  stu::backward_accumulate(p, cache, w, acc);
  const auto single = stu::backward(p, f, w);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(acc[i], 2.0 * single[i], 1e-12 * (1.0 + std::abs(single[i])));
}

TEST(Optimizer, ZeroGradientLeavesParametersAndCountsStep) {
  Architecture a;
  auto p = stu::init_params(a, 1);
  const auto before = p;
  auto st = stu::OptimizerState::for_params(p);
  stu::optimizer_step(p, std::vector<double>(p.size(), 0.0), st);
  EXPECT_EQ(p, before);
  EXPECT_EQ(st.step, 1);
}

TEST(Optimizer, FirstStepClosedForm) {
  Architecture a;
  a.hidden_sizes = {2};
  auto p = stu::init_params(a, 1);
  const auto before = p;
  auto st = stu::OptimizerState::for_params(p, 1e-3);
  stu::optimizer_step(p, std::vector<double>(p.size(), 1.0), st);
  // m_hat = 1, v_hat = 1 at t = 1, so the step is lr / (1 + eps).
  const double expected = 1e-3 / (1.0 + 1e-8);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(before.values[i] - p.values[i], expected, 1e-15);
}

TEST(Optimizer, TwoStepsReplayIdentically) {
  Architecture a;
  a.hidden_sizes = {4};
  stu::Rng rng(3);
  std::vector<double> g1(stu::init_params(a, 1).size()), g2(g1.size());
  for (auto& v : g1) v = rng.gaussian();
  for (auto& v : g2) v = rng.gaussian();
  auto run = [&] {
    auto p = stu::init_params(a, 1);
    auto st = stu::OptimizerState::for_params(p);
    stu::optimizer_step(p, g1, st);
    stu::optimizer_step(p, g2, st);
    return std::make_pair(p, st.m);
  };
  EXPECT_EQ(run(), run());
}

TEST(Optimizer, NonFiniteGradientIsDivergence) {
  Architecture a;
  a.hidden_sizes = {2};
  auto p = stu::init_params(a, 1);
  const auto before = p;
  auto st = stu::OptimizerState::for_params(p);
  std::vector<double> g(p.size(), 0.0);
  g[3] = std::nan("");
  EXPECT_THROW(stu::optimizer_step(p, g, st), stu::DivergenceError);
  EXPECT_EQ(p, before);
  EXPECT_EQ(st.step, 0);
}
