// tests/test-nn.cc

// Copyright 2026  The cvdetect Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "cvdetect/error.h"
#include "cvdetect/nn.h"
#include "test-util.h"

namespace cvdetect {
namespace {

using testing::RandomMatrix;
using testing::ScalarGru;

void Randomize(GruLayer &layer, std::mt19937_64 &gen, double scale = 0.5) {
  for (Param *p : layer.Params())
    p->value = RandomMatrix(gen, p->value.rows(), p->value.cols(), scale);
}

std::vector<std::vector<double>> Rows(const Matrix &m) {
  std::vector<std::vector<double>> out;
  for (int r = 0; r < m.rows(); ++r) out.emplace_back(m.Row(r).begin(), m.Row(r).end());
  return out;
}

TEST(Gru, ZeroParametersGiveZeroStates) {
  std::mt19937_64 gen(1);
  GruLayer g(5, 4);
  Matrix out = GruForward(g, RandomMatrix(gen, 7, 5, 3.0), Direction::kForward);
  for (double v : out.values()) EXPECT_EQ(v, 0.0);
  out = GruForward(g, RandomMatrix(gen, 7, 5, 3.0), Direction::kBackward);
  for (double v : out.values()) EXPECT_EQ(v, 0.0);
}

TEST(Gru, MatchesScalarLoopOracle) {
  std::mt19937_64 gen(2);
  GruLayer g(3, 4);
  Randomize(g, gen);
  Matrix seq = RandomMatrix(gen, 3, 3);
  auto expect = ScalarGru(g, Rows(seq));
  Matrix out = GruForward(g, seq, Direction::kForward);
  for (int t = 0; t < 3; ++t)
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(out(t, i), expect[t][i], 1e-12);

  // Backward direction: oracle on the reversed sequence, re-reversed.
  auto rev = Rows(seq);
  std::reverse(rev.begin(), rev.end());
  auto expect_b = ScalarGru(g, rev);
  std::reverse(expect_b.begin(), expect_b.end());
  Matrix out_b = GruForward(g, seq, Direction::kBackward);
  for (int t = 0; t < 3; ++t)
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(out_b(t, i), expect_b[t][i], 1e-12);
}

TEST(Gru, LengthOneBackwardEqualsForward) {
  std::mt19937_64 gen(3);
  GruLayer g(4, 3);
  Randomize(g, gen);
  Matrix seq = RandomMatrix(gen, 1, 4);
  EXPECT_EQ(GruForward(g, seq, Direction::kForward), GruForward(g, seq, Direction::kBackward));
}

TEST(Gru, ForwardIsDeterministic) {
  std::mt19937_64 gen(4);
  GruLayer g(4, 3);
  Randomize(g, gen);
  Matrix seq = RandomMatrix(gen, 9, 4);
  EXPECT_EQ(GruForward(g, seq, Direction::kForward), GruForward(g, seq, Direction::kForward));
}

TEST(Gru, ZeroUpstreamGivesZeroGradients) {
  std::mt19937_64 gen(5);
  GruLayer g(4, 3);
  Randomize(g, gen);
  GruCache cache;
  GruForward(g, RandomMatrix(gen, 6, 4), Direction::kForward, &cache);
  Matrix dx = GruBackward(g, cache, Matrix(6, 3));
  for (double v : dx.values()) EXPECT_EQ(v, 0.0);
  for (Param *p : g.Params())
    for (double v : p->grad.values()) EXPECT_EQ(v, 0.0);
}

TEST(Gru, GradientsAccumulate) {
  std::mt19937_64 gen(6);
  GruLayer g(4, 3);
  Randomize(g, gen);
  GruCache cache;
  GruForward(g, RandomMatrix(gen, 5, 4), Direction::kBackward, &cache);
  Matrix dy = RandomMatrix(gen, 5, 3);
  GruBackward(g, cache, dy);
  std::vector<Matrix> once;
  for (Param *p : g.Params()) once.push_back(p->grad);
  GruBackward(g, cache, dy);
  auto params = g.Params();
  for (size_t k = 0; k < params.size(); ++k)
    for (size_t i = 0; i < once[k].size(); ++i)
      EXPECT_NEAR(params[k]->grad.values()[i], 2.0 * once[k].values()[i], 1e-15);
}

TEST(GradCheckTest, DenseSquaredLoss) {
  std::mt19937_64 gen(7);
  Dense d(5, 3);
  d.w.value = RandomMatrix(gen, 3, 5);
  d.b.value = RandomMatrix(gen, 3, 1);
  std::vector<double> x(5), y{0.3, -0.2, 1.0};
  for (double &v : x) v = std::uniform_real_distribution<double>(-1, 1)(gen);
  auto loss = [&] {
    auto o = d.Forward(x);
    double s = 0.0;
    for (int i = 0; i < 3; ++i) s += 0.5 * (o[i] - y[i]) * (o[i] - y[i]);
    return s;
  };
  auto backprop = [&] {
    auto o = d.Forward(x);
    for (int i = 0; i < 3; ++i) o[i] -= y[i];
    d.Backward(x, o);
  };
  auto params = d.Params();
  GradCheckResult r = GradCheck(params, loss, backprop);
  EXPECT_EQ(r.entries_checked, 18u);
  EXPECT_LT(r.max_relative_error, 1e-7);
}

struct GruCeNet {
  GruLayer gru{4, 3};
  Dense head{3, 3};
  Matrix seq;
  int target = 1;
  std::vector<double> mask;  // optional frozen dropout mask on pooled state

  std::vector<Param *> Params() {
    auto p = gru.Params();
    for (Param *q : head.Params()) p.push_back(q);
    return p;
  }
  std::vector<double> Pooled(const Matrix &h) const {
    std::vector<double> v(h.Row(h.rows() - 1).begin(), h.Row(h.rows() - 1).end());
    if (!mask.empty())
      for (size_t i = 0; i < v.size(); ++i) v[i] *= mask[i];
    return v;
  }
  double Loss() {
    Matrix h = GruForward(gru, seq, Direction::kForward);
    return SoftmaxCrossEntropy(head.Forward(Pooled(h)), target).loss;
  }
  void Backprop() {
    GruCache cache;
    Matrix h = GruForward(gru, seq, Direction::kForward, &cache);
    auto pooled = Pooled(h);
    auto ce = SoftmaxCrossEntropy(head.Forward(pooled), target);
    auto dp = head.Backward(pooled, ce.grad);
    Matrix dh(h.rows(), h.cols());
    for (int i = 0; i < h.cols(); ++i)
      dh(h.rows() - 1, i) = dp[i] * (mask.empty() ? 1.0 : mask[i]);
    GruBackward(gru, cache, dh);
  }
};

TEST(GradCheckTest, GruSoftmaxCrossEntropy) {
  std::mt19937_64 gen(8);
  GruCeNet net;
  Randomize(net.gru, gen);
  net.head.w.value = RandomMatrix(gen, 3, 3);
  net.seq = RandomMatrix(gen, 6, 4);
  auto params = net.Params();
  GradCheckResult r =
      GradCheck(params, [&] { return net.Loss(); }, [&] { net.Backprop(); });
  EXPECT_GT(r.entries_checked, 0u);
  EXPECT_LT(r.max_relative_error, 1e-4);
}

TEST(GradCheckTest, FrozenDropoutMask) {
  std::mt19937_64 gen(9);
  GruCeNet net;
  Randomize(net.gru, gen);
  net.head.w.value = RandomMatrix(gen, 3, 3);
  net.seq = RandomMatrix(gen, 5, 4);
  Rng rng(3);
  net.mask = DropoutMask(3, 0.5, rng, true);
  net.mask[0] = 2.0;  // keep at least one unit alive
  auto params = net.Params();
  GradCheckResult r =
      GradCheck(params, [&] { return net.Loss(); }, [&] { net.Backprop(); });
  EXPECT_LT(r.max_relative_error, 1e-4);
}

TEST(GradCheckTest, SamplesEntriesAndRejectsNonFiniteLoss) {
  std::mt19937_64 gen(10);
  GruCeNet net;
  Randomize(net.gru, gen);
  net.seq = RandomMatrix(gen, 3, 4);
  auto params = net.Params();
  GradCheckOptions opt;
  opt.max_entries = 20;
  EXPECT_EQ(GradCheck(params, [&] { return net.Loss(); }, [&] { net.Backprop(); }, opt)
                .entries_checked,
            20u);
  EXPECT_THROW(GradCheck(params, [] { return std::nan(""); }, [] {}), RuntimeError);
}

TEST(Losses, ClosedForms) {
  for (int k : {2, 5, 17}) {
    std::vector<double> logits(k, 0.3);
    EXPECT_NEAR(SoftmaxCrossEntropy(logits, k - 1).loss, std::log(k), 1e-14);
  }
  EXPECT_NEAR(BinaryCrossEntropy(0.5, 0).loss, std::log(2.0), 1e-15);
  EXPECT_NEAR(BinaryCrossEntropy(0.5, 1).loss, std::log(2.0), 1e-15);
  std::vector<double> logits{10.0, 0.0, 0.0};
  const double expect = std::log1p(2.0 * std::exp(-10.0));
  EXPECT_NEAR(SoftmaxCrossEntropy(logits, 0).loss, expect, 1e-15);
  EXPECT_NEAR(expect, 9.08e-5, 1e-7);
  EXPECT_THROW(SoftmaxCrossEntropy(logits, 3), ValidationError);
}

TEST(Losses, SoftmaxSumsToOneAndIsShiftInvariant) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(-30.0, 30.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> logits(7);
    for (double &v : logits) v = u(gen);
    auto p = Softmax(logits);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
    for (double &v : logits) v += 123.25;
    auto q = Softmax(logits);
    for (size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p[i], q[i], 1e-12);
  }
}

TEST(Losses, BinaryCrossEntropyFiniteEverywhere) {
  for (int i = 0; i <= 1000; ++i) {
    const double p = i / 1000.0;
    for (int label : {0, 1}) {
      BinaryLoss b = BinaryCrossEntropy(p, label);
      ASSERT_TRUE(std::isfinite(b.loss)) << p;
      ASSERT_TRUE(std::isfinite(b.d_prob)) << p;
    }
  }
  EXPECT_NEAR(BinaryCrossEntropy(0.0, 1).loss, -std::log(1e-7), 1e-9);
}

TEST(DropoutTest, IdentityCases) {
  std::vector<double> x{1.0, -2.0, 3.5};
  Rng rng(0);
  EXPECT_EQ(Dropout(x, 0.0, rng, true), x);
  EXPECT_EQ(Dropout(x, 0.9, rng, false), x);
  EXPECT_THROW(Dropout(x, 1.0, rng, true), ValidationError);
  EXPECT_THROW(Dropout(x, -0.1, rng, true), ValidationError);
}

TEST(DropoutTest, InvertedScalingPreservesMean) {
  std::vector<double> ones(100000, 1.0);
  Rng rng(42);
  auto y = Dropout(ones, 0.5, rng, true);
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / y.size();
  EXPECT_NEAR(mean, 1.0, 0.01);
  for (double v : y) EXPECT_TRUE(v == 0.0 || v == 2.0);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  std::mt19937_64 gen(12);
  Param p(3, 2);
  p.value = RandomMatrix(gen, 3, 2);
  const Matrix before = p.value;
  std::vector<Param *> params{&p};
  AdamState st;
  AdamStep(params, st);
  EXPECT_EQ(p.value, before);
  EXPECT_EQ(st.step, 1);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Param p(1, 3);
  p.grad.values() = {0.5, -2.0, 1e-3};
  std::vector<Param *> params{&p};
  AdamState st;
  AdamStep(params, st);
  // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
  for (int i = 0; i < 3; ++i) {
    const double g = std::vector<double>{0.5, -2.0, 1e-3}[i];
    EXPECT_NEAR(p.value(0, i), -1e-3 * g / (std::abs(g) + 1e-8), 1e-15);
    EXPECT_NEAR(std::abs(p.value(0, i)), 1e-3, 1e-7);
    EXPECT_EQ(p.grad(0, i), 0.0);
  }
}

TEST(Adam, DecoupledWeightDecayOnly) {
  Param p(2, 2);
  p.value.values() = {1.0, -3.0, 0.25, 8.0};
  const Matrix before = p.value;
  std::vector<Param *> params{&p};
  AdamState st;
  st.options.learning_rate = 0.001;
  st.options.weight_decay = 0.0005;
  AdamStep(params, st);
  for (size_t i = 0; i < 4; ++i)
    EXPECT_NEAR(p.value.values()[i], before.values()[i] * (1.0 - 5e-7), 1e-15);
}

TEST(Adam, NonFiniteGradientAborts) {
  Param p(1, 2);
  p.grad(0, 1) = std::numeric_limits<double>::infinity();
  std::vector<Param *> params{&p};
  AdamState st;
  EXPECT_THROW(AdamStep(params, st), RuntimeError);
}

TEST(Init, GlorotBoundsAndZeroBiases) {
  Rng rng(1);
  GruLayer g(10, 6);
  g.Init(rng);
  const double bound = std::sqrt(6.0 / 16.0);
  for (double v : g.w_z.value.values()) EXPECT_LE(std::abs(v), bound);
  for (double v : g.b_h.value.values()) EXPECT_EQ(v, 0.0);
  Rng rng2(1);
  GruLayer g2(10, 6);
  g2.Init(rng2);
  EXPECT_EQ(g.u_h.value, g2.u_h.value);
}

}  // namespace
}  // namespace cvdetect
