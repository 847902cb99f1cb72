// tests/test-dsp.cc

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
#include <random>

#include "cvdetect/dsp.h"
#include "cvdetect/error.h"
#include "test-util.h"

namespace cvdetect {
namespace {

using testing::Tone;

// Centre frequency of band j, from the HTK mel formula written out here
// rather than taken from the library.
double OracleCenterHz(const FeatureConfig &c, int j) {
  auto mel = [](double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); };
  const double lo = mel(c.low_freq), hi = mel(c.high_freq);
  const double m = lo + (j + 1) * (hi - lo) / (c.num_mels + 1);
  return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0);
}

TEST(LogMel, FrameCountForPointFourSeconds) {
  FeatureConfig cfg;
  FeatureMatrix fm = LogMel(Tone(300.0, 6400), cfg);
  EXPECT_EQ(fm.frames(), 38);
  EXPECT_EQ(fm.dim(), 80);
  EXPECT_FALSE(fm.normalized);
}

TEST(LogMel, FrameCountFormulaOnRandomLengths) {
  std::mt19937_64 gen(3);
  std::uniform_int_distribution<size_t> len(0, 200000);
  for (int i = 0; i < 1000; ++i) {
    const size_t n = len(gen);
    const int expect = n < 400 ? 0 : 1 + static_cast<int>(std::floor((n - 400.0) / 160.0));
    ASSERT_EQ(NumFrames(n, 400, 160), expect) << n;
  }
  // And through LogMel itself on a few lengths.
  for (size_t n : {400u, 401u, 559u, 560u, 12345u}) {
    EXPECT_EQ(LogMel(Tone(300.0, n), FeatureConfig{}).frames(),
              1 + static_cast<int>((n - 400) / 160));
  }
}

TEST(LogMel, ShortWaveformRejected) {
  EXPECT_THROW(LogMel(Tone(300.0, 399), FeatureConfig{}), ValidationError);
  Waveform w = Tone(300.0, 800);
  w.sample_rate = 8000;
  MelFilterbank fb(FeatureConfig{}, 16000);
  EXPECT_THROW(fb.Compute(w), ValidationError);
}

TEST(LogMel, ZeroSignalIsFloorEverywhere) {
  FeatureConfig cfg;
  Waveform w = Tone(300.0, 4000, 16000, 0.0);
  FeatureMatrix fm = LogMel(w, cfg);
  for (double v : fm.data.values()) EXPECT_EQ(v, std::log(cfg.log_floor));
}

TEST(LogMel, PureToneLandsInNearestCenterFilter) {
  FeatureConfig cfg;
  int nearest = 0;
  for (int j = 1; j < cfg.num_mels; ++j)
    if (std::abs(OracleCenterHz(cfg, j) - 1000.0) <
        std::abs(OracleCenterHz(cfg, nearest) - 1000.0))
      nearest = j;
  FeatureMatrix fm = LogMel(Tone(1000.0, 8000), cfg);
  for (int t = 0; t < fm.frames(); ++t) {
    auto row = fm.data.Row(t);
    const int argmax = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    ASSERT_EQ(argmax, nearest) << "frame " << t;
  }
}

TEST(LogMel, FilterCentersMatchOracle) {
  // Each filter peaks at the FFT bin nearest its centre frequency.
  FeatureConfig cfg;
  MelFilterbank fb(cfg, 16000);
  const double bin_hz = 16000.0 / cfg.fft_size;
  for (int j = 0; j < cfg.num_mels; ++j) {
    auto w = fb.weights().Row(j);
    const int peak = static_cast<int>(std::max_element(w.begin(), w.end()) - w.begin());
    EXPECT_LE(std::abs(peak * bin_hz - OracleCenterHz(cfg, j)), bin_hz) << j;
    for (double v : w) EXPECT_GE(v, 0.0);
  }
}

TEST(LogMel, PolarityInvariant) {
  std::mt19937_64 gen(9);
  std::normal_distribution<double> n(0.0, 0.1);
  Waveform w;
  w.samples.resize(5000);
  for (double &v : w.samples) v = n(gen);
  Waveform neg = w;
  for (double &v : neg.samples) v = -v;
  FeatureMatrix a = LogMel(w, FeatureConfig{}), b = LogMel(neg, FeatureConfig{});
  for (size_t i = 0; i < a.data.values().size(); ++i)
    ASSERT_NEAR(a.data.values()[i], b.data.values()[i], 1e-9);
}

TEST(LogMel, AlwaysFinite) {
  std::mt19937_64 gen(10);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Waveform w;
  w.samples.resize(3000);
  for (size_t i = 0; i < w.samples.size(); ++i) w.samples[i] = i % 700 < 350 ? 0.0 : u(gen);
  FeatureMatrix fm = LogMel(w, FeatureConfig{});
  for (double v : fm.data.values()) ASSERT_TRUE(std::isfinite(v));
}

TEST(FeatureConfigTest, Validation) {
  FeatureConfig c;
  EXPECT_NO_THROW(c.Validate(16000));
  c.preemphasis = 1.0;
  EXPECT_THROW(c.Validate(16000), ValidationError);
  c = FeatureConfig{};
  c.log_floor = 0.0;
  EXPECT_THROW(c.Validate(16000), ValidationError);
  c = FeatureConfig{};
  c.high_freq = 9000.0;
  EXPECT_THROW(c.Validate(16000), ValidationError);
  c = FeatureConfig{};
  c.fft_size = 256;  // shorter than a 400-sample frame
  EXPECT_THROW(c.Validate(16000), ValidationError);
  EXPECT_NE(FeatureConfig{}.Hash(), c.Hash());
}

FeatureMatrix FromRows(const std::vector<std::vector<double>> &rows) {
  FeatureMatrix fm;
  fm.data = Matrix(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
  for (size_t r = 0; r < rows.size(); ++r)
    for (size_t c = 0; c < rows[r].size(); ++c) fm.data(r, c) = rows[r][c];
  return fm;
}

FeatureMatrix RandomFeatures(std::mt19937_64 &gen, int frames, int dim) {
  FeatureMatrix fm;
  fm.data = testing::RandomMatrix(gen, frames, dim, 3.0);
  for (int t = 0; t < frames; ++t) fm.data(t, 0) += 7.0;
  return fm;
}

TEST(Cmvn, IdenticalFramesHitTheFloor) {
  std::vector<FeatureMatrix> set{FromRows({{1, 2, 3}, {1, 2, 3}, {1, 2, 3}})};
  CmvnStats s = CmvnFit(set);
  for (double v : s.variance) EXPECT_EQ(v, kVarianceFloor);
  EXPECT_EQ(s.mean, (std::vector<double>{1, 2, 3}));
  EXPECT_EQ(s.frame_count, 3);
}

TEST(Cmvn, TwoPointPopulationVariance) {
  std::vector<FeatureMatrix> set{FromRows({{0, 0, 0, 0}}), FromRows({{2, 2, 2, 2}})};
  CmvnStats s = CmvnFit(set);
  for (int d = 0; d < 4; ++d) {
    EXPECT_DOUBLE_EQ(s.mean[d], 1.0);
    EXPECT_DOUBLE_EQ(s.variance[d], 1.0);
  }
}

TEST(Cmvn, SelfNormalization) {
  std::mt19937_64 gen(4);
  std::vector<FeatureMatrix> set;
  for (int i = 0; i < 7; ++i) set.push_back(RandomFeatures(gen, 5 + i * 3, 6));
  CmvnStats s = CmvnFit(set);
  std::vector<FeatureMatrix> normed;
  for (const auto &fm : set) {
    normed.push_back(CmvnApply(s, fm));
    EXPECT_TRUE(normed.back().normalized);
  }
  // Pooled moments computed independently.
  for (int d = 0; d < 6; ++d) {
    double sum = 0.0, sq = 0.0, n = 0.0;
    for (const auto &fm : normed)
      for (int t = 0; t < fm.frames(); ++t) {
        sum += fm.data(t, d);
        sq += fm.data(t, d) * fm.data(t, d);
        n += 1.0;
      }
    EXPECT_LT(std::abs(sum / n), 1e-6);
    EXPECT_NEAR(sq / n - (sum / n) * (sum / n), 1.0, 1e-6);
  }
}

TEST(Cmvn, IdentityStatsAndAffineInverse) {
  std::mt19937_64 gen(5);
  FeatureMatrix fm = RandomFeatures(gen, 9, 4);
  CmvnStats id;
  id.mean.assign(4, 0.0);
  id.variance.assign(4, 1.0);
  id.frame_count = 2;
  EXPECT_EQ(CmvnApply(id, fm).data, fm.data);

  CmvnStats s;
  s.mean = {1.0, -2.0, 0.5, 3.0};
  s.variance = {4.0, 0.25, 1.0, 9.0};
  s.frame_count = 10;
  FeatureMatrix out = CmvnApply(s, fm);
  for (int t = 0; t < fm.frames(); ++t)
    for (int d = 0; d < 4; ++d) {
      const double back = out.data(t, d) * std::sqrt(s.variance[d]) + s.mean[d];
      EXPECT_NEAR(back, fm.data(t, d), 1e-9);
    }
  // Affine: frame differences scale by 1/std.
  for (int d = 0; d < 4; ++d)
    EXPECT_NEAR(out.data(1, d) - out.data(0, d),
                (fm.data(1, d) - fm.data(0, d)) / std::sqrt(s.variance[d]), 1e-9);
}

TEST(Cmvn, Errors) {
  std::vector<FeatureMatrix> empty;
  EXPECT_THROW(CmvnFit(empty), ValidationError);
  std::vector<FeatureMatrix> one{FromRows({{1, 2}})};
  EXPECT_THROW(CmvnFit(one), ValidationError);
  std::vector<FeatureMatrix> mixed{FromRows({{1, 2}}), FromRows({{1, 2, 3}})};
  EXPECT_THROW(CmvnFit(mixed), ValidationError);
  std::vector<FeatureMatrix> set{FromRows({{0, 0}, {1, 1}})};
  CmvnStats s = CmvnFit(set);
  FeatureMatrix normed = CmvnApply(s, set[0]);
  EXPECT_THROW(CmvnApply(s, normed), ValidationError);
  std::vector<FeatureMatrix> normed_set{normed};
  EXPECT_THROW(CmvnFit(normed_set), ValidationError);
  EXPECT_THROW(CmvnApply(s, FromRows({{1, 2, 3}})), ValidationError);
}

}  // namespace
}  // namespace cvdetect
