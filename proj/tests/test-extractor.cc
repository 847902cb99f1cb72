// tests/test-extractor.cc

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

#include "cvdetect/error.h"
#include "cvdetect/extractor.h"
#include "cvdetect/feature-archive.h"
#include "cvdetect/synth.h"
#include "test-util.h"

namespace cvdetect {
namespace {

using testing::RandomMatrix;

ExtractorConfig ToyConfig(int input_dim = 3, int layers = 2, int hidden = 3, int embed = 4,
                          int classes = 3) {
  ExtractorConfig c;
  c.input_dim = input_dim;
  c.num_layers = layers;
  c.hidden_units = hidden;
  c.embedding_dim = embed;
  c.num_classes = classes;
  c.pairs_per_sample = 2;
  c.dropout = 0.3;
  return c;
}

ExtractorModel RandomModel(const ExtractorConfig &c, uint64_t seed) {
  ExtractorModel m(c);
  std::mt19937_64 gen(seed);
  for (Param *p : m.Params())
    p->value = RandomMatrix(gen, p->value.rows(), p->value.cols(), 0.6);
  return m;
}

FeatureMatrix Normalized(Matrix m) {
  FeatureMatrix fm;
  fm.data = std::move(m);
  fm.normalized = true;
  return fm;
}

TEST(Config, DefaultsAndValidation) {
  ExtractorConfig c;
  EXPECT_EQ(c.num_layers, 3);
  EXPECT_EQ(c.hidden_units, 400);
  EXPECT_EQ(c.embedding_dim, 128);
  EXPECT_EQ(c.dropout, 0.5);
  EXPECT_EQ(c.learning_rate, 0.001);
  EXPECT_EQ(c.weight_decay, 0.0005);
  EXPECT_EQ(c.batch_size, 256);
  EXPECT_EQ(c.epochs, 5);
  EXPECT_THROW(c.Validate(), ValidationError);  // num_classes unset
  c.num_classes = 4;
  EXPECT_NO_THROW(c.Validate());
  c.dropout = 1.0;
  EXPECT_THROW(c.Validate(), ValidationError);
  c.dropout = 0.5;
  c.task_weight = 1.5;
  EXPECT_THROW(c.Validate(), ValidationError);
}

TEST(Model, ShapesChain) {
  ExtractorConfig c = ToyConfig(5, 3, 4, 6, 7);
  ExtractorModel m(c);
  ASSERT_EQ(m.layers.size(), 3u);
  EXPECT_EQ(m.layers[0].forward.input_dim, 5);
  EXPECT_EQ(m.layers[1].forward.input_dim, 8);
  EXPECT_EQ(m.embedding_head.input_dim(), 8);
  EXPECT_EQ(m.embedding_head.output_dim(), 6);
  EXPECT_EQ(m.class_head.output_dim(), 7);
  EXPECT_EQ(m.relation_head.input_dim(), 6);
  EXPECT_EQ(m.relation_head.output_dim(), 1);
}

TEST(Embed, DeterministicAndSingleFrame) {
  ExtractorConfig c = ToyConfig(80, 2, 8, 128, 4);
  ExtractorModel m = RandomModel(c, 1);
  std::mt19937_64 gen(2);
  FeatureMatrix fm = Normalized(RandomMatrix(gen, 7, 80));
  EXPECT_EQ(Embed(m, fm), Embed(m, fm));
  Embedding one = Embed(m, Normalized(RandomMatrix(gen, 1, 80)));
  EXPECT_EQ(one.size(), 128u);
  for (double v : one) EXPECT_TRUE(std::isfinite(v));
  FeatureMatrix raw = fm;
  raw.normalized = false;
  EXPECT_THROW(Embed(m, raw), ValidationError);
  EXPECT_THROW(Embed(m, Normalized(RandomMatrix(gen, 3, 79))), ValidationError);
}

TEST(Embed, MatchesHandSteppedOracle) {
  ExtractorConfig c = ToyConfig(3, 1, 4, 3, 2);
  ExtractorModel m = RandomModel(c, 3);
  std::mt19937_64 gen(4);
  Matrix seq = RandomMatrix(gen, 2, 3);
  std::vector<std::vector<double>> x{{seq(0, 0), seq(0, 1), seq(0, 2)},
                                     {seq(1, 0), seq(1, 1), seq(1, 2)}};
  auto fwd = testing::ScalarGru(m.layers[0].forward, x);
  auto rev = x;
  std::reverse(rev.begin(), rev.end());
  auto bwd = testing::ScalarGru(m.layers[0].backward, rev);
  // Forward state at the last frame; backward state aligned with frame 0,
  // which is the last step of the reversed pass.
  std::vector<double> pooled = fwd[1];
  pooled.insert(pooled.end(), bwd[1].begin(), bwd[1].end());
  Embedding got = Embed(m, Normalized(seq));
  for (int i = 0; i < 3; ++i) {
    double acc = m.embedding_head.b.value(i, 0);
    for (int j = 0; j < 8; ++j) acc += m.embedding_head.w.value(i, j) * pooled[j];
    EXPECT_NEAR(got[i], acc, 1e-10);
  }
}

TEST(Embed, MeanPoolingSwitch) {
  ExtractorConfig c = ToyConfig(3, 1, 4, 3, 2);
  ExtractorModel m = RandomModel(c, 5);
  std::mt19937_64 gen(6);
  FeatureMatrix fm = Normalized(RandomMatrix(gen, 4, 3));
  Embedding final_states = Embed(m, fm);
  m.config.pooling = Pooling::kMean;
  Embedding mean = Embed(m, fm);
  EXPECT_NE(final_states, mean);
  // One frame: both poolings see the same states.
  FeatureMatrix one = Normalized(RandomMatrix(gen, 1, 3));
  Embedding a = Embed(m, one);
  m.config.pooling = Pooling::kFinalStates;
  EXPECT_EQ(a, Embed(m, one));
}

struct ToyBatch {
  std::vector<Matrix> feats;
  std::vector<TrainingExample> examples;
  ToyBatch(std::mt19937_64 &gen, const std::vector<int> &labels, int dim) {
    for (size_t i = 0; i < labels.size(); ++i) feats.push_back(RandomMatrix(gen, 2 + i % 3, dim));
    for (size_t i = 0; i < labels.size(); ++i) examples.push_back({&feats[i], labels[i]});
  }
};

TEST(Multitask, TaskWeightBoundaries) {
  std::mt19937_64 gen(7);
  ExtractorConfig c = ToyConfig();
  ToyBatch b(gen, {0, 1, 2, 1}, 3);
  Rng rng(1);
  BatchPlan plan = MakeBatchPlan(c, b.examples, rng, true);
  for (double tw : {0.0, 1.0}) {
    c.task_weight = tw;
    ExtractorModel m = RandomModel(c, 8);
    LossBreakdown l = MultitaskLoss(m, b.examples, plan, false);
    EXPECT_EQ(l.total, tw == 1.0 ? l.classification : l.binary);
  }
}

TEST(Multitask, PairLabelsAndPlan) {
  std::mt19937_64 gen(9);
  ExtractorConfig c = ToyConfig();
  c.pairs_per_sample = 3;
  ToyBatch b(gen, {1, 1, 1, 1, 1}, 3);
  Rng rng(2);
  BatchPlan plan = MakeBatchPlan(c, b.examples, rng, true);
  ASSERT_EQ(plan.pairs.size(), 15u);
  std::map<int, std::set<int>> partners;
  for (auto [i, j] : plan.pairs) {
    EXPECT_NE(i, j);
    EXPECT_TRUE(partners[i].insert(j).second) << "without replacement";
  }
  // All same class: every pair label is 1, so a relation head that
  // outputs probability ~1 drives the binary loss to ~0.
  c.task_weight = 0.0;
  ExtractorModel m = RandomModel(c, 10);
  m.relation_head.w.value.SetZero();
  m.relation_head.b.value(0, 0) = 30.0;
  EXPECT_LT(MultitaskLoss(m, b.examples, plan, false).binary, 1e-6);
  m.relation_head.b.value(0, 0) = -30.0;
  EXPECT_GT(MultitaskLoss(m, b.examples, plan, false).binary, 10.0);

  // Small batches fall back to sampling with replacement.
  ToyBatch two(gen, {0, 1}, 3);
  BatchPlan p2 = MakeBatchPlan(c, two.examples, rng, true);
  EXPECT_EQ(p2.pairs.size(), 6u);
  for (auto [i, j] : p2.pairs) EXPECT_EQ(i + j, 1);
  ToyBatch one(gen, {0}, 3);
  EXPECT_THROW(MakeBatchPlan(c, one.examples, rng, true), ValidationError);
}

TEST(Multitask, TwoSampleClosedForm) {
  std::mt19937_64 gen(11);
  ExtractorConfig c = ToyConfig();
  c.pairs_per_sample = 1;
  c.task_weight = 0.3;
  ExtractorModel m = RandomModel(c, 12);
  ToyBatch b(gen, {0, 2}, 3);
  Rng rng(3);
  BatchPlan plan = MakeBatchPlan(c, b.examples, rng, false);  // masks all ones
  ASSERT_EQ(plan.pairs.size(), 2u);
  Embedding e0 = Embed(m, Normalized(b.feats[0])), e1 = Embed(m, Normalized(b.feats[1]));

  auto ce = [&](const Embedding &e, int target) {
    std::vector<double> z(3);
    for (int k = 0; k < 3; ++k) {
      z[k] = m.class_head.b.value(k, 0);
      for (int j = 0; j < 4; ++j) z[k] += m.class_head.w.value(k, j) * e[j];
    }
    const double mx = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) s += std::exp(v - mx);
    return mx + std::log(s) - z[target];
  };
  double a = m.relation_head.b.value(0, 0);
  for (int j = 0; j < 4; ++j) a += m.relation_head.w.value(0, j) * (e0[j] - e1[j]) * (e0[j] - e1[j]);
  const double p = 1.0 / (1.0 + std::exp(-a));
  const double bce = -std::log(1.0 - p);  // different classes
  const double expect = 0.3 * 0.5 * (ce(e0, 0) + ce(e1, 2)) + 0.7 * bce;
  LossBreakdown l = MultitaskLoss(m, b.examples, plan, false);
  EXPECT_NEAR(l.total, expect, 1e-12);
  EXPECT_NEAR(l.binary, bce, 1e-12);
}

TEST(Multitask, FullModelGradCheck) {
  std::mt19937_64 gen(13);
  for (Pooling pool : {Pooling::kFinalStates, Pooling::kMean}) {
    ExtractorConfig c = ToyConfig();
    c.pooling = pool;
    ExtractorModel m = RandomModel(c, 14);
    ToyBatch b(gen, {0, 1, 2, 1, 0}, 3);
    Rng rng(4);
    BatchPlan plan = MakeBatchPlan(c, b.examples, rng, true);  // frozen masks and pairs
    auto params = m.Params();
    GradCheckResult r = GradCheck(
        params, [&] { return MultitaskLoss(m, b.examples, plan, false).total; },
        [&] { MultitaskLoss(m, b.examples, plan, true); });
    EXPECT_LT(r.max_relative_error, 1e-4);
    EXPECT_EQ(r.entries_checked, static_cast<size_t>(
                                     [&] {
                                       size_t n = 0;
                                       for (Param *p : params) n += p->value.size();
                                       return n;
                                     }()));
  }
}

TEST(Multitask, ThreadedGradientsMatchSerial) {
  std::mt19937_64 gen(15);
  ExtractorConfig c = ToyConfig();
  ToyBatch b(gen, {0, 1, 2, 1, 0, 2, 2}, 3);
  Rng rng(5);
  BatchPlan plan = MakeBatchPlan(c, b.examples, rng, true);
  ExtractorModel serial = RandomModel(c, 16), threaded = serial;
  LossBreakdown ls = MultitaskLoss(serial, b.examples, plan, true, 1);
  LossBreakdown lt = MultitaskLoss(threaded, b.examples, plan, true, 3);
  EXPECT_EQ(ls.total, lt.total);
  auto ps = serial.Params(), pt = threaded.Params();
  for (size_t k = 0; k < ps.size(); ++k)
    for (size_t i = 0; i < ps[k]->grad.size(); ++i)
      EXPECT_NEAR(ps[k]->grad.values()[i], pt[k]->grad.values()[i], 1e-12);
}

// Small synthetic corpus shared by the training tests.
struct TinyCorpus {
  SynthCorpus synth;
  FeatureTable features;
  CmvnStats cmvn;
  explicit TinyCorpus(std::vector<std::string> consonants, int tokens, uint64_t seed = 1) {
    SynthConfig sc;
    sc.consonants = std::move(consonants);
    sc.vowels = {"a"};
    sc.tokens_per_class = tokens;
    synth = SynthesizeCorpus(sc, seed);
    features = FeaturizeRecords(synth.manifest, MemoryAudioSource(synth.audio), FeatureConfig{});
    cmvn = FitTrainingCmvn(synth.manifest, features);
  }
};

ExtractorConfig SmallTrainConfig() {
  ExtractorConfig c;
  c.num_layers = 1;
  c.hidden_units = 6;
  c.embedding_dim = 5;
  c.batch_size = 8;
  c.epochs = 2;
  c.pairs_per_sample = 2;
  c.seed = 3;
  return c;
}

TEST(TrainTest, DeterministicAndRoundTrips) {
  TinyCorpus tc({"p", "s", "l"}, 8);
  Checkpoint a = Train(tc.synth.manifest, SegmentKind::kC, tc.features, SmallTrainConfig(), tc.cmvn);
  Checkpoint b = Train(tc.synth.manifest, SegmentKind::kC, tc.features, SmallTrainConfig(), tc.cmvn);
  EXPECT_EQ(SerializeCheckpoint(a), SerializeCheckpoint(b));
  EXPECT_EQ(a.inventory, tc.synth.manifest.consonant_inventory);
  EXPECT_EQ(a.config.num_classes, 3);
  EXPECT_EQ(a.log.epoch_loss.size(), 2u);
  EXPECT_TRUE(a.cmvn == tc.cmvn);

  ExtractorConfig other = SmallTrainConfig();
  other.seed = 4;
  Checkpoint c = Train(tc.synth.manifest, SegmentKind::kC, tc.features, other, tc.cmvn);
  EXPECT_NE(SerializeCheckpoint(a), SerializeCheckpoint(c));

  testing::TempDir dir("ckpt");
  SaveCheckpoint(a, dir.File("c.ckpt"));
  Checkpoint loaded = LoadCheckpoint(dir.File("c.ckpt"));
  EXPECT_EQ(SerializeCheckpoint(loaded), SerializeCheckpoint(a));
  CorpusManifest cs = tc.synth.manifest;
  std::erase_if(cs.records, [](const SegmentRecord &r) { return r.kind != SegmentKind::kC; });
  EmbeddingTable ea = EmbedCorpus(a, cs, tc.features);
  EmbeddingTable el = EmbedCorpus(loaded, cs, tc.features);
  EXPECT_EQ(ea, el);  // bit-identical
  EXPECT_EQ(ea.size(), cs.records.size());

  // Embedding table files round-trip too.
  SaveEmbeddingTable(ea, SegmentKind::kC, dir.File("e.bin"));
  SegmentKind kind = SegmentKind::kCV;
  EXPECT_EQ(LoadEmbeddingTable(dir.File("e.bin"), &kind), ea);
  EXPECT_EQ(kind, SegmentKind::kC);

  // Corrupted or truncated checkpoints are rejected.
  std::string bytes = SerializeCheckpoint(a);
  EXPECT_THROW(DeserializeCheckpoint(bytes.substr(0, bytes.size() / 2), "half"), ValidationError);
  bytes[4] = 9;  // version
  EXPECT_THROW(DeserializeCheckpoint(bytes, "version"), ValidationError);
}

TEST(TrainTest, ThreadedTrainingIsReproducible) {
  TinyCorpus tc({"p", "s"}, 8);
  TrainOptions opt;
  opt.threads = 3;
  Checkpoint a = Train(tc.synth.manifest, SegmentKind::kCV, tc.features, SmallTrainConfig(),
                       tc.cmvn, opt);
  Checkpoint b = Train(tc.synth.manifest, SegmentKind::kCV, tc.features, SmallTrainConfig(),
                       tc.cmvn, opt);
  EXPECT_EQ(SerializeCheckpoint(a), SerializeCheckpoint(b));
  EXPECT_EQ(a.inventory, (std::vector<std::string>{"p+a", "s+a"}));
}

TEST(TrainTest, EmbeddingIndependentOfBatchComposition) {
  TinyCorpus tc({"p", "s"}, 6);
  Checkpoint ck =
      Train(tc.synth.manifest, SegmentKind::kC, tc.features, SmallTrainConfig(), tc.cmvn);
  CorpusManifest cs = tc.synth.manifest;
  std::erase_if(cs.records, [](const SegmentRecord &r) { return r.kind != SegmentKind::kC; });
  EmbeddingTable all = EmbedCorpus(ck, cs, tc.features, 1);
  EXPECT_EQ(EmbedCorpus(ck, cs, tc.features, 4), all);
  for (size_t i = 0; i < cs.records.size(); i += 5) {
    CorpusManifest single = cs;
    single.records = {cs.records[i]};
    EmbeddingTable one = EmbedCorpus(ck, single, tc.features);
    EXPECT_EQ(one.at(cs.records[i].id), all.at(cs.records[i].id));
  }
}

TEST(TrainTest, SeparableClassesAreLearned) {
  TinyCorpus tc({"p", "s"}, 60, 2);
  ExtractorConfig c;
  c.num_layers = 2;
  c.hidden_units = 32;
  c.embedding_dim = 16;
  c.epochs = 3;
  c.batch_size = 16;
  c.learning_rate = 0.003;
  c.seed = 1;
  Checkpoint ck = Train(tc.synth.manifest, SegmentKind::kC, tc.features, c, tc.cmvn);
  EXPECT_GT(ck.log.final_accuracy, 0.95);
  EXPECT_LT(ck.log.epoch_loss.back(), ck.log.initial_loss);
}

TEST(TrainTest, Errors) {
  TinyCorpus tc({"p", "s"}, 4);
  CorpusManifest one_class = tc.synth.manifest;
  std::erase_if(one_class.records, [](const SegmentRecord &r) { return r.consonant != "p"; });
  EXPECT_THROW(Train(one_class, SegmentKind::kC, tc.features, SmallTrainConfig(), tc.cmvn),
               ValidationError);
  FeatureTable missing = tc.features;
  for (const auto &r : tc.synth.manifest.records)
    if (r.group == Group::kTrainTd) {
      missing.erase(r.id);
      break;
    }
  EXPECT_THROW(Train(tc.synth.manifest, SegmentKind::kC, missing, SmallTrainConfig(), tc.cmvn),
               ValidationError);

  Checkpoint ck =
      Train(tc.synth.manifest, SegmentKind::kC, tc.features, SmallTrainConfig(), tc.cmvn);
  CorpusManifest empty = tc.synth.manifest;
  empty.records.clear();
  EXPECT_TRUE(EmbedCorpus(ck, empty, tc.features).empty());
  CorpusManifest cv = tc.synth.manifest;
  std::erase_if(cv.records, [](const SegmentRecord &r) { return r.kind != SegmentKind::kCV; });
  EXPECT_THROW(EmbedCorpus(ck, cv, tc.features), ValidationError);
}

}  // namespace
}  // namespace cvdetect
