// src/extractor.cc

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

#include "cvdetect/extractor.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "cvdetect/error.h"
#include "cvdetect/parallel.h"

namespace cvdetect {

void ExtractorConfig::Validate() const {
  auto fail = [](const std::string &msg) {
    throw ValidationError("extractor config: " + msg);
  };
  if (input_dim < 1) fail("input_dim must be positive");
  if (num_layers < 1) fail("num_layers must be positive");
  if (hidden_units < 1) fail("hidden_units must be positive");
  if (embedding_dim < 1) fail("embedding_dim must be positive");
  if (num_classes < 2) fail("need at least 2 classes");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    fail("learning rate must be positive");
  if (!(weight_decay >= 0.0 && weight_decay * learning_rate < 1.0))
    fail("weight decay must be non-negative and lr * wd < 1");
  if (batch_size < 1) fail("batch size must be positive");
  if (epochs < 1) fail("epochs must be positive");
  if (pairs_per_sample < 0) fail("pairs_per_sample must be non-negative");
  if (!(task_weight >= 0.0 && task_weight <= 1.0)) fail("task_weight must lie in [0, 1]");
}

ExtractorModel::ExtractorModel(const ExtractorConfig &cfg) : config(cfg) {
  int in = cfg.input_dim;
  for (int l = 0; l < cfg.num_layers; ++l) {
    layers.push_back({GruLayer(in, cfg.hidden_units), GruLayer(in, cfg.hidden_units)});
    in = 2 * cfg.hidden_units;
  }
  embedding_head = Dense(2 * cfg.hidden_units, cfg.embedding_dim);
  class_head = Dense(cfg.embedding_dim, cfg.num_classes);
  relation_head = Dense(cfg.embedding_dim, 1);
}

void ExtractorModel::Init(Rng &rng) {
  for (auto &layer : layers) {
    layer.forward.Init(rng);
    layer.backward.Init(rng);
  }
  embedding_head.Init(rng);
  class_head.Init(rng);
  relation_head.Init(rng);
}

std::vector<Param *> ExtractorModel::Params() {
  std::vector<Param *> out;
  for (auto &layer : layers) {
    for (Param *p : layer.forward.Params()) out.push_back(p);
    for (Param *p : layer.backward.Params()) out.push_back(p);
  }
  for (Dense *d : {&embedding_head, &class_head, &relation_head})
    for (Param *p : d->Params()) out.push_back(p);
  return out;
}

void ExtractorModel::ZeroGrad() {
  for (Param *p : Params()) p->grad.SetZero();
}

SampleMasks MakeSampleMasks(const ExtractorConfig &cfg, int frames, Rng &rng,
                            bool training) {
  SampleMasks m;
  const size_t width = static_cast<size_t>(frames) * 2 * cfg.hidden_units;
  for (int l = 1; l < cfg.num_layers; ++l)
    m.layer_inputs.push_back(DropoutMask(width, cfg.dropout, rng, training));
  m.pooled = DropoutMask(2 * cfg.hidden_units, cfg.dropout, rng, training);
  return m;
}

namespace {

Matrix Concat(const Matrix &a, const Matrix &b) {
  Matrix out(a.rows(), a.cols() + b.cols());
  for (int t = 0; t < a.rows(); ++t) {
    auto row = out.Row(t);
    std::copy(a.Row(t).begin(), a.Row(t).end(), row.begin());
    std::copy(b.Row(t).begin(), b.Row(t).end(), row.begin() + a.cols());
  }
  return out;
}

void ApplyMask(std::vector<double> &x, const std::vector<double> &mask) {
  for (size_t i = 0; i < x.size(); ++i) x[i] *= mask[i];
}

}  // namespace

Embedding ForwardSample(const ExtractorModel &model, const Matrix &features,
                        const SampleMasks *masks, SampleCache *cache) {
  const ExtractorConfig &cfg = model.config;
  if (features.rows() < 1) throw ValidationError("cannot embed an empty sequence");
  if (features.cols() != cfg.input_dim)
    throw ValidationError("feature dim " + std::to_string(features.cols()) +
                          " does not match extractor input dim " +
                          std::to_string(cfg.input_dim));
  if (cache) {
    cache->forward.assign(cfg.num_layers, {});
    cache->backward.assign(cfg.num_layers, {});
  }
  const int steps = features.rows(), hid = cfg.hidden_units;
  Matrix out_f, out_b;
  for (int l = 0; l < cfg.num_layers; ++l) {
    Matrix input;
    if (l > 0) {
      input = Concat(out_f, out_b);
      if (masks) ApplyMask(input.values(), masks->layer_inputs[l - 1]);
    }
    const Matrix &x = l == 0 ? features : input;
    out_f = GruForward(model.layers[l].forward, x, Direction::kForward,
                       cache ? &cache->forward[l] : nullptr);
    out_b = GruForward(model.layers[l].backward, x, Direction::kBackward,
                       cache ? &cache->backward[l] : nullptr);
  }
  std::vector<double> pooled(2 * hid, 0.0);
  if (cfg.pooling == Pooling::kFinalStates) {
    auto f = out_f.Row(steps - 1), b = out_b.Row(0);
    std::copy(f.begin(), f.end(), pooled.begin());
    std::copy(b.begin(), b.end(), pooled.begin() + hid);
  } else {
    for (int t = 0; t < steps; ++t) {
      auto f = out_f.Row(t), b = out_b.Row(t);
      for (int i = 0; i < hid; ++i) {
        pooled[i] += f[i];
        pooled[hid + i] += b[i];
      }
    }
    for (double &v : pooled) v /= steps;
  }
  if (masks) ApplyMask(pooled, masks->pooled);
  Embedding emb = model.embedding_head.Forward(pooled);
  if (cache) {
    cache->pooled = std::move(pooled);
    cache->embedding = emb;
  }
  return emb;
}

void BackwardSample(ExtractorModel &model, const SampleCache &cache,
                    const SampleMasks *masks, std::span<const double> d_embedding) {
  const ExtractorConfig &cfg = model.config;
  if (cache.forward.size() != static_cast<size_t>(cfg.num_layers))
    throw ValidationError("backward pass without a matching forward cache");
  const int hid = cfg.hidden_units;
  const int steps = cache.forward.back().h.rows();
  std::vector<double> d_pooled = model.embedding_head.Backward(cache.pooled, d_embedding);
  if (masks) ApplyMask(d_pooled, masks->pooled);

  Matrix d_f(steps, hid), d_b(steps, hid);
  if (cfg.pooling == Pooling::kFinalStates) {
    auto f = d_f.Row(steps - 1), b = d_b.Row(0);
    std::copy(d_pooled.begin(), d_pooled.begin() + hid, f.begin());
    std::copy(d_pooled.begin() + hid, d_pooled.end(), b.begin());
  } else {
    for (int t = 0; t < steps; ++t) {
      auto f = d_f.Row(t), b = d_b.Row(t);
      for (int i = 0; i < hid; ++i) {
        f[i] = d_pooled[i] / steps;
        b[i] = d_pooled[hid + i] / steps;
      }
    }
  }
  for (int l = cfg.num_layers - 1; l >= 0; --l) {
    Matrix dx = GruBackward(model.layers[l].forward, cache.forward[l], d_f);
    Matrix dx_b = GruBackward(model.layers[l].backward, cache.backward[l], d_b);
    if (l == 0) break;
    auto &v = dx.values();
    const auto &vb = dx_b.values();
    for (size_t i = 0; i < v.size(); ++i) v[i] += vb[i];
    if (masks) ApplyMask(v, masks->layer_inputs[l - 1]);
    for (int t = 0; t < steps; ++t) {
      auto row = dx.Row(t);
      std::copy(row.begin(), row.begin() + hid, d_f.Row(t).begin());
      std::copy(row.begin() + hid, row.end(), d_b.Row(t).begin());
    }
  }
}

Embedding Embed(const ExtractorModel &model, const FeatureMatrix &features) {
  if (!features.normalized)
    throw ValidationError("embedding requires CMVN-normalized features");
  return ForwardSample(model, features.data, nullptr, nullptr);
}

double RelationProbability(const ExtractorModel &model, std::span<const double> x,
                           std::span<const double> y) {
  if (x.size() != y.size())
    throw ValidationError("embedding dimensions differ in relation score");
  std::vector<double> sq(x.size());
  for (size_t i = 0; i < x.size(); ++i) sq[i] = (x[i] - y[i]) * (x[i] - y[i]);
  return Sigmoid(model.relation_head.Forward(sq)[0]);
}

BatchPlan MakeBatchPlan(const ExtractorConfig &cfg,
                        std::span<const TrainingExample> batch, Rng &rng,
                        bool training) {
  const int n = static_cast<int>(batch.size());
  if (n == 0) throw ValidationError("empty batch");
  if (n == 1 && cfg.pairs_per_sample > 0)
    throw ValidationError("batch of size 1 has no partner for relation pairs");
  BatchPlan plan;
  for (const auto &ex : batch)
    plan.masks.push_back(MakeSampleMasks(cfg, ex.features->rows(), rng, training));
  const int k = cfg.pairs_per_sample;
  std::vector<int> others;
  for (int i = 0; i < n; ++i) {
    if (k == 0) break;
    others.clear();
    for (int j = 0; j < n; ++j)
      if (j != i) others.push_back(j);
    if (static_cast<int>(others.size()) >= k) {
      for (int s = 0; s < k; ++s) {
        int pick = s + static_cast<int>(rng.UniformInt(others.size() - s));
        std::swap(others[s], others[pick]);
        plan.pairs.emplace_back(i, others[s]);
      }
    } else {
      for (int s = 0; s < k; ++s)
        plan.pairs.emplace_back(i, others[rng.UniformInt(others.size())]);
    }
  }
  return plan;
}

LossBreakdown MultitaskLoss(ExtractorModel &model,
                            std::span<const TrainingExample> batch,
                            const BatchPlan &plan, bool backprop, int threads) {
  const ExtractorConfig &cfg = model.config;
  const size_t n = batch.size();
  if (n == 0) throw ValidationError("empty batch");
  if (plan.masks.size() != n) throw ValidationError("batch plan does not match batch");
  for (const auto &ex : batch)
    if (ex.label < 0 || ex.label >= cfg.num_classes)
      throw ValidationError("class index " + std::to_string(ex.label) + " out of range");
  const double tw = cfg.task_weight;

  std::vector<SampleCache> caches(n);
  std::vector<Embedding> emb(n);
  ParallelChunks(n, threads, [&](int, size_t begin, size_t end) {
    for (size_t i = begin; i < end; ++i)
      emb[i] = ForwardSample(model, *batch[i].features, &plan.masks[i],
                             backprop ? &caches[i] : nullptr);
  });

  LossBreakdown out;
  std::vector<std::vector<double>> d_emb(n, std::vector<double>(cfg.embedding_dim, 0.0));
  for (size_t i = 0; i < n; ++i) {
    std::vector<double> logits = model.class_head.Forward(emb[i]);
    LossAndGrad ce = SoftmaxCrossEntropy(logits, batch[i].label);
    out.classification += ce.loss;
    if (std::max_element(logits.begin(), logits.end()) - logits.begin() == batch[i].label)
      ++out.correct;
    if (backprop && tw != 0.0) {
      for (double &g : ce.grad) g *= tw / n;
      std::vector<double> d = model.class_head.Backward(emb[i], ce.grad);
      for (int k = 0; k < cfg.embedding_dim; ++k) d_emb[i][k] += d[k];
    }
  }
  out.classification /= n;

  const size_t num_pairs = plan.pairs.size();
  std::vector<double> diff(cfg.embedding_dim), sq(cfg.embedding_dim);
  for (auto [i, j] : plan.pairs) {
    for (int k = 0; k < cfg.embedding_dim; ++k) {
      diff[k] = emb[i][k] - emb[j][k];
      sq[k] = diff[k] * diff[k];
    }
    const double p = Sigmoid(model.relation_head.Forward(sq)[0]);
    const int label = batch[i].label == batch[j].label ? 1 : 0;
    BinaryLoss bce = BinaryCrossEntropy(p, label);
    out.binary += bce.loss;
    if (backprop && tw != 1.0) {
      const double da = (1.0 - tw) / num_pairs * bce.d_prob * p * (1.0 - p);
      const double d_logit[1] = {da};
      std::vector<double> d_sq = model.relation_head.Backward(sq, d_logit);
      for (int k = 0; k < cfg.embedding_dim; ++k) {
        const double g = 2.0 * diff[k] * d_sq[k];
        d_emb[i][k] += g;
        d_emb[j][k] -= g;
      }
    }
  }
  out.num_pairs = static_cast<int>(num_pairs);
  if (num_pairs > 0) out.binary /= num_pairs;
  out.total = tw * out.classification + (1.0 - tw) * out.binary;

  if (backprop) {
    const int workers = NumChunks(n, threads);
    if (workers == 1) {
      for (size_t i = 0; i < n; ++i) BackwardSample(model, caches[i], &plan.masks[i], d_emb[i]);
    } else {
      std::vector<ExtractorModel> locals(workers, model);
      for (auto &local : locals) local.ZeroGrad();
      ParallelChunks(n, threads, [&](int w, size_t begin, size_t end) {
        for (size_t i = begin; i < end; ++i)
          BackwardSample(locals[w], caches[i], &plan.masks[i], d_emb[i]);
      });
      std::vector<Param *> dst = model.Params();
      for (auto &local : locals) {
        std::vector<Param *> src = local.Params();
        for (size_t p = 0; p < dst.size(); ++p) {
          auto &g = dst[p]->grad.values();
          const auto &s = src[p]->grad.values();
          for (size_t e = 0; e < g.size(); ++e) g[e] += s[e];
        }
      }
    }
  }
  return out;
}

namespace {

/// Batches of consecutive indices; a trailing singleton joins the
/// previous batch so every batch can form relation pairs.
std::vector<std::pair<size_t, size_t>> MakeBatches(size_t n, size_t batch_size) {
  std::vector<std::pair<size_t, size_t>> out;
  for (size_t b = 0; b < n; b += batch_size) out.emplace_back(b, std::min(n, b + batch_size));
  if (out.size() > 1 && out.back().second - out.back().first == 1) {
    out[out.size() - 2].second = out.back().second;
    out.pop_back();
  }
  return out;
}

}  // namespace

Checkpoint Train(const CorpusManifest &manifest, SegmentKind kind,
                 const FeatureTable &features, ExtractorConfig cfg,
                 const std::optional<CmvnStats> &cmvn, const TrainOptions &options) {
  const std::vector<std::string> &inventory = manifest.Inventory(kind);
  std::map<std::string, int> index;
  for (size_t i = 0; i < inventory.size(); ++i) index[inventory[i]] = static_cast<int>(i);

  std::vector<const SegmentRecord *> records;
  for (const auto &r : manifest.records)
    if (r.group == Group::kTrainTd && r.kind == kind) records.push_back(&r);
  if (records.empty())
    throw ValidationError("no " + KindName(kind) + " training records in manifest");

  std::vector<const FeatureMatrix *> raw;
  std::vector<int> labels;
  std::set<int> present;
  for (const SegmentRecord *r : records) {
    auto it = features.find(r->id);
    if (it == features.end())
      throw ValidationError("no features for training record '" + r->id + "'");
    raw.push_back(&it->second);
    labels.push_back(index.at(r->Category()));
    present.insert(labels.back());
  }
  if (present.size() < 2)
    throw ValidationError("training data contains a single class; need at least 2");

  cfg.num_classes = static_cast<int>(inventory.size());
  cfg.input_dim = raw.front()->dim();
  cfg.Validate();

  Checkpoint ckpt;
  ckpt.kind = kind;
  ckpt.inventory = inventory;
  ckpt.config = cfg;
  ckpt.cmvn = cmvn ? *cmvn : CmvnFit(std::span<const FeatureMatrix *const>(raw));
  if (ckpt.cmvn.dim() != cfg.input_dim)
    throw ValidationError("CMVN dimension does not match features");

  std::vector<Matrix> normalized;
  normalized.reserve(raw.size());
  for (const FeatureMatrix *fm : raw) normalized.push_back(CmvnApply(ckpt.cmvn, *fm).data);
  const size_t n = normalized.size();
  std::vector<TrainingExample> all(n);
  for (size_t i = 0; i < n; ++i) all[i] = {&normalized[i], labels[i]};

  ExtractorModel model(cfg);
  {
    Rng init_rng(DeriveSeed(cfg.seed, 12));
    model.Init(init_rng);
  }

  // Loss of the untrained model in inference mode; the baseline for the
  // training curve.
  {
    auto batches = MakeBatches(n, static_cast<size_t>(cfg.batch_size));
    double sum = 0.0;
    for (size_t b = 0; b < batches.size(); ++b) {
      std::span<const TrainingExample> batch(all.data() + batches[b].first,
                                             batches[b].second - batches[b].first);
      Rng rng(DeriveSeed(cfg.seed, 13, b));
      BatchPlan plan = MakeBatchPlan(cfg, batch, rng, false);
      sum += MultitaskLoss(model, batch, plan, false, options.threads).total * batch.size();
    }
    ckpt.log.initial_loss = sum / n;
  }

  AdamState adam;
  adam.options.learning_rate = cfg.learning_rate;
  adam.options.weight_decay = cfg.weight_decay;
  std::vector<Param *> params = model.Params();
  std::vector<size_t> order(n);
  std::vector<TrainingExample> batch_buf;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), size_t{0});
    Rng shuffle_rng(DeriveSeed(cfg.seed, 10, static_cast<uint64_t>(epoch)));
    for (size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.UniformInt(i)]);
    auto batches = MakeBatches(n, static_cast<size_t>(cfg.batch_size));
    double loss_sum = 0.0;
    int64_t correct = 0;
    for (size_t b = 0; b < batches.size(); ++b) {
      batch_buf.clear();
      for (size_t i = batches[b].first; i < batches[b].second; ++i) batch_buf.push_back(all[order[i]]);
      Rng rng(DeriveSeed(cfg.seed, 11, static_cast<uint64_t>(epoch), b));
      BatchPlan plan = MakeBatchPlan(cfg, batch_buf, rng, true);
      model.ZeroGrad();
      LossBreakdown lb = MultitaskLoss(model, batch_buf, plan, true, options.threads);
      if (!std::isfinite(lb.total))
        throw RuntimeError("non-finite training loss in epoch " + std::to_string(epoch + 1));
      AdamStep(params, adam);
      loss_sum += lb.total * batch_buf.size();
      correct += lb.correct;
    }
    ckpt.log.epoch_loss.push_back(loss_sum / n);
    ckpt.log.epoch_accuracy.push_back(static_cast<double>(correct) / n);
    if (options.on_epoch)
      options.on_epoch(epoch + 1, ckpt.log.epoch_loss.back(), ckpt.log.epoch_accuracy.back());
  }

  std::vector<int> hits(n, 0);
  ParallelChunks(n, options.threads, [&](int, size_t begin, size_t end) {
    for (size_t i = begin; i < end; ++i) {
      Embedding e = ForwardSample(model, normalized[i], nullptr, nullptr);
      std::vector<double> logits = model.class_head.Forward(e);
      hits[i] = std::max_element(logits.begin(), logits.end()) - logits.begin() == labels[i];
    }
  });
  ckpt.log.final_accuracy =
      static_cast<double>(std::accumulate(hits.begin(), hits.end(), 0)) / n;
  ckpt.log.num_examples = static_cast<int64_t>(n);
  model.ZeroGrad();
  ckpt.model = std::move(model);
  return ckpt;
}

EmbeddingTable EmbedCorpus(const Checkpoint &ckpt, const CorpusManifest &manifest,
                           const FeatureTable &features, int threads) {
  std::vector<const SegmentRecord *> records;
  for (const auto &r : manifest.records) {
    if (r.kind != ckpt.kind)
      throw ValidationError("record '" + r.id + "' is " + KindName(r.kind) +
                            " but the checkpoint embeds " + KindName(ckpt.kind) + " segments");
    if (!features.count(r.id))
      throw ValidationError("no features for record '" + r.id + "'");
    if (features.at(r.id).dim() != ckpt.config.input_dim)
      throw ValidationError("features of '" + r.id + "' do not match the checkpoint input dim");
    records.push_back(&r);
  }
  std::vector<Embedding> out(records.size());
  ParallelChunks(records.size(), threads, [&](int, size_t begin, size_t end) {
    for (size_t i = begin; i < end; ++i)
      out[i] = Embed(ckpt.model, CmvnApply(ckpt.cmvn, features.at(records[i]->id)));
  });
  EmbeddingTable table;
  for (size_t i = 0; i < records.size(); ++i) table.emplace(records[i]->id, std::move(out[i]));
  return table;
}

}  // namespace cvdetect
