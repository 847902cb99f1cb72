// cvdetect/extractor.h

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

#ifndef CVDETECT_EXTRACTOR_H_
#define CVDETECT_EXTRACTOR_H_

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cvdetect/corpus.h"
#include "cvdetect/dsp.h"
#include "cvdetect/feature-archive.h"
#include "cvdetect/nn.h"

namespace cvdetect {

using Embedding = std::vector<double>;
using EmbeddingTable = std::map<std::string, Embedding>;

enum class Pooling {
  kFinalStates,  // top layer: forward state at t=T concatenated with backward state at t=1
  kMean,         // time average of the top layer's outputs
};

/// Defaults are the full-scale extractor settings.
struct ExtractorConfig {
  int input_dim = 80;
  int num_layers = 3;
  int hidden_units = 400;
  int embedding_dim = 128;
  int num_classes = 0;  // set from the manifest inventory at training time
  double dropout = 0.5;
  double learning_rate = 0.001;
  double weight_decay = 0.0005;
  int batch_size = 256;
  int epochs = 5;
  int pairs_per_sample = 4;
  uint64_t seed = 0;
  double task_weight = 0.5;  // weight of the classification term
  Pooling pooling = Pooling::kFinalStates;

  void Validate() const;
  bool operator==(const ExtractorConfig &) const = default;
};

struct BiGruLayer {
  GruLayer forward;
  GruLayer backward;
};

/// Bi-GRU stack with three heads: the embedding projection, the
/// classification head used only in training, and the binary relation
/// head (one weight per embedding dimension plus a bias) shared by
/// training and scoring.
struct ExtractorModel {
  ExtractorConfig config;
  std::vector<BiGruLayer> layers;
  Dense embedding_head;
  Dense class_head;
  Dense relation_head;

  ExtractorModel() = default;
  /// Allocates zero-valued parameters shaped by `config`.
  explicit ExtractorModel(const ExtractorConfig &config);

  void Init(Rng &rng);
  /// Fixed order: layers (forward then backward), embedding, class,
  /// relation heads.
  std::vector<Param *> Params();
  void ZeroGrad();
};

/// Dropout masks for one training sample. `layer_inputs[l]` covers the
/// T x 2H input of layer l+1; `pooled` covers the pooled top-layer vector.
struct SampleMasks {
  std::vector<std::vector<double>> layer_inputs;
  std::vector<double> pooled;
};

SampleMasks MakeSampleMasks(const ExtractorConfig &config, int frames, Rng &rng,
                            bool training);

struct SampleCache {
  std::vector<GruCache> forward, backward;
  std::vector<double> pooled;  // after dropout
  Embedding embedding;
};

/// Runs one sequence through the model. `masks` may be null (inference).
Embedding ForwardSample(const ExtractorModel &model, const Matrix &features,
                        const SampleMasks *masks, SampleCache *cache);

/// Accumulates parameter gradients for d(loss)/d(embedding).
void BackwardSample(ExtractorModel &model, const SampleCache &cache,
                    const SampleMasks *masks, std::span<const double> d_embedding);

/// Inference embedding of CMVN-normalized features.
Embedding Embed(const ExtractorModel &model, const FeatureMatrix &features);

/// sigmoid(w . ((x - y) * (x - y)) + b) using the model's relation head.
double RelationProbability(const ExtractorModel &model, std::span<const double> x,
                           std::span<const double> y);

struct TrainingExample {
  const Matrix *features = nullptr;  // normalized
  int label = 0;
};

/// Randomness of one multitask-loss evaluation, drawn up front so the
/// loss is a deterministic function of the parameters.
struct BatchPlan {
  std::vector<SampleMasks> masks;
  std::vector<std::pair<int, int>> pairs;
};

/// Draws dropout masks and relation pairs: pairs_per_sample partners per
/// sample, uniform over the rest of the batch, without replacement when
/// the batch is large enough.
BatchPlan MakeBatchPlan(const ExtractorConfig &config,
                        std::span<const TrainingExample> batch, Rng &rng,
                        bool training);

struct LossBreakdown {
  double total = 0.0;
  double classification = 0.0;  // mean softmax cross-entropy
  double binary = 0.0;          // mean pair binary cross-entropy
  int correct = 0;
  int num_pairs = 0;
};

/// task_weight * mean CE + (1 - task_weight) * mean pair BCE, where a pair
/// is labelled 1 iff both samples share a class. When `backprop` is set,
/// gradients are accumulated into the model. `threads` > 1 runs samples
/// on worker threads.
LossBreakdown MultitaskLoss(ExtractorModel &model,
                            std::span<const TrainingExample> batch,
                            const BatchPlan &plan, bool backprop, int threads = 1);

struct TrainingLog {
  double initial_loss = 0.0;
  std::vector<double> epoch_loss;
  std::vector<double> epoch_accuracy;  // training mode (dropout on)
  double final_accuracy = 0.0;         // inference mode on the training set
  int64_t num_examples = 0;

  bool operator==(const TrainingLog &) const = default;
};

struct Checkpoint {
  ExtractorConfig config;
  SegmentKind kind = SegmentKind::kC;
  std::vector<std::string> inventory;  // class index -> label
  ExtractorModel model;
  CmvnStats cmvn;
  TrainingLog log;
};

struct TrainOptions {
  int threads = 1;
  /// Called after each epoch with (epoch, mean loss, accuracy).
  std::function<void(int, double, double)> on_epoch;
};

/// Trains an extractor on the TRAIN_TD records of `kind`. Classes are the
/// manifest inventory for that kind. Without `cmvn`, statistics are fitted
/// on the training features.
Checkpoint Train(const CorpusManifest &manifest, SegmentKind kind,
                 const FeatureTable &features, ExtractorConfig config,
                 const std::optional<CmvnStats> &cmvn = std::nullopt,
                 const TrainOptions &options = {});

/// Embeds every record (all must be of the checkpoint's kind).
EmbeddingTable EmbedCorpus(const Checkpoint &checkpoint,
                           const CorpusManifest &manifest,
                           const FeatureTable &features, int threads = 1);

// Checkpoint file: "CVCK", u32 version, config block, kind, inventory,
// parameters with shape headers, CMVN block, training log.
std::string SerializeCheckpoint(const Checkpoint &checkpoint);
Checkpoint DeserializeCheckpoint(std::string_view bytes, const std::string &source_name);
void SaveCheckpoint(const Checkpoint &checkpoint, const std::string &path);
Checkpoint LoadCheckpoint(const std::string &path);

// Embedding table file: "CVEM", u32 version, u32 kind, u32 dim, u32 count,
// then (string id, dim f64) per entry sorted by id.
std::string SerializeEmbeddingTable(const EmbeddingTable &table, SegmentKind kind);
EmbeddingTable DeserializeEmbeddingTable(std::string_view bytes,
                                         const std::string &source_name,
                                         SegmentKind *kind = nullptr);
void SaveEmbeddingTable(const EmbeddingTable &table, SegmentKind kind,
                        const std::string &path);
EmbeddingTable LoadEmbeddingTable(const std::string &path, SegmentKind *kind = nullptr);

}  // namespace cvdetect

#endif  // CVDETECT_EXTRACTOR_H_
