// cvdetect/pipeline.h

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

#ifndef CVDETECT_PIPELINE_H_
#define CVDETECT_PIPELINE_H_

#include <vector>

#include "cvdetect/eval.h"
#include "cvdetect/extractor.h"
#include "cvdetect/feature-archive.h"
#include "cvdetect/scoring.h"
#include "cvdetect/synth.h"

namespace cvdetect {

/// Speed-perturbs the TRAIN_TD records of `kind`, featurizes the copies
/// with the archive's config, and trains. CMVN comes from the archive
/// (fitted on the unperturbed training set) when present.
Checkpoint TrainWithAugmentation(const CorpusManifest &manifest,
                                 const FeatureArchive &archive, SegmentKind kind,
                                 const AudioSource &audio,
                                 const std::vector<double> &speed_factors,
                                 const ExtractorConfig &config,
                                 const TrainOptions &options = {});

struct PipelineOptions {
  SynthConfig synth;
  uint64_t seed = 0;  // synthesis and training
  FeatureConfig features;
  ExtractorConfig extractor;
  std::vector<double> speed_factors{0.9, 1.1};
  double lambda_c = 1.0;
  double lambda_cv = 0.1;
  double w = 0.5;
  PairMode mode = PairMode::kPerPair;
  int threads = 1;
};

struct PipelineResult {
  SynthCorpus corpus;
  FeatureArchive archive;
  Checkpoint checkpoint_c, checkpoint_cv;
  EmbeddingTable table_c, table_cv;
  ScoredPairsFile pairs;
  std::vector<std::string> skipped;
  EvalReport report;
};

/// synth -> featurize -> train (C and CV) -> embed -> score -> report, in
/// memory, with the same semantics as the command-line stages.
PipelineResult RunPipeline(const PipelineOptions &options);

}  // namespace cvdetect

#endif  // CVDETECT_PIPELINE_H_
