// src/pipeline.cc

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

#include "cvdetect/pipeline.h"

#include "cvdetect/error.h"
#include "cvdetect/io-util.h"

namespace cvdetect {

Checkpoint TrainWithAugmentation(const CorpusManifest &manifest,
                                 const FeatureArchive &archive, SegmentKind kind,
                                 const AudioSource &audio,
                                 const std::vector<double> &speed_factors,
                                 const ExtractorConfig &config,
                                 const TrainOptions &options) {
  if (speed_factors.empty())
    return Train(manifest, kind, archive.features, config, archive.cmvn, options);
  for (double f : speed_factors)
    if (!(f > kMinSpeedFactor && f < kMaxSpeedFactor))
      throw ValidationError("speed factor " + FormatDouble(f) + " outside (0.5, 2)");
  CorpusManifest augmented = AugmentTrainingSet(manifest, speed_factors);
  CorpusManifest extra = augmented;
  extra.records.clear();
  for (const auto &r : augmented.records)
    if (r.kind == kind && !archive.features.count(r.id)) extra.records.push_back(r);
  FeatureTable features = archive.features;
  FeatureTable perturbed = FeaturizeRecords(extra, audio, archive.config, options.threads);
  features.merge(perturbed);
  return Train(augmented, kind, features, config, archive.cmvn, options);
}

PipelineResult RunPipeline(const PipelineOptions &opt) {
  PipelineResult out;
  out.corpus = SynthesizeCorpus(opt.synth, opt.seed);
  MemoryAudioSource audio(out.corpus.audio);
  const CorpusManifest &manifest = out.corpus.manifest;

  out.archive.config = opt.features;
  out.archive.features = FeaturizeRecords(manifest, audio, opt.features, opt.threads);
  out.archive.cmvn = FitTrainingCmvn(manifest, out.archive.features);

  ExtractorConfig cfg = opt.extractor;
  cfg.seed = opt.seed;
  TrainOptions train_options;
  train_options.threads = opt.threads;
  out.checkpoint_c = TrainWithAugmentation(manifest, out.archive, SegmentKind::kC, audio,
                                           opt.speed_factors, cfg, train_options);
  out.checkpoint_cv = TrainWithAugmentation(manifest, out.archive, SegmentKind::kCV, audio,
                                            opt.speed_factors, cfg, train_options);

  for (SegmentKind kind : {SegmentKind::kC, SegmentKind::kCV}) {
    CorpusManifest subset = manifest;
    subset.records.clear();
    for (const auto &r : manifest.records)
      if (r.kind == kind) subset.records.push_back(r);
    const Checkpoint &ckpt = kind == SegmentKind::kC ? out.checkpoint_c : out.checkpoint_cv;
    (kind == SegmentKind::kC ? out.table_c : out.table_cv) =
        EmbedCorpus(ckpt, subset, out.archive.features, opt.threads);
  }

  ScoringParams params;
  params.head_c = RelationHead::FromModel(out.checkpoint_c.model);
  params.head_cv = RelationHead::FromModel(out.checkpoint_cv.model);
  params.lambda_c = opt.lambda_c;
  params.lambda_cv = opt.lambda_cv;
  params.w = opt.w;
  EvalPairs pairs = BuildEvalPairs(manifest, out.table_c, out.table_cv, params, opt.mode);
  out.skipped = std::move(pairs.skipped);
  out.pairs = {opt.lambda_c, opt.lambda_cv, opt.w, opt.mode, std::move(pairs.pairs)};
  out.report = Report(out.pairs, DefaultGrid());
  return out;
}

}  // namespace cvdetect
