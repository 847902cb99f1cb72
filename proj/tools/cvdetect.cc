// tools/cvdetect.cc

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

// Command-line front end: synth -> featurize -> train -> embed -> score
// -> eval / sweep. Every stage reads and writes files; outputs are
// written atomically. Exit status: 0 ok, 1 invalid input, 2 runtime
// failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "cvdetect/corpus.h"
#include "cvdetect/dsp.h"
#include "cvdetect/error.h"
#include "cvdetect/eval.h"
#include "cvdetect/extractor.h"
#include "cvdetect/feature-archive.h"
#include "cvdetect/io-util.h"
#include "cvdetect/pipeline.h"
#include "cvdetect/scoring.h"
#include "cvdetect/synth.h"
#include "cvdetect/wav-io.h"

namespace fs = std::filesystem;
using namespace cvdetect;

namespace {

struct SynthArgs {
  std::string out_dir;
  uint64_t seed = 0;
  SynthConfig config;
};

struct FeaturizeArgs {
  std::string manifest, audio_root, out;
  FeatureConfig config;
  int threads = 1;
};

struct TrainArgs {
  std::string manifest, features, audio_root, out, kind = "C";
  std::vector<double> speed_factors{0.9, 1.1};
  ExtractorConfig config;
  std::string pooling = "final";
  int threads = 1;
  bool no_speed_perturb = false;
  bool quiet = false;
};

struct EmbedArgs {
  std::string checkpoint, manifest, features, out;
  int threads = 1;
};

struct ScoreArgs {
  std::string manifest, c_table, cv_table, c_checkpoint, cv_checkpoint, out;
  double lambda_c = 1.0, lambda_cv = 0.1, w = 0.5;
  std::string mode = "pair";
};

struct EvalArgs {
  std::string pairs, out_text, out_json;
  std::vector<double> grid = DefaultGrid();
};

struct SweepArgs {
  std::string pairs, param = "w", out;
  std::vector<double> grid = DefaultGrid();
};

std::string DirOf(const std::string &path) {
  fs::path parent = fs::path(path).parent_path();
  return parent.empty() ? std::string(".") : parent.string();
}

void RunSynth(const SynthArgs &a) {
  a.config.Validate();
  SynthCorpus corpus = SynthesizeCorpus(a.config, a.seed);
  fs::create_directories(fs::path(a.out_dir) / "wav");
  for (const auto &[ref, wave] : corpus.audio)
    WriteWav(wave, (fs::path(a.out_dir) / ref).string());
  const std::string manifest_path = (fs::path(a.out_dir) / "manifest.txt").string();
  SaveManifest(corpus.manifest, manifest_path);
  int atypical = 0;
  for (const auto &r : corpus.manifest.records) atypical += r.group == Group::kTestAtypical;
  std::printf("synth: %zu recordings, %zu records (%d atypical) -> %s\n",
              corpus.audio.size(), corpus.manifest.records.size(), atypical,
              manifest_path.c_str());
}

void RunFeaturize(const FeaturizeArgs &a) {
  CorpusManifest manifest = LoadManifest(a.manifest);
  DirectoryAudioSource audio(a.audio_root.empty() ? DirOf(a.manifest) : a.audio_root);
  FeatureArchive archive;
  archive.config = a.config;
  archive.sample_rate = kRequiredSampleRate;
  archive.config.Validate(archive.sample_rate);
  archive.features = FeaturizeRecords(manifest, audio, a.config, a.threads);
  bool has_train = false;
  for (const auto &r : manifest.records) has_train |= r.group == Group::kTrainTd;
  if (has_train) archive.cmvn = FitTrainingCmvn(manifest, archive.features);
  SaveFeatureArchive(archive, a.out);
  std::printf("featurize: %zu segments, %d mel bands, cmvn %s -> %s\n",
              archive.features.size(), a.config.num_mels,
              archive.cmvn ? "fitted on train_td" : "absent", a.out.c_str());
}

void RunTrain(TrainArgs a) {
  CorpusManifest manifest = LoadManifest(a.manifest);
  FeatureArchive archive = LoadFeatureArchive(a.features);
  const SegmentKind kind = ParseKind(a.kind);
  if (a.pooling == "final") a.config.pooling = Pooling::kFinalStates;
  else if (a.pooling == "mean") a.config.pooling = Pooling::kMean;
  else throw ValidationError("unknown pooling '" + a.pooling + "' (expected final or mean)");

  if (a.no_speed_perturb) a.speed_factors.clear();
  DirectoryAudioSource audio(a.audio_root.empty() ? DirOf(a.manifest) : a.audio_root);

  TrainOptions options;
  options.threads = a.threads;
  if (!a.quiet)
    options.on_epoch = [](int epoch, double loss, double acc) {
      std::fprintf(stderr, "epoch %d: loss %.5f accuracy %.4f\n", epoch, loss, acc);
    };
  Checkpoint ckpt = TrainWithAugmentation(manifest, archive, kind, audio, a.speed_factors,
                                          a.config, options);
  SaveCheckpoint(ckpt, a.out);
  std::printf("train: %s extractor, %lld examples, %zu classes, loss %.5f -> %.5f, "
              "accuracy %.4f -> %s\n",
              KindName(kind).c_str(), static_cast<long long>(ckpt.log.num_examples),
              ckpt.inventory.size(), ckpt.log.initial_loss, ckpt.log.epoch_loss.back(),
              ckpt.log.final_accuracy, a.out.c_str());
}

void RunEmbed(const EmbedArgs &a) {
  Checkpoint ckpt = LoadCheckpoint(a.checkpoint);
  CorpusManifest manifest = LoadManifest(a.manifest);
  FeatureArchive archive = LoadFeatureArchive(a.features);
  CorpusManifest subset = manifest;
  subset.records.clear();
  for (const auto &r : manifest.records)
    if (r.kind == ckpt.kind) subset.records.push_back(r);
  EmbeddingTable table = EmbedCorpus(ckpt, subset, archive.features, a.threads);
  SaveEmbeddingTable(table, ckpt.kind, a.out);
  std::printf("embed: %zu %s segments, dim %d -> %s\n", table.size(),
              KindName(ckpt.kind).c_str(), ckpt.config.embedding_dim, a.out.c_str());
}

void RunScore(const ScoreArgs &a) {
  CorpusManifest manifest = LoadManifest(a.manifest);
  SegmentKind kind_c, kind_cv;
  EmbeddingTable table_c = LoadEmbeddingTable(a.c_table, &kind_c);
  EmbeddingTable table_cv = LoadEmbeddingTable(a.cv_table, &kind_cv);
  if (kind_c != SegmentKind::kC) throw ValidationError(a.c_table + ": not a C embedding table");
  if (kind_cv != SegmentKind::kCV)
    throw ValidationError(a.cv_table + ": not a CV embedding table");
  Checkpoint ckpt_c = LoadCheckpoint(a.c_checkpoint);
  Checkpoint ckpt_cv = LoadCheckpoint(a.cv_checkpoint);
  if (ckpt_c.kind != SegmentKind::kC) throw ValidationError(a.c_checkpoint + ": not a C checkpoint");
  if (ckpt_cv.kind != SegmentKind::kCV)
    throw ValidationError(a.cv_checkpoint + ": not a CV checkpoint");
  ScoringParams params;
  params.head_c = RelationHead::FromModel(ckpt_c.model);
  params.head_cv = RelationHead::FromModel(ckpt_cv.model);
  params.lambda_c = a.lambda_c;
  params.lambda_cv = a.lambda_cv;
  params.w = a.w;
  const PairMode mode = ParsePairMode(a.mode);
  EvalPairs result = BuildEvalPairs(manifest, table_c, table_cv, params, mode);
  for (const auto &id : result.skipped)
    std::fprintf(stderr, "warning: test token '%s' has no eligible reference; skipped\n",
                 id.c_str());
  ScoredPairsFile file{a.lambda_c, a.lambda_cv, a.w, mode, std::move(result.pairs)};
  SaveScoredPairs(file, a.out);
  size_t pos = 0;
  for (const auto &p : file.pairs) pos += p.positive;
  std::printf("score: %zu pairs (%zu positive, %zu negative), %zu tokens skipped -> %s\n",
              file.pairs.size(), pos, file.pairs.size() - pos, result.skipped.size(),
              a.out.c_str());
}

void RunEval(const EvalArgs &a) {
  ScoredPairsFile pairs = LoadScoredPairs(a.pairs);
  EvalReport report = Report(pairs, a.grid);
  const std::string text = FormatReportText(report);
  if (a.out_text.empty()) std::cout << text;
  else WriteFileAtomic(a.out_text, text);
  if (!a.out_json.empty()) WriteFileAtomic(a.out_json, FormatReportJson(report));
  auto cell = [](const std::optional<double> &v) { return v ? *v : -1.0; };
  std::printf("eval: %zu pairs, EER C %.4f CV %.4f C+CV %.4f, AUC C+CV %.4f\n",
              pairs.pairs.size(), cell(report.overall.c.eer), cell(report.overall.cv.eer),
              cell(report.overall.fused.eer), cell(report.overall.fused.auc));
}

void RunSweep(const SweepArgs &a) {
  ScoredPairsFile pairs = LoadScoredPairs(a.pairs);
  if (pairs.pairs.empty()) throw ValidationError(a.pairs + ": no scored pairs");
  Sweep sweep = SweepWeight(pairs.pairs, a.param, a.grid);
  if (!sweep.best_weight)
    throw ValidationError(a.pairs + ": pairs need both positive and negative labels");
  const std::string text = FormatSweepText(sweep);
  if (a.out.empty()) std::cout << text;
  else WriteFileAtomic(a.out, text);
  double best_eer = 0.0;
  for (const auto &r : sweep.rows)
    if (r.best) best_eer = *r.metrics.eer;
  std::printf("sweep: %s over %zu weights, best %s = %s (EER %.4f)\n", a.param.c_str(),
              sweep.rows.size(), a.param.c_str(), FormatDouble(*sweep.best_weight).c_str(),
              best_eer);
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Consonant error detection with C and CV segment embeddings"};
  app.set_config("--config", "", "Key-value config file; command-line flags take precedence");
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  int threads = 1;
  uint64_t seed = 0;

  SynthArgs synth;
  auto *cmd_synth = app.add_subcommand("synth", "Generate a synthetic C/CV corpus");
  cmd_synth->add_option("--out", synth.out_dir, "Output directory")->required();
  cmd_synth->add_option("--seed", seed, "Random seed");
  cmd_synth->add_option("--consonants", synth.config.consonants, "Consonant classes")
      ->delimiter(',');
  cmd_synth->add_option("--vowels", synth.config.vowels, "Vowels")->delimiter(',');
  cmd_synth->add_option("--tokens-per-class", synth.config.tokens_per_class,
                        "Tokens per consonant-vowel pair");
  cmd_synth->add_option("--speakers", synth.config.num_speakers, "Number of speakers");
  cmd_synth->add_option("--test-speakers", synth.config.num_test_speakers,
                        "Speakers held out for testing");
  cmd_synth->add_option("--atypical-rate", synth.config.atypical_rate,
                        "Substitution probability for test tokens");
  cmd_synth->add_option("--noise-level", synth.config.noise_level, "Background noise level");
  cmd_synth->add_option("--consonant-corruption", synth.config.consonant_corruption,
                        "Fraction of tokens whose consonant cue is replaced by noise");

  FeaturizeArgs feat;
  auto *cmd_feat = app.add_subcommand("featurize", "Compute log-mel features and CMVN stats");
  cmd_feat->add_option("--manifest", feat.manifest, "Corpus manifest")->required();
  cmd_feat->add_option("--audio-root", feat.audio_root,
                       "Directory audio references resolve against (default: manifest dir)");
  cmd_feat->add_option("--out", feat.out, "Output feature archive")->required();
  cmd_feat->add_option("--frame-length-ms", feat.config.frame_length_ms, "Frame length");
  cmd_feat->add_option("--frame-shift-ms", feat.config.frame_shift_ms, "Frame shift");
  cmd_feat->add_option("--num-mels", feat.config.num_mels, "Mel bands");
  cmd_feat->add_option("--fft-size", feat.config.fft_size, "FFT size");
  cmd_feat->add_option("--preemphasis", feat.config.preemphasis, "Pre-emphasis coefficient");
  cmd_feat->add_option("--low-freq", feat.config.low_freq, "Lowest mel filter edge (Hz)");
  cmd_feat->add_option("--high-freq", feat.config.high_freq, "Highest mel filter edge (Hz)");
  cmd_feat->add_option("--log-floor", feat.config.log_floor, "Energy floor applied before the log");
  cmd_feat->add_option("--threads", threads, "Worker threads");

  TrainArgs train;
  auto *cmd_train = app.add_subcommand("train", "Train a C or CV embedding extractor");
  cmd_train->add_option("--manifest", train.manifest, "Corpus manifest")->required();
  cmd_train->add_option("--features", train.features, "Feature archive")->required();
  cmd_train->add_option("--audio-root", train.audio_root,
                        "Audio directory for speed perturbation (default: manifest dir)");
  cmd_train->add_option("--kind", train.kind, "Segment kind")->check(CLI::IsMember({"C", "CV"}));
  cmd_train->add_option("--out", train.out, "Output checkpoint")->required();
  cmd_train->add_option("--speed-factors", train.speed_factors,
                        "Speed perturbation factors")
      ->delimiter(',');
  cmd_train->add_flag("--no-speed-perturb", train.no_speed_perturb,
                      "Train on the original recordings only");
  cmd_train->add_option("--layers", train.config.num_layers, "Bi-GRU layers");
  cmd_train->add_option("--hidden", train.config.hidden_units, "Hidden units per direction");
  cmd_train->add_option("--embedding-dim", train.config.embedding_dim, "Embedding size");
  cmd_train->add_option("--dropout", train.config.dropout, "Dropout rate");
  cmd_train->add_option("--learning-rate", train.config.learning_rate, "Adam learning rate");
  cmd_train->add_option("--weight-decay", train.config.weight_decay, "Weight decay");
  cmd_train->add_option("--batch-size", train.config.batch_size, "Mini-batch size");
  cmd_train->add_option("--epochs", train.config.epochs, "Training epochs");
  cmd_train->add_option("--pairs-per-sample", train.config.pairs_per_sample,
                        "Relation-task partners per sample");
  cmd_train->add_option("--task-weight", train.config.task_weight,
                        "Weight of the classification loss");
  cmd_train->add_option("--pooling", train.pooling, "Embedding pooling: final or mean");
  cmd_train->add_option("--seed", seed, "Random seed");
  cmd_train->add_option("--threads", threads, "Worker threads (1 = reproducible)");
  cmd_train->add_flag("--quiet", train.quiet, "Suppress per-epoch progress");

  EmbedArgs embed;
  auto *cmd_embed = app.add_subcommand("embed", "Embed every segment of the checkpoint's kind");
  cmd_embed->add_option("--checkpoint", embed.checkpoint, "Extractor checkpoint")->required();
  cmd_embed->add_option("--manifest", embed.manifest, "Corpus manifest")->required();
  cmd_embed->add_option("--features", embed.features, "Feature archive")->required();
  cmd_embed->add_option("--out", embed.out, "Output embedding table")->required();
  cmd_embed->add_option("--threads", threads, "Worker threads");

  ScoreArgs score;
  auto *cmd_score = app.add_subcommand("score", "Score test tokens against TD references");
  cmd_score->add_option("--manifest", score.manifest, "Corpus manifest")->required();
  cmd_score->add_option("--c-table", score.c_table, "C embedding table")->required();
  cmd_score->add_option("--cv-table", score.cv_table, "CV embedding table")->required();
  cmd_score->add_option("--c-checkpoint", score.c_checkpoint, "C extractor checkpoint")->required();
  cmd_score->add_option("--cv-checkpoint", score.cv_checkpoint, "CV extractor checkpoint")->required();
  cmd_score->add_option("--lambda-c", score.lambda_c, "Cosine weight for C scores");
  cmd_score->add_option("--lambda-cv", score.lambda_cv, "Cosine weight for CV scores");
  cmd_score->add_option("--w", score.w, "Fusion weight of the C score");
  cmd_score->add_option("--mode", score.mode, "pair, mean or max over references");
  cmd_score->add_option("--out", score.out, "Output scored-pairs file")->required();

  EvalArgs eval;
  auto *cmd_eval = app.add_subcommand("eval", "EER/AUC report with per-consonant rows and sweeps");
  cmd_eval->add_option("--pairs", eval.pairs, "Scored-pairs file")->required();
  cmd_eval->add_option("--grid", eval.grid, "Sweep weights")->delimiter(',');
  cmd_eval->add_option("--out-text", eval.out_text, "Text report (default: stdout)");
  cmd_eval->add_option("--out-json", eval.out_json, "JSON report");

  SweepArgs sweep;
  auto *cmd_sweep = app.add_subcommand("sweep", "EER/AUC as one weight shifts from 0 to 1");
  cmd_sweep->add_option("--pairs", sweep.pairs, "Scored-pairs file")->required();
  cmd_sweep->add_option("--param", sweep.param, "w, lambda_c or lambda_cv")
      ->check(CLI::IsMember({"w", "lambda_c", "lambda_cv"}));
  cmd_sweep->add_option("--grid", sweep.grid, "Sweep weights")->delimiter(',');
  cmd_sweep->add_option("--out", sweep.out, "Output table (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return 1;
  }

  try {
    if (threads < 1) throw ValidationError("--threads must be at least 1");
    if (*cmd_synth) {
      synth.seed = seed;
      RunSynth(synth);
    } else if (*cmd_feat) {
      feat.threads = threads;
      RunFeaturize(feat);
    } else if (*cmd_train) {
      train.threads = threads;
      train.config.seed = seed;
      RunTrain(train);
    } else if (*cmd_embed) {
      embed.threads = threads;
      RunEmbed(embed);
    } else if (*cmd_score) {
      RunScore(score);
    } else if (*cmd_eval) {
      RunEval(eval);
    } else if (*cmd_sweep) {
      RunSweep(sweep);
    }
  } catch (const ValidationError &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const RuntimeError &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
