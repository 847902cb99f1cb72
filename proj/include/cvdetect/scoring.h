// cvdetect/scoring.h

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

#ifndef CVDETECT_SCORING_H_
#define CVDETECT_SCORING_H_

#include <span>
#include <string>
#include <vector>

#include "cvdetect/corpus.h"
#include "cvdetect/extractor.h"

namespace cvdetect {

/// dot(x, y) / (|x| |y|), clamped to [-1, 1]. Throws on a zero-norm input
/// or a dimension mismatch.
double CosineScore(std::span<const double> x, std::span<const double> y);

/// Learned relation head: one weight per embedding dimension plus a bias.
struct RelationHead {
  std::vector<double> w;
  double b = 0.0;

  static RelationHead FromModel(const ExtractorModel &model);
  bool operator==(const RelationHead &) const = default;
};

/// sigmoid(w . ((x - y) * (x - y)) + b).
double BinaryRelationScore(std::span<const double> x, std::span<const double> y,
                           const RelationHead &head);

/// lambda * cos + (1 - lambda) * bin; lambda must lie in [0, 1].
double Combine(double score_cos, double score_binary, double lambda);

/// w * score_c + (1 - w) * score_cv; w must lie in [0, 1].
double Fuse(double score_c, double score_cv, double w);

enum class Aggregation { kMean, kMax };

/// Combined score of `test` against each reference, then aggregated.
double ScoreVsReferences(std::span<const double> test,
                         std::span<const Embedding> references,
                         const RelationHead &head, double lambda,
                         Aggregation aggregation = Aggregation::kMean);

/// How test tokens meet their references.
enum class PairMode {
  kPerPair,  // one scored pair per (test token, reference token)
  kMean,     // one line per test token, mean over references
  kMax,      // one line per test token, best-scoring reference
};

std::string PairModeName(PairMode mode);
PairMode ParsePairMode(const std::string &name);

struct ScoringParams {
  RelationHead head_c;
  RelationHead head_cv;
  double lambda_c = 1.0;
  double lambda_cv = 0.1;
  double w = 0.5;

  void Validate() const;
};

/**
   One test token scored against one reference token (or against its
   whole reference set in an aggregate mode). A token is the C record and
   the CV record cut from the same utterance; both scores are carried so
   that the lambda and w sweeps can be recomputed from the file alone.
   For kMax the components are those of the best reference.
 */
struct ScoredPair {
  std::string test_id;     // C record id
  std::string test_cv_id;  // CV record id
  std::string reference;   // reference C record id, or "mean:N" / "max:N"
  std::string consonant;   // expected consonant
  std::string vowel;
  Group group = Group::kTestTd;
  double cos_c = 0.0, bin_c = 0.0, score_c = 0.0;
  double cos_cv = 0.0, bin_cv = 0.0, score_cv = 0.0;
  double fused = 0.0;
  bool positive = false;

  bool operator==(const ScoredPair &) const = default;
};

struct EvalPairs {
  std::vector<ScoredPair> pairs;
  std::vector<std::string> skipped;  // test tokens with no eligible reference
};

/**
   Pairs every TEST token (TD and atypical) with the TEST_TD tokens whose
   consonant equals the test token's expected consonant and whose vowel
   matches, excluding the token itself and tokens of the same speaker.
   The label is positive iff the produced consonant equals the expected
   one. `table_c` must embed the C records and `table_cv` the CV records.
 */
EvalPairs BuildEvalPairs(const CorpusManifest &manifest, const EmbeddingTable &table_c,
                         const EmbeddingTable &table_cv, const ScoringParams &params,
                         PairMode mode = PairMode::kPerPair);

/// Scored-pairs text file: a "# cvdetect scored pairs v1" line, a
/// "# params ..." line, a column header comment, then one whitespace
/// separated record per line.
struct ScoredPairsFile {
  double lambda_c = 1.0;
  double lambda_cv = 0.1;
  double w = 0.5;
  PairMode mode = PairMode::kPerPair;
  std::vector<ScoredPair> pairs;

  bool operator==(const ScoredPairsFile &) const = default;
};

std::string FormatScoredPairs(const ScoredPairsFile &file);
ScoredPairsFile ParseScoredPairs(std::string_view text, const std::string &source_name);
void SaveScoredPairs(const ScoredPairsFile &file, const std::string &path);
ScoredPairsFile LoadScoredPairs(const std::string &path);

}  // namespace cvdetect

#endif  // CVDETECT_SCORING_H_
