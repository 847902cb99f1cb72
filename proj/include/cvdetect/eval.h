// cvdetect/eval.h

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

#ifndef CVDETECT_EVAL_H_
#define CVDETECT_EVAL_H_

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cvdetect/scoring.h"

namespace cvdetect {

/// Operating point for the rule "positive iff score >= threshold".
struct RocPoint {
  double threshold = 0.0;  // +inf for the (0, 0) point
  double fpr = 0.0;
  double tpr = 0.0;
  double fnr = 1.0;
};

/// Points ordered by decreasing threshold, from (0, 0) to (1, 1). Tied
/// scores form a single step.
struct RocCurve {
  std::vector<RocPoint> points;
};

/// `labels[i]` is nonzero for a positive. Throws ValidationError unless
/// both classes are present.
RocCurve Roc(std::span<const double> scores, std::span<const int> labels);

/// Trapezoidal area under TPR vs FPR.
double Auc(const RocCurve &curve);

/// Rate where FPR = FNR: the first operating point with FPR - FNR >= 0,
/// linearly interpolated with the point before it.
double Eer(const RocCurve &curve);
double Eer(std::span<const double> scores, std::span<const int> labels);

/// EER and AUC of one score type; absent when a subset lacks a label.
struct Metrics {
  std::optional<double> eer;
  std::optional<double> auc;
};

Metrics ComputeMetrics(std::span<const double> scores, std::span<const int> labels);

struct ConsonantRow {
  std::string consonant;  // "all" for the overall row
  int td_tokens = 0;
  int atypical_tokens = 0;
  int positives = 0;  // pairs
  int negatives = 0;
  Metrics c, cv, fused;
};

struct SweepRow {
  double weight = 0.0;
  Metrics metrics;
  bool best = false;  // first weight attaining the lowest EER
};

struct Sweep {
  std::string name;  // "lambda_c", "lambda_cv" or "w"
  std::vector<SweepRow> rows;
  std::optional<double> best_weight;
};

struct EvalReport {
  double lambda_c = 1.0, lambda_cv = 0.1, w = 0.5;
  ConsonantRow overall;
  std::vector<ConsonantRow> consonants;  // sorted by consonant
  Sweep lambda_c_sweep, lambda_cv_sweep, w_sweep;
};

/// 0.0, 0.1, ..., 1.0.
std::vector<double> DefaultGrid();

/// Sweep of one weight over `grid`, recomputed from the per-pair score
/// components: lambda_c and lambda_cv re-combine the C or CV scores,
/// w re-fuses the stored C and CV scores.
Sweep SweepWeight(std::span<const ScoredPair> pairs, const std::string &name,
                  std::span<const double> grid);

/// Overall and per-consonant metrics plus the three weight sweeps.
/// Throws ValidationError if the pairs lack positives or negatives.
EvalReport Report(const ScoredPairsFile &pairs, std::span<const double> grid);

/// Aligned text tables: per-consonant rows then the sweeps.
std::string FormatReportText(const EvalReport &report);
std::string FormatSweepText(const Sweep &sweep);
/// Machine-readable report.
std::string FormatReportJson(const EvalReport &report);

}  // namespace cvdetect

#endif  // CVDETECT_EVAL_H_
