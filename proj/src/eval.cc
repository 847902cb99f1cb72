// src/eval.cc

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

#include "cvdetect/eval.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"

#include "cvdetect/error.h"
#include "cvdetect/io-util.h"

namespace cvdetect {

RocCurve Roc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw ValidationError("roc: scores and labels differ in length");
  int64_t num_pos = 0, num_neg = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw ValidationError("roc: non-finite score");
    (labels[i] ? num_pos : num_neg)++;
  }
  if (num_pos == 0 || num_neg == 0)
    throw ValidationError("roc: need both positive and negative examples (got " +
                          std::to_string(num_pos) + " positive, " + std::to_string(num_neg) +
                          " negative)");
  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return scores[a] > scores[b]; });
  RocCurve curve;
  curve.points.push_back({INFINITY, 0.0, 0.0, 1.0});
  int64_t tp = 0, fp = 0;
  for (size_t i = 0; i < order.size();) {
    const double t = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == t; ++i) (labels[order[i]] ? tp : fp)++;
    const double tpr = static_cast<double>(tp) / num_pos;
    curve.points.push_back({t, static_cast<double>(fp) / num_neg, tpr,
                            static_cast<double>(num_pos - tp) / num_pos});
  }
  return curve;
}

double Auc(const RocCurve &curve) {
  double area = 0.0;
  for (size_t k = 1; k < curve.points.size(); ++k) {
    const RocPoint &a = curve.points[k - 1], &b = curve.points[k];
    area += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
  }
  return area;
}

double Eer(const RocCurve &curve) {
  if (curve.points.empty()) throw ValidationError("eer: empty curve");
  double prev_d = curve.points[0].fpr - curve.points[0].fnr;
  if (prev_d >= 0.0) return curve.points[0].fpr;
  for (size_t k = 1; k < curve.points.size(); ++k) {
    const RocPoint &a = curve.points[k - 1], &b = curve.points[k];
    const double d = b.fpr - b.fnr;
    if (d >= 0.0) {
      if (d == 0.0) return b.fpr;
      const double alpha = -prev_d / (d - prev_d);
      return a.fpr + alpha * (b.fpr - a.fpr);
    }
    prev_d = d;
  }
  return curve.points.back().fpr;
}

double Eer(std::span<const double> scores, std::span<const int> labels) {
  return Eer(Roc(scores, labels));
}

Metrics ComputeMetrics(std::span<const double> scores, std::span<const int> labels) {
  bool pos = false, neg = false;
  for (int l : labels) (l ? pos : neg) = true;
  Metrics m;
  if (!pos || !neg) return m;
  RocCurve curve = Roc(scores, labels);
  m.eer = Eer(curve);
  m.auc = Auc(curve);
  return m;
}

std::vector<double> DefaultGrid() {
  std::vector<double> grid;
  for (int i = 0; i <= 10; ++i) grid.push_back(i / 10.0);
  return grid;
}

namespace {

void CheckGrid(std::span<const double> grid) {
  if (grid.empty()) throw ValidationError("weight grid is empty");
  for (double g : grid)
    if (!(g >= 0.0 && g <= 1.0))
      throw ValidationError("grid weight " + FormatDouble(g) + " outside [0, 1]");
}

std::vector<int> Labels(std::span<const ScoredPair> pairs) {
  std::vector<int> labels;
  for (const auto &p : pairs) labels.push_back(p.positive ? 1 : 0);
  return labels;
}

ConsonantRow MakeRow(const std::string &name, std::span<const ScoredPair> pairs) {
  ConsonantRow row;
  row.consonant = name;
  std::set<std::string> td, atyp;
  std::vector<double> c, cv, fused;
  for (const auto &p : pairs) {
    (p.group == Group::kTestAtypical ? atyp : td).insert(p.test_id);
    (p.positive ? row.positives : row.negatives)++;
    c.push_back(p.score_c);
    cv.push_back(p.score_cv);
    fused.push_back(p.fused);
  }
  row.td_tokens = static_cast<int>(td.size());
  row.atypical_tokens = static_cast<int>(atyp.size());
  std::vector<int> labels = Labels(pairs);
  row.c = ComputeMetrics(c, labels);
  row.cv = ComputeMetrics(cv, labels);
  row.fused = ComputeMetrics(fused, labels);
  return row;
}

}  // namespace

Sweep SweepWeight(std::span<const ScoredPair> pairs, const std::string &name,
                  std::span<const double> grid) {
  CheckGrid(grid);
  if (name != "lambda_c" && name != "lambda_cv" && name != "w")
    throw ValidationError("unknown sweep '" + name + "'");
  std::vector<int> labels = Labels(pairs);
  Sweep sweep;
  sweep.name = name;
  std::vector<double> scores(pairs.size());
  for (double g : grid) {
    for (size_t i = 0; i < pairs.size(); ++i) {
      const ScoredPair &p = pairs[i];
      if (name == "lambda_c") scores[i] = g * p.cos_c + (1.0 - g) * p.bin_c;
      else if (name == "lambda_cv") scores[i] = g * p.cos_cv + (1.0 - g) * p.bin_cv;
      else scores[i] = g * p.score_c + (1.0 - g) * p.score_cv;
    }
    sweep.rows.push_back({g, ComputeMetrics(scores, labels), false});
  }
  SweepRow *best = nullptr;
  for (auto &row : sweep.rows)
    if (row.metrics.eer && (!best || *row.metrics.eer < *best->metrics.eer)) best = &row;
  if (best) {
    best->best = true;
    sweep.best_weight = best->weight;
  }
  return sweep;
}

EvalReport Report(const ScoredPairsFile &file, std::span<const double> grid) {
  CheckGrid(grid);
  const std::vector<ScoredPair> &pairs = file.pairs;
  if (pairs.empty()) throw ValidationError("no scored pairs to evaluate");
  EvalReport report;
  report.lambda_c = file.lambda_c;
  report.lambda_cv = file.lambda_cv;
  report.w = file.w;
  report.overall = MakeRow("all", pairs);
  if (report.overall.positives == 0 || report.overall.negatives == 0)
    throw ValidationError("scored pairs need both positive and negative labels (got " +
                          std::to_string(report.overall.positives) + " positive, " +
                          std::to_string(report.overall.negatives) + " negative)");
  std::map<std::string, std::vector<ScoredPair>> by_consonant;
  for (const auto &p : pairs) by_consonant[p.consonant].push_back(p);
  for (const auto &[c, subset] : by_consonant) report.consonants.push_back(MakeRow(c, subset));
  report.lambda_c_sweep = SweepWeight(pairs, "lambda_c", grid);
  report.lambda_cv_sweep = SweepWeight(pairs, "lambda_cv", grid);
  report.w_sweep = SweepWeight(pairs, "w", grid);
  return report;
}

namespace {

std::string Cell(const std::optional<double> &v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", *v);
  return buf;
}

std::string Pad(const std::string &s, size_t width) {
  return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

void AppendRow(std::ostringstream &out, const ConsonantRow &r) {
  out << Pad(r.consonant, 9) << Pad(std::to_string(r.td_tokens), 6)
      << Pad(std::to_string(r.atypical_tokens), 10);
  for (const Metrics *m : {&r.c, &r.cv, &r.fused}) out << Pad(Cell(m->eer), 10);
  for (const Metrics *m : {&r.c, &r.cv, &r.fused}) out << Pad(Cell(m->auc), 10);
  out << "\n";
}

nlohmann::json MetricsJson(const Metrics &m) {
  nlohmann::json j;
  j["eer"] = m.eer ? nlohmann::json(*m.eer) : nlohmann::json(nullptr);
  j["auc"] = m.auc ? nlohmann::json(*m.auc) : nlohmann::json(nullptr);
  return j;
}

nlohmann::json RowJson(const ConsonantRow &r) {
  return {{"consonant", r.consonant},   {"td_tokens", r.td_tokens},
          {"atypical_tokens", r.atypical_tokens}, {"positive_pairs", r.positives},
          {"negative_pairs", r.negatives}, {"C", MetricsJson(r.c)},
          {"CV", MetricsJson(r.cv)},     {"C+CV", MetricsJson(r.fused)}};
}

nlohmann::json SweepJson(const Sweep &s) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto &r : s.rows) {
    nlohmann::json j = MetricsJson(r.metrics);
    j["weight"] = r.weight;
    j["best"] = r.best;
    rows.push_back(j);
  }
  return {{"name", s.name},
          {"best_weight", s.best_weight ? nlohmann::json(*s.best_weight) : nlohmann::json(nullptr)},
          {"rows", rows}};
}

}  // namespace

std::string FormatSweepText(const Sweep &s) {
  std::ostringstream out;
  out << Pad(s.name, 9) << Pad("EER", 10) << Pad("AUC", 10) << "\n";
  for (const auto &r : s.rows) {
    char w[16];
    std::snprintf(w, sizeof(w), "%.2f", r.weight);
    out << Pad(w, 9) << Pad(Cell(r.metrics.eer), 10) << Pad(Cell(r.metrics.auc), 10)
        << (r.best ? "  *" : "") << "\n";
  }
  return out.str();
}

std::string FormatReportText(const EvalReport &report) {
  std::ostringstream out;
  out << "# lambda_c=" << FormatDouble(report.lambda_c)
      << " lambda_cv=" << FormatDouble(report.lambda_cv) << " w=" << FormatDouble(report.w)
      << "\n";
  out << Pad("", 25) << Pad("EER", 30) << Pad("AUC", 30) << "\n";
  out << Pad("Consonant", 9) << Pad("TD", 6) << Pad("Atypical", 10);
  for (int k = 0; k < 2; ++k) out << Pad("C", 10) << Pad("CV", 10) << Pad("C+CV", 10);
  out << "\n";
  for (const auto &r : report.consonants) AppendRow(out, r);
  AppendRow(out, report.overall);
  for (const Sweep *s : {&report.lambda_c_sweep, &report.lambda_cv_sweep, &report.w_sweep})
    out << "\n" << FormatSweepText(*s);
  return out.str();
}

std::string FormatReportJson(const EvalReport &report) {
  nlohmann::json j;
  j["params"] = {{"lambda_c", report.lambda_c}, {"lambda_cv", report.lambda_cv},
                 {"w", report.w}};
  j["overall"] = RowJson(report.overall);
  nlohmann::json rows = nlohmann::json::array();
  for (const auto &r : report.consonants) rows.push_back(RowJson(r));
  j["consonants"] = rows;
  j["sweeps"] = {SweepJson(report.lambda_c_sweep), SweepJson(report.lambda_cv_sweep),
                 SweepJson(report.w_sweep)};
  return j.dump(2) + "\n";
}

}  // namespace cvdetect
