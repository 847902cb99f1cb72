// src/scoring.cc

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

#include "cvdetect/scoring.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "cvdetect/error.h"
#include "cvdetect/io-util.h"

namespace cvdetect {

double CosineScore(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    throw ValidationError("cosine score: dimension mismatch (" + std::to_string(x.size()) +
                          " vs " + std::to_string(y.size()) + ")");
  double dot = 0.0, nx = 0.0, ny = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    dot += x[i] * y[i];
    nx += x[i] * x[i];
    ny += y[i] * y[i];
  }
  if (!(nx > 0.0) || !(ny > 0.0)) throw ValidationError("cosine score: zero-norm embedding");
  return std::clamp(dot / (std::sqrt(nx) * std::sqrt(ny)), -1.0, 1.0);
}

RelationHead RelationHead::FromModel(const ExtractorModel &model) {
  const Dense &d = model.relation_head;
  if (d.output_dim() != 1) throw ValidationError("relation head must have one output");
  RelationHead head;
  head.w.assign(d.w.value.values().begin(), d.w.value.values().end());
  head.b = d.b.value(0, 0);
  return head;
}

double BinaryRelationScore(std::span<const double> x, std::span<const double> y,
                           const RelationHead &head) {
  if (x.size() != y.size() || x.size() != head.w.size())
    throw ValidationError("binary relation score: dimension mismatch");
  double a = head.b;
  for (size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    a += head.w[i] * (d * d);
  }
  return Sigmoid(a);
}

namespace {

void CheckWeight(double v, const char *name) {
  if (!(v >= 0.0 && v <= 1.0))
    throw ValidationError(std::string(name) + " must lie in [0, 1], got " + FormatDouble(v));
}

}  // namespace

double Combine(double score_cos, double score_binary, double lambda) {
  CheckWeight(lambda, "lambda");
  return lambda * score_cos + (1.0 - lambda) * score_binary;
}

double Fuse(double score_c, double score_cv, double w) {
  CheckWeight(w, "fusion weight w");
  return w * score_c + (1.0 - w) * score_cv;
}

double ScoreVsReferences(std::span<const double> test, std::span<const Embedding> refs,
                         const RelationHead &head, double lambda, Aggregation aggregation) {
  if (refs.empty()) throw ValidationError("empty reference set");
  CheckWeight(lambda, "lambda");
  std::vector<double> scores;
  scores.reserve(refs.size());
  for (const Embedding &r : refs)
    scores.push_back(Combine(CosineScore(test, r), BinaryRelationScore(test, r, head), lambda));
  // Summing in sorted order makes the mean independent of reference order.
  std::sort(scores.begin(), scores.end());
  if (aggregation == Aggregation::kMax) return scores.back();
  double sum = 0.0;
  for (double s : scores) sum += s;
  return sum / scores.size();
}

std::string PairModeName(PairMode mode) {
  switch (mode) {
    case PairMode::kPerPair: return "pair";
    case PairMode::kMean: return "mean";
    case PairMode::kMax: return "max";
  }
  return "pair";
}

PairMode ParsePairMode(const std::string &name) {
  if (name == "pair") return PairMode::kPerPair;
  if (name == "mean") return PairMode::kMean;
  if (name == "max") return PairMode::kMax;
  throw ValidationError("unknown pair mode '" + name + "' (expected pair, mean or max)");
}

void ScoringParams::Validate() const {
  CheckWeight(lambda_c, "lambda_c");
  CheckWeight(lambda_cv, "lambda_cv");
  CheckWeight(w, "w");
  if (head_c.w.empty() || head_cv.w.empty()) throw ValidationError("relation head is empty");
}

namespace {

struct Token {
  const SegmentRecord *c = nullptr;
  const SegmentRecord *cv = nullptr;
  const Embedding *emb_c = nullptr;
  const Embedding *emb_cv = nullptr;
};

const Embedding &Lookup(const EmbeddingTable &table, const SegmentRecord &r,
                        size_t head_dim) {
  auto it = table.find(r.id);
  if (it == table.end())
    throw ValidationError("no " + KindName(r.kind) + " embedding for test record '" + r.id + "'");
  if (it->second.size() != head_dim)
    throw ValidationError("embedding of '" + r.id + "' does not match the relation head dim");
  return it->second;
}

/// Links each test C record with the CV record cut from the same
/// utterance: same recording and speaker, C interval inside CV interval.
std::vector<Token> LinkTestTokens(const CorpusManifest &manifest) {
  std::multimap<std::string, const SegmentRecord *> cv_by_audio;
  for (const auto &r : manifest.records)
    if (r.IsTest() && r.kind == SegmentKind::kCV) cv_by_audio.emplace(r.audio_ref, &r);
  std::vector<Token> tokens;
  std::map<const SegmentRecord *, const SegmentRecord *> used;
  for (const auto &r : manifest.records) {
    if (!r.IsTest() || r.kind != SegmentKind::kC) continue;
    const SegmentRecord *match = nullptr;
    auto [lo, hi] = cv_by_audio.equal_range(r.audio_ref);
    for (auto it = lo; it != hi; ++it) {
      const SegmentRecord *cv = it->second;
      if (cv->speaker_id == r.speaker_id && cv->group == r.group &&
          cv->consonant == r.consonant && cv->expected_consonant == r.expected_consonant &&
          cv->start <= r.start && r.end <= cv->end && !used.count(cv)) {
        match = cv;
        break;
      }
    }
    if (!match)
      throw ValidationError("test record '" + r.id + "' has no matching CV record");
    used[match] = &r;
    tokens.push_back({&r, match, nullptr, nullptr});
  }
  for (const auto &[audio, cv] : cv_by_audio)
    if (!used.count(cv))
      throw ValidationError("test record '" + cv->id + "' has no matching C record");
  return tokens;
}

}  // namespace

EvalPairs BuildEvalPairs(const CorpusManifest &manifest, const EmbeddingTable &table_c,
                         const EmbeddingTable &table_cv, const ScoringParams &params,
                         PairMode mode) {
  params.Validate();
  std::vector<Token> tokens = LinkTestTokens(manifest);
  for (Token &t : tokens) {
    t.emb_c = &Lookup(table_c, *t.c, params.head_c.w.size());
    t.emb_cv = &Lookup(table_cv, *t.cv, params.head_cv.w.size());
  }

  EvalPairs out;
  for (const Token &t : tokens) {
    const std::string &expected = t.c->expected_consonant;
    const std::string &vowel = *t.cv->vowel;
    std::vector<const Token *> refs;
    for (const Token &r : tokens)
      if (&r != &t && r.c->group == Group::kTestTd && r.c->consonant == expected &&
          *r.cv->vowel == vowel && r.c->speaker_id != t.c->speaker_id)
        refs.push_back(&r);
    if (refs.empty()) {
      out.skipped.push_back(t.c->id);
      continue;
    }

    ScoredPair base;
    base.test_id = t.c->id;
    base.test_cv_id = t.cv->id;
    base.consonant = expected;
    base.vowel = vowel;
    base.group = t.c->group;
    base.positive = t.c->consonant == expected;

    std::vector<ScoredPair> scored;
    for (const Token *r : refs) {
      ScoredPair p = base;
      p.reference = r->c->id;
      p.cos_c = CosineScore(*t.emb_c, *r->emb_c);
      p.bin_c = BinaryRelationScore(*t.emb_c, *r->emb_c, params.head_c);
      p.score_c = Combine(p.cos_c, p.bin_c, params.lambda_c);
      p.cos_cv = CosineScore(*t.emb_cv, *r->emb_cv);
      p.bin_cv = BinaryRelationScore(*t.emb_cv, *r->emb_cv, params.head_cv);
      p.score_cv = Combine(p.cos_cv, p.bin_cv, params.lambda_cv);
      p.fused = Fuse(p.score_c, p.score_cv, params.w);
      scored.push_back(std::move(p));
    }

    if (mode == PairMode::kPerPair) {
      for (auto &p : scored) out.pairs.push_back(std::move(p));
    } else if (mode == PairMode::kMean) {
      ScoredPair p = base;
      p.reference = "mean:" + std::to_string(scored.size());
      for (const auto &s : scored) {
        p.cos_c += s.cos_c;
        p.bin_c += s.bin_c;
        p.cos_cv += s.cos_cv;
        p.bin_cv += s.bin_cv;
      }
      const double n = static_cast<double>(scored.size());
      p.cos_c /= n;
      p.bin_c /= n;
      p.cos_cv /= n;
      p.bin_cv /= n;
      p.score_c = Combine(p.cos_c, p.bin_c, params.lambda_c);
      p.score_cv = Combine(p.cos_cv, p.bin_cv, params.lambda_cv);
      p.fused = Fuse(p.score_c, p.score_cv, params.w);
      out.pairs.push_back(std::move(p));
    } else {
      // Best reference by fused score; its components are kept.
      auto best = std::max_element(scored.begin(), scored.end(),
                                   [](const ScoredPair &a, const ScoredPair &b) {
                                     return a.fused < b.fused;
                                   });
      ScoredPair p = *best;
      p.reference = "max:" + std::to_string(scored.size());
      out.pairs.push_back(std::move(p));
    }
  }
  return out;
}

namespace {

constexpr char kPairsHeader[] = "# cvdetect scored pairs v1";
constexpr char kColumns[] =
    "# test test_cv reference consonant vowel group cos_c bin_c score_c "
    "cos_cv bin_cv score_cv fused label";
constexpr size_t kNumColumns = 14;

}  // namespace

std::string FormatScoredPairs(const ScoredPairsFile &file) {
  std::ostringstream out;
  out << kPairsHeader << "\n";
  out << "# params lambda_c=" << FormatDouble(file.lambda_c)
      << " lambda_cv=" << FormatDouble(file.lambda_cv) << " w=" << FormatDouble(file.w)
      << " mode=" << PairModeName(file.mode) << "\n";
  out << kColumns << "\n";
  for (const ScoredPair &p : file.pairs) {
    out << p.test_id << ' ' << p.test_cv_id << ' ' << p.reference << ' ' << p.consonant
        << ' ' << p.vowel << ' ' << GroupName(p.group) << ' ' << FormatDouble(p.cos_c) << ' '
        << FormatDouble(p.bin_c) << ' ' << FormatDouble(p.score_c) << ' '
        << FormatDouble(p.cos_cv) << ' ' << FormatDouble(p.bin_cv) << ' '
        << FormatDouble(p.score_cv) << ' ' << FormatDouble(p.fused) << ' '
        << (p.positive ? "pos" : "neg") << "\n";
  }
  return out.str();
}

ScoredPairsFile ParseScoredPairs(std::string_view text, const std::string &source) {
  ScoredPairsFile file;
  std::vector<std::string> lines = Split(text, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty() || lines[0] != kPairsHeader)
    throw ValidationError(source + ": not a scored-pairs file (missing '" +
                          std::string(kPairsHeader) + "')");
  bool have_params = false;
  for (size_t n = 1; n < lines.size(); ++n) {
    const std::string where = source + ":" + std::to_string(n + 1);
    const std::string &line = lines[n];
    if (line.rfind("# params ", 0) == 0) {
      for (const std::string &field : SplitWhitespace(line.substr(9))) {
        size_t eq = field.find('=');
        if (eq == std::string::npos) throw ValidationError(where + ": malformed parameter");
        std::string key = field.substr(0, eq), value = field.substr(eq + 1);
        if (key == "lambda_c") file.lambda_c = ParseDouble(value, where + " lambda_c");
        else if (key == "lambda_cv") file.lambda_cv = ParseDouble(value, where + " lambda_cv");
        else if (key == "w") file.w = ParseDouble(value, where + " w");
        else if (key == "mode") file.mode = ParsePairMode(value);
        else throw ValidationError(where + ": unknown parameter '" + key + "'");
      }
      have_params = true;
      continue;
    }
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> f = SplitWhitespace(line);
    if (f.size() != kNumColumns)
      throw ValidationError(where + ": expected " + std::to_string(kNumColumns) +
                            " columns, found " + std::to_string(f.size()));
    ScoredPair p;
    p.test_id = f[0];
    p.test_cv_id = f[1];
    p.reference = f[2];
    p.consonant = f[3];
    p.vowel = f[4];
    try {
      p.group = ParseGroup(f[5]);
    } catch (const ValidationError &e) {
      throw ValidationError(where + ": " + e.what());
    }
    if (p.group == Group::kTrainTd) throw ValidationError(where + ": training record in pairs");
    double *values[] = {&p.cos_c, &p.bin_c, &p.score_c, &p.cos_cv,
                        &p.bin_cv, &p.score_cv, &p.fused};
    for (size_t i = 0; i < 7; ++i) *values[i] = ParseDouble(f[6 + i], where);
    if (std::abs(p.cos_c) > 1.0 || std::abs(p.cos_cv) > 1.0)
      throw ValidationError(where + ": cosine score outside [-1, 1]");
    if (p.bin_c < 0.0 || p.bin_c > 1.0 || p.bin_cv < 0.0 || p.bin_cv > 1.0)
      throw ValidationError(where + ": binary relation score outside [0, 1]");
    if (f[13] == "pos") p.positive = true;
    else if (f[13] == "neg") p.positive = false;
    else throw ValidationError(where + ": label must be pos or neg, got '" + f[13] + "'");
    file.pairs.push_back(std::move(p));
  }
  if (!have_params) throw ValidationError(source + ": missing '# params' line");
  CheckWeight(file.lambda_c, "lambda_c");
  CheckWeight(file.lambda_cv, "lambda_cv");
  CheckWeight(file.w, "w");
  return file;
}

void SaveScoredPairs(const ScoredPairsFile &file, const std::string &path) {
  WriteFileAtomic(path, FormatScoredPairs(file));
}

ScoredPairsFile LoadScoredPairs(const std::string &path) {
  return ParseScoredPairs(ReadFileToString(path), path);
}

}  // namespace cvdetect
