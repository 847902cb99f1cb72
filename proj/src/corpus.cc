// src/corpus.cc

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

#include "cvdetect/corpus.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "cvdetect/error.h"
#include "cvdetect/io-util.h"
#include "cvdetect/wav-io.h"

namespace cvdetect {

namespace {

const char *const kFieldNames[] = {"id",       "audio",  "rate",  "start",
                                   "end",      "speaker", "consonant",
                                   "vowel",    "kind",   "group", "expected"};
constexpr size_t kNumFields = std::size(kFieldNames);

bool IsLabelToken(const std::string &s) {
  if (s.empty() || s == "-") return false;
  return std::none_of(s.begin(), s.end(), [](unsigned char c) {
    return std::isspace(c) || c == '=';
  });
}

void CheckDuplicateFree(const std::vector<std::string> &inv, const char *name) {
  std::set<std::string> seen;
  for (const auto &s : inv)
    if (!seen.insert(s).second)
      throw ValidationError(std::string("duplicate entry '") + s + "' in " +
                            name + " inventory");
}

}  // namespace

std::string KindName(SegmentKind kind) {
  return kind == SegmentKind::kC ? "C" : "CV";
}

SegmentKind ParseKind(const std::string &s) {
  if (s == "C") return SegmentKind::kC;
  if (s == "CV") return SegmentKind::kCV;
  throw ValidationError("unknown segment kind '" + s + "' (expected C or CV)");
}

std::string GroupName(Group group) {
  switch (group) {
    case Group::kTrainTd: return "train_td";
    case Group::kTestTd: return "test_td";
    case Group::kTestAtypical: return "test_atypical";
  }
  return "?";
}

Group ParseGroup(const std::string &s) {
  if (s == "train_td") return Group::kTrainTd;
  if (s == "test_td") return Group::kTestTd;
  if (s == "test_atypical") return Group::kTestAtypical;
  throw ValidationError("unknown group '" + s +
                        "' (expected train_td, test_td or test_atypical)");
}

std::string CvLabel(const std::string &consonant, const std::string &vowel) {
  return consonant + "+" + vowel;
}

std::string SegmentRecord::Category() const {
  return kind == SegmentKind::kCV ? CvLabel(consonant, vowel.value_or(""))
                                  : consonant;
}

std::string SegmentRecord::ExpectedCategory() const {
  return kind == SegmentKind::kCV
             ? CvLabel(expected_consonant, vowel.value_or(""))
             : expected_consonant;
}

void ValidateRecord(const SegmentRecord &r) {
  auto fail = [&r](const std::string &msg) {
    throw ValidationError("record '" + r.id + "': " + msg);
  };
  if (!IsLabelToken(r.id)) throw ValidationError("record with empty or invalid id");
  if (!IsLabelToken(r.audio_ref)) fail("invalid audio reference");
  if (r.sample_rate <= 0) fail("sample rate must be positive");
  if (!std::isfinite(r.start) || !std::isfinite(r.end)) fail("non-finite boundary");
  if (r.start < 0.0) fail("start must be >= 0");
  if (!(r.end > r.start))
    fail("end (" + FormatDouble(r.end) + ") must exceed start (" +
         FormatDouble(r.start) + ")");
  if (!IsLabelToken(r.speaker_id)) fail("invalid speaker id");
  if (!IsLabelToken(r.consonant)) fail("invalid consonant label");
  if (r.kind == SegmentKind::kCV && !r.vowel) fail("CV record is missing its vowel");
  if (r.kind == SegmentKind::kC && r.vowel) fail("C record must not carry a vowel");
  if (r.vowel && !IsLabelToken(*r.vowel)) fail("invalid vowel label");
  if (!IsLabelToken(r.expected_consonant)) fail("missing expected consonant");
  if (r.group != Group::kTestAtypical && r.expected_consonant != r.consonant)
    fail("typical record must have expected consonant equal to its consonant");
}

CorpusManifest MakeManifest(std::vector<SegmentRecord> records) {
  CorpusManifest m;
  std::set<std::string> consonants, cvs;
  for (const auto &r : records) {
    consonants.insert(r.consonant);
    consonants.insert(r.expected_consonant);
    if (r.kind == SegmentKind::kCV) cvs.insert(r.Category());
  }
  m.records = std::move(records);
  m.consonant_inventory.assign(consonants.begin(), consonants.end());
  m.cv_inventory.assign(cvs.begin(), cvs.end());
  ValidateManifest(m);
  return m;
}

void ValidateManifest(const CorpusManifest &m) {
  CheckDuplicateFree(m.consonant_inventory, "consonant");
  CheckDuplicateFree(m.cv_inventory, "CV");
  std::set<std::string> consonants(m.consonant_inventory.begin(),
                                   m.consonant_inventory.end());
  std::set<std::string> declared_cv(m.cv_inventory.begin(), m.cv_inventory.end());
  std::set<std::string> ids, seen_cv;
  for (const auto &r : m.records) {
    ValidateRecord(r);
    if (!ids.insert(r.id).second)
      throw ValidationError("duplicate record id '" + r.id + "'");
    if (!consonants.count(r.consonant) || !consonants.count(r.expected_consonant))
      throw ValidationError("record '" + r.id +
                            "': consonant not in consonant inventory");
    if (r.kind == SegmentKind::kCV) {
      if (!declared_cv.count(r.Category()))
        throw ValidationError("record '" + r.id + "': CV unit '" + r.Category() +
                              "' not in CV inventory");
      seen_cv.insert(r.Category());
    }
  }
  for (const auto &cv : m.cv_inventory)
    if (!seen_cv.count(cv))
      throw ValidationError("CV inventory entry '" + cv +
                            "' does not occur in any CV record");
}

CorpusManifest ParseManifest(std::istream &in, const std::string &source_name) {
  std::vector<SegmentRecord> records;
  std::optional<std::vector<std::string>> declared_consonants, declared_cv;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto where = [&]() { return source_name + ":" + std::to_string(line_no); };
    auto tokens = SplitWhitespace(line);
    if (tokens.empty() || tokens[0][0] == '#') continue;
    if (tokens[0][0] == '@') {
      std::vector<std::string> values(tokens.begin() + 1, tokens.end());
      if (tokens[0] == "@consonants") {
        declared_consonants = std::move(values);
      } else if (tokens[0] == "@cv") {
        declared_cv = std::move(values);
      } else {
        throw ValidationError(where() + ": unknown directive '" + tokens[0] + "'");
      }
      continue;
    }
    if (tokens.size() != kNumFields)
      throw ValidationError(where() + ": expected " + std::to_string(kNumFields) +
                            " fields, found " + std::to_string(tokens.size()));
    std::string values[kNumFields];
    for (size_t i = 0; i < kNumFields; ++i) {
      const std::string &tok = tokens[i];
      size_t eq = tok.find('=');
      if (eq == std::string::npos || tok.substr(0, eq) != kFieldNames[i])
        throw ValidationError(where() + ": field " + std::to_string(i + 1) +
                              " must be '" + kFieldNames[i] + "=...'");
      values[i] = tok.substr(eq + 1);
    }
    try {
      SegmentRecord r;
      r.id = values[0];
      r.audio_ref = values[1];
      int64_t rate = ParseInt(values[2], "rate");
      if (rate <= 0 || rate > 1000000) throw ValidationError("rate out of range");
      r.sample_rate = static_cast<int>(rate);
      r.start = ParseDouble(values[3], "start");
      r.end = ParseDouble(values[4], "end");
      r.speaker_id = values[5];
      r.consonant = values[6];
      if (values[7] != "-") r.vowel = values[7];
      r.kind = ParseKind(values[8]);
      r.group = ParseGroup(values[9]);
      r.expected_consonant = values[10] == "-" && r.group != Group::kTestAtypical
                                 ? r.consonant
                                 : values[10];
      ValidateRecord(r);
      records.push_back(std::move(r));
    } catch (const ValidationError &e) {
      throw ValidationError(where() + ": " + e.what());
    }
  }
  if (records.empty()) throw ValidationError(source_name + ": no records");

  CorpusManifest m = MakeManifest(std::move(records));
  if (declared_consonants) {
    CheckDuplicateFree(*declared_consonants, "consonant");
    std::set<std::string> declared(declared_consonants->begin(),
                                   declared_consonants->end());
    for (const auto &c : m.consonant_inventory)
      if (!declared.count(c))
        throw ValidationError(source_name + ": consonant '" + c +
                              "' missing from @consonants");
    m.consonant_inventory = *declared_consonants;
  }
  if (declared_cv) {
    CheckDuplicateFree(*declared_cv, "CV");
    std::vector<std::string> a = *declared_cv;
    std::sort(a.begin(), a.end());
    if (a != m.cv_inventory)
      throw ValidationError(source_name +
                            ": @cv does not match the CV units in the records");
    m.cv_inventory = *declared_cv;
  }
  ValidateManifest(m);
  return m;
}

CorpusManifest LoadManifest(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open manifest '" + path + "'");
  return ParseManifest(in, path);
}

std::string FormatManifest(const CorpusManifest &m) {
  std::ostringstream os;
  os << "# cvdetect manifest v1\n";
  os << "@consonants";
  for (const auto &c : m.consonant_inventory) os << ' ' << c;
  os << "\n@cv";
  for (const auto &c : m.cv_inventory) os << ' ' << c;
  os << '\n';
  for (const auto &r : m.records) {
    os << "id=" << r.id << " audio=" << r.audio_ref << " rate=" << r.sample_rate
       << " start=" << FormatDouble(r.start) << " end=" << FormatDouble(r.end)
       << " speaker=" << r.speaker_id << " consonant=" << r.consonant
       << " vowel=" << r.vowel.value_or("-") << " kind=" << KindName(r.kind)
       << " group=" << GroupName(r.group) << " expected=" << r.expected_consonant
       << '\n';
  }
  return os.str();
}

void SaveManifest(const CorpusManifest &m, const std::string &path) {
  WriteFileAtomic(path, FormatManifest(m));
}

Waveform SliceSegment(const Waveform &wave, const SegmentRecord &r) {
  if (wave.sample_rate != r.sample_rate)
    throw ValidationError("record '" + r.id + "': sample rate " +
                          std::to_string(r.sample_rate) + " does not match audio rate " +
                          std::to_string(wave.sample_rate));
  const double rate = wave.sample_rate;
  const long long begin = std::llround(r.start * rate);
  const long long end = std::llround(r.end * rate);
  if (begin < 0 || end > static_cast<long long>(wave.samples.size()) || end <= begin)
    throw ValidationError("record '" + r.id + "': boundaries [" +
                          FormatDouble(r.start) + ", " + FormatDouble(r.end) +
                          "] outside audio of duration " +
                          FormatDouble(wave.Duration()) + " s");
  Waveform out;
  out.sample_rate = wave.sample_rate;
  out.samples.assign(wave.samples.begin() + begin, wave.samples.begin() + end);
  return out;
}

Waveform SpeedPerturb(const Waveform &wave, double factor) {
  if (!(factor > kMinSpeedFactor && factor < kMaxSpeedFactor))
    throw ValidationError("speed factor " + FormatDouble(factor) +
                          " outside supported range (0.5, 2.0)");
  if (wave.samples.empty()) throw ValidationError("cannot perturb an empty waveform");
  Waveform out;
  out.sample_rate = wave.sample_rate;
  const long long n = static_cast<long long>(wave.samples.size());
  const long long m = std::llround(static_cast<double>(n) / factor);
  if (factor == 1.0) {
    out.samples = wave.samples;
    return out;
  }
  // Cutoff relative to the input Nyquist; lowered when compressing so the
  // output does not alias.
  const double cutoff = std::min(1.0, 1.0 / factor);
  constexpr double kZeroCrossings = 16.0;
  const double half_width = kZeroCrossings / cutoff;
  out.samples.assign(static_cast<size_t>(m), 0.0);
  for (long long j = 0; j < m; ++j) {
    const double t = static_cast<double>(j) * factor;
    const long long lo = std::max<long long>(0, static_cast<long long>(std::ceil(t - half_width)));
    const long long hi = std::min<long long>(n - 1, static_cast<long long>(std::floor(t + half_width)));
    double acc = 0.0;
    for (long long k = lo; k <= hi; ++k) {
      const double d = t - static_cast<double>(k);
      const double x = cutoff * d;
      const double sinc = x == 0.0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
      const double window = 0.5 * (1.0 + std::cos(std::numbers::pi * d / half_width));
      acc += wave.samples[k] * cutoff * sinc * window;
    }
    out.samples[j] = acc;
  }
  return out;
}

std::string SpeedAudioRef(const std::string &audio_ref, double factor) {
  return "sp" + FormatDouble(factor) + ":" + audio_ref;
}

CorpusManifest AugmentTrainingSet(const CorpusManifest &manifest,
                                  std::span<const double> factors) {
  for (double f : factors)
    if (!(f > kMinSpeedFactor && f < kMaxSpeedFactor))
      throw ValidationError("speed factor " + FormatDouble(f) +
                            " outside supported range (0.5, 2.0)");
  CorpusManifest out = manifest;
  for (double f : factors) {
    for (const auto &r : manifest.records) {
      if (r.group != Group::kTrainTd) continue;
      SegmentRecord copy = r;
      copy.id = "sp" + FormatDouble(f) + "-" + r.id;
      copy.audio_ref = SpeedAudioRef(r.audio_ref, f);
      copy.start = r.start / f;
      copy.end = r.end / f;
      out.records.push_back(std::move(copy));
    }
  }
  ValidateManifest(out);
  return out;
}

Waveform AudioSource::Load(const std::string &audio_ref) const {
  if (audio_ref.size() > 3 && audio_ref.compare(0, 2, "sp") == 0) {
    size_t colon = audio_ref.find(':');
    if (colon != std::string::npos) {
      double factor = 0.0;
      bool parsed = true;
      try {
        factor = ParseDouble(std::string_view(audio_ref).substr(2, colon - 2), "speed");
      } catch (const ValidationError &) {
        parsed = false;
      }
      if (parsed) return SpeedPerturb(Load(audio_ref.substr(colon + 1)), factor);
    }
  }
  return LoadRaw(audio_ref);
}

Waveform DirectoryAudioSource::LoadRaw(const std::string &audio_ref) const {
  std::filesystem::path p(audio_ref);
  if (p.is_relative()) p = std::filesystem::path(root_) / p;
  return ReadWav(p.string());
}

Waveform MemoryAudioSource::LoadRaw(const std::string &audio_ref) const {
  auto it = audio_.find(audio_ref);
  if (it == audio_.end())
    throw ValidationError("unknown audio reference '" + audio_ref + "'");
  return it->second;
}

}  // namespace cvdetect
