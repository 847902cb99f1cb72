// cvdetect/corpus.h

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

#ifndef CVDETECT_CORPUS_H_
#define CVDETECT_CORPUS_H_

#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cvdetect {

enum class SegmentKind { kC, kCV };
enum class Group { kTrainTd, kTestTd, kTestAtypical };

std::string KindName(SegmentKind kind);        // "C" / "CV"
SegmentKind ParseKind(const std::string &s);   // throws ValidationError
std::string GroupName(Group group);            // "train_td" / "test_td" / "test_atypical"
Group ParseGroup(const std::string &s);

/// Class label of a consonant-vowel unit, e.g. "k+a".
std::string CvLabel(const std::string &consonant, const std::string &vowel);

/// One aligned C or CV segment inside a referenced recording.
struct SegmentRecord {
  std::string id;
  std::string audio_ref;
  int sample_rate = 16000;
  double start = 0.0;  // seconds
  double end = 0.0;
  std::string speaker_id;
  std::string consonant;                // produced consonant
  std::optional<std::string> vowel;     // present iff kind == kCV
  SegmentKind kind = SegmentKind::kC;
  Group group = Group::kTrainTd;
  std::string expected_consonant;       // prompted consonant

  /// Produced category: consonant for C, CvLabel(consonant, vowel) for CV.
  std::string Category() const;
  /// Category the speaker was prompted to produce.
  std::string ExpectedCategory() const;
  bool IsTest() const { return group != Group::kTrainTd; }
};

/// Throws ValidationError naming the record if an invariant fails.
void ValidateRecord(const SegmentRecord &record);

struct CorpusManifest {
  std::vector<SegmentRecord> records;
  std::vector<std::string> consonant_inventory;
  std::vector<std::string> cv_inventory;

  /// Inventory defining class indices for an extractor of the given kind.
  const std::vector<std::string> &Inventory(SegmentKind kind) const {
    return kind == SegmentKind::kC ? consonant_inventory : cv_inventory;
  }
};

/// Builds a manifest from records, deriving sorted inventories.
CorpusManifest MakeManifest(std::vector<SegmentRecord> records);

/// Checks record invariants, id uniqueness and inventory consistency.
void ValidateManifest(const CorpusManifest &manifest);

/// Manifest text format, one record per line:
///
///   id=<id> audio=<ref> rate=<hz> start=<s> end=<s> speaker=<spk>
///   consonant=<c> vowel=<v|-> kind=<C|CV>
///   group=<train_td|test_td|test_atypical> expected=<c>
///
/// (all on one line, fields in exactly this order). Lines starting with
/// '#' are comments. Optional inventory directives:
///
///   @consonants <c1> <c2> ...
///   @cv <c+v> ...
///
/// Declared inventories fix the class order; otherwise they are derived
/// from the records and sorted.
CorpusManifest ParseManifest(std::istream &in, const std::string &source_name);
CorpusManifest LoadManifest(const std::string &path);
std::string FormatManifest(const CorpusManifest &manifest);
void SaveManifest(const CorpusManifest &manifest, const std::string &path);

struct Waveform {
  std::vector<double> samples;
  int sample_rate = 16000;

  double Duration() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

/// Samples [round(start*rate), round(end*rate)).
Waveform SliceSegment(const Waveform &wave, const SegmentRecord &record);

constexpr double kMinSpeedFactor = 0.5;
constexpr double kMaxSpeedFactor = 2.0;

/// Resamples so that playback is `factor` times faster. Output length is
/// round(N / factor); windowed-sinc interpolation with the cutoff lowered
/// to the output Nyquist when compressing.
Waveform SpeedPerturb(const Waveform &wave, double factor);

/// Prefix marking a speed-perturbed audio reference, e.g. "sp0.9:a.wav".
std::string SpeedAudioRef(const std::string &audio_ref, double factor);

/// Adds one speed-perturbed copy per factor of every TRAIN_TD record.
/// Copies get id "sp<f>-<id>", audio "sp<f>:<audio>" and boundaries
/// divided by f. Test records pass through untouched.
CorpusManifest AugmentTrainingSet(const CorpusManifest &manifest,
                                  std::span<const double> factors);

/// Resolves audio references to waveforms. References carrying the
/// speed prefix are resolved by perturbing the underlying recording.
class AudioSource {
 public:
  virtual ~AudioSource() = default;
  Waveform Load(const std::string &audio_ref) const;

 protected:
  virtual Waveform LoadRaw(const std::string &audio_ref) const = 0;
};

/// Reads 16-bit PCM WAV files relative to a root directory.
class DirectoryAudioSource : public AudioSource {
 public:
  explicit DirectoryAudioSource(std::string root) : root_(std::move(root)) {}

 protected:
  Waveform LoadRaw(const std::string &audio_ref) const override;

 private:
  std::string root_;
};

class MemoryAudioSource : public AudioSource {
 public:
  explicit MemoryAudioSource(std::map<std::string, Waveform> audio)
      : audio_(std::move(audio)) {}
  const std::map<std::string, Waveform> &audio() const { return audio_; }

 protected:
  Waveform LoadRaw(const std::string &audio_ref) const override;

 private:
  std::map<std::string, Waveform> audio_;
};

}  // namespace cvdetect

#endif  // CVDETECT_CORPUS_H_
