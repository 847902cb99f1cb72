// cvdetect/synth.h

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

#ifndef CVDETECT_SYNTH_H_
#define CVDETECT_SYNTH_H_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cvdetect/corpus.h"

namespace cvdetect {

/**
   Source-filter generator for a synthetic CV corpus.

   Every token is one recording: leading silence, an onset consonant and a
   vowel. Consonant classes differ in manner (stop burst, frication,
   affrication, voiced approximant) and in spectral placement. Vowels are
   glottal pulse trains through three time-varying formant resonators; the
   second formant starts near a locus frequency set by the consonant that
   was actually produced, so the vowel onset carries consonant identity.

   Each token yields one C record (consonant span only) and one CV record
   (consonant + vowel). Test-speaker tokens are substituted with another
   consonant with probability `atypical_rate`; those records keep the
   prompted class as expected_consonant.
 */
struct SynthConfig {
  std::vector<std::string> consonants{"p", "s", "l", "k"};
  std::vector<std::string> vowels{"a", "i", "u"};
  int tokens_per_class = 30;  // per (consonant, vowel) pair
  int sample_rate = 16000;
  int num_speakers = 10;
  int num_test_speakers = 4;
  double atypical_rate = 0.1;
  double vowel_min_ms = 150.0;
  double vowel_max_ms = 220.0;
  double noise_level = 0.002;
  /// Fraction of tokens whose consonant portion is replaced by a
  /// class-neutral noise burst. The vowel transition still follows the
  /// produced consonant.
  double consonant_corruption = 0.0;

  void Validate() const;
};

struct SynthCorpus {
  std::map<std::string, Waveform> audio;  // keyed by audio_ref
  CorpusManifest manifest;
};

/// Names accepted in SynthConfig::consonants / vowels.
std::vector<std::string> SynthConsonantNames();
std::vector<std::string> SynthVowelNames();

/// Pure function of (config, seed). Waveforms are already on the 16-bit
/// PCM grid so writing them to WAV and reading back is lossless.
SynthCorpus SynthesizeCorpus(const SynthConfig &config, uint64_t seed);

}  // namespace cvdetect

#endif  // CVDETECT_SYNTH_H_
