// src/synth.cc

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

#include "cvdetect/synth.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <set>

#include "cvdetect/error.h"
#include "cvdetect/rng.h"
#include "cvdetect/wav-io.h"

namespace cvdetect {

namespace {

enum class Manner { kStop, kFricative, kAffricate, kApproximant };

struct ConsonantProto {
  const char *name;
  Manner manner;
  double closure_ms;
  double burst_ms;
  double burst_hz, burst_bw;
  double frication_ms;  // aspiration for stops, frication otherwise
  double frication_hz, frication_bw;
  double frication_amp;
  double voiced_ms;     // approximants only
  double locus_f1, locus_f2, locus_f3;
};

// Spectral placements loosely follow the usual acoustic-phonetic picture
// (labial low, alveolar high, velar compact mid); exact numbers only need
// to keep the classes apart.
const ConsonantProto kConsonants[] = {
    {"p", Manner::kStop, 50, 10, 700, 600, 40, 1200, 1000, 0.08, 0, 300, 900, 2300},
    {"t", Manner::kStop, 50, 10, 4000, 1500, 40, 3500, 1500, 0.08, 0, 300, 1800, 2700},
    {"k", Manner::kStop, 50, 15, 2000, 400, 40, 2200, 600, 0.08, 0, 300, 2300, 2900},
    {"s", Manner::kFricative, 0, 0, 0, 0, 120, 5500, 1500, 0.20, 0, 300, 1700, 2700},
    {"f", Manner::kFricative, 0, 0, 0, 0, 110, 3500, 4000, 0.06, 0, 300, 1000, 2400},
    {"l", Manner::kApproximant, 0, 0, 0, 0, 0, 0, 0, 0, 70, 350, 1000, 2800},
    {"ts", Manner::kAffricate, 40, 10, 4000, 1500, 70, 5000, 1500, 0.18, 0, 300, 1800, 2700},
    {"j", Manner::kApproximant, 0, 0, 0, 0, 0, 0, 0, 0, 70, 280, 2300, 3000},
};

struct VowelProto {
  const char *name;
  double f1, f2, f3;
};

const VowelProto kVowels[] = {
    {"a", 850, 1250, 2700}, {"i", 300, 2300, 3000}, {"u", 350, 750, 2400},
    {"e", 500, 1900, 2600}, {"o", 550, 900, 2500},
};

const ConsonantProto &FindConsonant(const std::string &name) {
  for (const auto &c : kConsonants)
    if (name == c.name) return c;
  throw ValidationError("unknown synthetic consonant '" + name + "'");
}

const VowelProto &FindVowel(const std::string &name) {
  for (const auto &v : kVowels)
    if (name == v.name) return v;
  throw ValidationError("unknown synthetic vowel '" + name + "'");
}

/// Two-pole digital resonator (Klatt 1980 form) with per-sample retuning.
class Resonator {
 public:
  double Step(double x, double freq, double bw, double rate) {
    const double t = 1.0 / rate;
    const double c = -std::exp(-2.0 * std::numbers::pi * bw * t);
    const double b = 2.0 * std::exp(-std::numbers::pi * bw * t) *
                     std::cos(2.0 * std::numbers::pi * freq * t);
    const double a = 1.0 - b - c;
    const double y = a * x + b * y1_ + c * y2_;
    y2_ = y1_;
    y1_ = y;
    return y;
  }

 private:
  double y1_ = 0.0, y2_ = 0.0;
};

void NormalizeRms(std::vector<double> &x, double target) {
  if (x.empty()) return;
  double energy = 0.0;
  for (double v : x) energy += v * v;
  const double rms = std::sqrt(energy / x.size());
  if (rms <= 0.0) return;
  for (double &v : x) v *= target / rms;
}

std::vector<double> BandNoise(Rng &rng, size_t n, double hz, double bw,
                              double amp, double rate) {
  std::vector<double> out(n);
  Resonator res;
  for (auto &v : out) v = res.Step(rng.Normal(), hz, bw, rate);
  NormalizeRms(out, amp);
  // Short raised-cosine ramps avoid clicks at segment joins.
  const size_t ramp = std::min<size_t>(n / 4, static_cast<size_t>(0.003 * rate));
  for (size_t i = 0; i < ramp; ++i) {
    const double g = 0.5 * (1.0 - std::cos(std::numbers::pi * i / ramp));
    out[i] *= g;
    out[n - 1 - i] *= g;
  }
  return out;
}

/// Glottal pulse train filtered by three formant resonators following
/// the trajectories f1(t), f2(t), f3(t).
template <typename Track>
std::vector<double> Voiced(Rng &rng, size_t n, double f0, double rate,
                           double amp, Track track) {
  std::vector<double> out(n);
  Resonator r1, r2, r3;
  double phase = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double jitter = 1.0 + 0.01 * rng.Normal();
    phase += f0 * jitter / rate;
    double src = 0.0;
    if (phase >= 1.0) {
      phase -= 1.0;
      src = 1.0;
    }
    src += 0.02 * rng.Normal();  // breathiness
    double f1, f2, f3;
    track(static_cast<double>(i) / rate, f1, f2, f3);
    double y = r1.Step(src, f1, 90.0, rate);
    y = r2.Step(y, f2, 110.0, rate);
    y = r3.Step(y, f3, 170.0, rate);
    out[i] = y;
  }
  NormalizeRms(out, amp);
  return out;
}

void Append(std::vector<double> &dst, const std::vector<double> &src) {
  dst.insert(dst.end(), src.begin(), src.end());
}

struct Speaker {
  std::string id;
  double formant_scale;
  double f0;
};

struct Token {
  Waveform wave;
  size_t consonant_begin;
  size_t vowel_begin;
  size_t vowel_end;
};

Token SynthesizeToken(const SynthConfig &cfg, const ConsonantProto &cons,
                      const VowelProto &vowel, const Speaker &spk, bool corrupt,
                      Rng &rng) {
  const double rate = cfg.sample_rate;
  auto samples = [rate](double ms) {
    return static_cast<size_t>(std::max(1.0, std::round(ms * 0.001 * rate)));
  };
  const double dur = rng.Uniform(0.85, 1.15);   // consonant duration jitter
  const double place = rng.Uniform(0.95, 1.05); // spectral placement jitter
  const double fs = spk.formant_scale;

  std::vector<double> x;
  Append(x, std::vector<double>(samples(rng.Uniform(35.0, 50.0)), 0.0));
  const size_t consonant_begin = x.size();

  if (corrupt) {
    // Class-neutral burst: duration and spectrum drawn independently of
    // the produced consonant.
    Append(x, BandNoise(rng, samples(rng.Uniform(60.0, 110.0)),
                        rng.Uniform(1500.0, 4500.0), 3000.0, 0.1, rate));
  } else {
    switch (cons.manner) {
      case Manner::kStop:
      case Manner::kAffricate:
        Append(x, std::vector<double>(samples(cons.closure_ms * dur), 0.0));
        Append(x, BandNoise(rng, samples(cons.burst_ms * dur), cons.burst_hz * place,
                            cons.burst_bw, 0.25, rate));
        Append(x, BandNoise(rng, samples(cons.frication_ms * dur),
                            cons.frication_hz * place, cons.frication_bw,
                            cons.frication_amp, rate));
        break;
      case Manner::kFricative:
        Append(x, BandNoise(rng, samples(cons.frication_ms * dur),
                            cons.frication_hz * place, cons.frication_bw,
                            cons.frication_amp, rate));
        break;
      case Manner::kApproximant: {
        const double f1 = cons.locus_f1 * fs, f2 = cons.locus_f2 * fs * place,
                     f3 = cons.locus_f3 * fs;
        Append(x, Voiced(rng, samples(cons.voiced_ms * dur), spk.f0, rate, 0.12,
                         [&](double, double &a, double &b, double &c) {
                           a = f1;
                           b = f2;
                           c = f3;
                         }));
        break;
      }
    }
  }

  const size_t vowel_begin = x.size();
  const size_t vowel_len = samples(rng.Uniform(cfg.vowel_min_ms, cfg.vowel_max_ms));
  // Formant onsets sit between the consonant locus and the vowel target
  // and relax exponentially to the target.
  const double tau = 0.025;
  const double t1 = vowel.f1 * fs, t2 = vowel.f2 * fs, t3 = vowel.f3 * fs;
  const double o1 = cons.manner == Manner::kApproximant ? cons.locus_f1 * fs : 0.5 * t1;
  const double o2 = (cons.locus_f2 * place * fs) * 0.8 + 0.2 * t2;
  const double o3 = (cons.locus_f3 * fs) * 0.8 + 0.2 * t3;
  std::vector<double> v = Voiced(rng, vowel_len, spk.f0, rate, 0.2,
                                 [&](double t, double &a, double &b, double &c) {
                                   const double k = std::exp(-t / tau);
                                   a = t1 + (o1 - t1) * k;
                                   b = t2 + (o2 - t2) * k;
                                   c = t3 + (o3 - t3) * k;
                                 });
  const size_t ramp_in = std::min(v.size() / 4, samples(8.0));
  const size_t ramp_out = std::min(v.size() / 4, samples(25.0));
  for (size_t i = 0; i < ramp_in; ++i) v[i] *= static_cast<double>(i) / ramp_in;
  for (size_t i = 0; i < ramp_out; ++i)
    v[v.size() - 1 - i] *= static_cast<double>(i) / ramp_out;
  Append(x, v);
  const size_t vowel_end = x.size();
  Append(x, std::vector<double>(samples(30.0), 0.0));

  for (double &s : x) s += cfg.noise_level * rng.Normal();
  double peak = 0.0;
  for (double s : x) peak = std::max(peak, std::abs(s));
  if (peak > 0.9)
    for (double &s : x) s *= 0.9 / peak;

  Token tok;
  tok.wave.sample_rate = cfg.sample_rate;
  tok.wave.samples = std::move(x);
  tok.wave = QuantizePcm16(tok.wave);
  tok.consonant_begin = consonant_begin;
  tok.vowel_begin = vowel_begin;
  tok.vowel_end = vowel_end;
  return tok;
}

}  // namespace

void SynthConfig::Validate() const {
  if (consonants.size() < 2)
    throw ValidationError("synthetic corpus needs at least 2 consonant classes");
  if (vowels.empty()) throw ValidationError("synthetic corpus needs at least 1 vowel");
  std::set<std::string> c(consonants.begin(), consonants.end());
  std::set<std::string> v(vowels.begin(), vowels.end());
  if (c.size() != consonants.size() || v.size() != vowels.size())
    throw ValidationError("duplicate class names in synthetic corpus config");
  for (const auto &name : consonants) FindConsonant(name);
  for (const auto &name : vowels) FindVowel(name);
  if (tokens_per_class <= 0) throw ValidationError("tokens per class must be positive");
  if (sample_rate != kRequiredSampleRate)
    throw ValidationError("synthetic corpus sample rate must be 16000");
  if (num_speakers < 2 || num_test_speakers < 1 || num_test_speakers >= num_speakers)
    throw ValidationError("need >= 2 speakers and 1 <= test speakers < speakers");
  if (!(atypical_rate >= 0.0 && atypical_rate <= 1.0))
    throw ValidationError("atypical rate must lie in [0, 1]");
  if (!(consonant_corruption >= 0.0 && consonant_corruption <= 1.0))
    throw ValidationError("consonant corruption must lie in [0, 1]");
  if (!(vowel_min_ms > 20.0 && vowel_max_ms >= vowel_min_ms))
    throw ValidationError("invalid vowel duration range");
  if (!(noise_level >= 0.0 && noise_level < 0.1))
    throw ValidationError("noise level must lie in [0, 0.1)");
}

std::vector<std::string> SynthConsonantNames() {
  std::vector<std::string> out;
  for (const auto &c : kConsonants) out.emplace_back(c.name);
  return out;
}

std::vector<std::string> SynthVowelNames() {
  std::vector<std::string> out;
  for (const auto &v : kVowels) out.emplace_back(v.name);
  return out;
}

SynthCorpus SynthesizeCorpus(const SynthConfig &cfg, uint64_t seed) {
  cfg.Validate();
  Rng speaker_rng(DeriveSeed(seed, 1));
  std::vector<Speaker> speakers;
  for (int s = 0; s < cfg.num_speakers; ++s) {
    char id[16];
    std::snprintf(id, sizeof(id), "spk%02d", s);
    speakers.push_back({id, speaker_rng.Uniform(1.0, 1.15), speaker_rng.Uniform(220.0, 300.0)});
  }
  const int first_test_speaker = cfg.num_speakers - cfg.num_test_speakers;

  SynthCorpus corpus;
  std::vector<SegmentRecord> records;
  Rng rng(DeriveSeed(seed, 2));
  int token_index = 0;
  for (const auto &prompted : cfg.consonants) {
    for (const auto &vowel_name : cfg.vowels) {
      for (int k = 0; k < cfg.tokens_per_class; ++k, ++token_index) {
        const int spk = k % cfg.num_speakers;
        const bool test = spk >= first_test_speaker;
        std::string produced = prompted;
        Group group = test ? Group::kTestTd : Group::kTrainTd;
        if (test && rng.Uniform() < cfg.atypical_rate) {
          std::vector<std::string> others;
          for (const auto &c : cfg.consonants)
            if (c != prompted) others.push_back(c);
          produced = others[rng.UniformInt(others.size())];
          group = Group::kTestAtypical;
        }
        const bool corrupt = rng.Uniform() < cfg.consonant_corruption;
        Rng token_rng(DeriveSeed(seed, 3, static_cast<uint64_t>(token_index)));
        Token tok = SynthesizeToken(cfg, FindConsonant(produced), FindVowel(vowel_name),
                                    speakers[spk], corrupt, token_rng);

        char name[32];
        std::snprintf(name, sizeof(name), "tok%05d", token_index);
        const std::string audio_ref = std::string("wav/") + name + ".wav";
        const double rate = cfg.sample_rate;

        SegmentRecord c;
        c.id = std::string(name) + "-C";
        c.audio_ref = audio_ref;
        c.sample_rate = cfg.sample_rate;
        c.start = tok.consonant_begin / rate;
        c.end = tok.vowel_begin / rate;
        c.speaker_id = speakers[spk].id;
        c.consonant = produced;
        c.kind = SegmentKind::kC;
        c.group = group;
        c.expected_consonant = prompted;

        SegmentRecord cv = c;
        cv.id = std::string(name) + "-CV";
        cv.end = tok.vowel_end / rate;
        cv.vowel = vowel_name;
        cv.kind = SegmentKind::kCV;

        records.push_back(std::move(c));
        records.push_back(std::move(cv));
        corpus.audio.emplace(audio_ref, std::move(tok.wave));
      }
    }
  }
  corpus.manifest = MakeManifest(std::move(records));
  return corpus;
}

}  // namespace cvdetect
