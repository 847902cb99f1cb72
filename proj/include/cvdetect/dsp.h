// cvdetect/dsp.h

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

#ifndef CVDETECT_DSP_H_
#define CVDETECT_DSP_H_

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cvdetect/corpus.h"
#include "cvdetect/matrix.h"

namespace cvdetect {

struct FeatureConfig {
  double frame_length_ms = 25.0;
  double frame_shift_ms = 10.0;
  int num_mels = 80;
  int fft_size = 512;
  double preemphasis = 0.97;
  double low_freq = 20.0;
  double high_freq = 7600.0;
  double log_floor = 1e-10;

  int FrameSamples(int sample_rate) const;
  int ShiftSamples(int sample_rate) const;
  /// Throws ValidationError if the config is unusable at this rate.
  void Validate(int sample_rate) const;
  /// Stable hash of all fields; stored in feature archives.
  uint64_t Hash() const;

  bool operator==(const FeatureConfig &) const = default;
};

/// frames x num_mels log filterbank energies.
struct FeatureMatrix {
  Matrix data;
  bool normalized = false;

  int frames() const { return data.rows(); }
  int dim() const { return data.cols(); }
};

/// HTK mel scale, 2595 log10(1 + f/700).
double MelScale(double hz);
double InverseMelScale(double mel);

/// Number of frames 1 + floor((n - frame) / shift), or 0 if n < frame.
int NumFrames(size_t num_samples, int frame_samples, int shift_samples);

/// Computes log-mel features. Per frame: pre-emphasis, Hamming window,
/// zero-padded FFT, magnitude spectrum, triangular mel filters (unit peak,
/// equally spaced on the mel scale between low_freq and high_freq), floor
/// at log_floor, natural log.
class MelFilterbank {
 public:
  MelFilterbank(const FeatureConfig &config, int sample_rate);
  ~MelFilterbank();
  MelFilterbank(const MelFilterbank &) = delete;
  MelFilterbank &operator=(const MelFilterbank &) = delete;

  FeatureMatrix Compute(const Waveform &wave) const;

  /// Filter weights over FFT bins 0..fft_size/2, one row per mel band.
  const Matrix &weights() const { return weights_; }

 private:
  struct FftPlan;
  FeatureConfig config_;
  int sample_rate_;
  int frame_samples_, shift_samples_;
  std::vector<double> window_;
  Matrix weights_;
  std::unique_ptr<FftPlan> plan_;
};

FeatureMatrix LogMel(const Waveform &wave, const FeatureConfig &config);

struct CmvnStats {
  std::vector<double> mean;
  std::vector<double> variance;
  int64_t frame_count = 0;

  int dim() const { return static_cast<int>(mean.size()); }
  bool operator==(const CmvnStats &) const = default;
};

constexpr double kVarianceFloor = 1e-10;

/// Pooled per-dimension mean and population variance over every frame.
CmvnStats CmvnFit(std::span<const FeatureMatrix> features);
CmvnStats CmvnFit(std::span<const FeatureMatrix *const> features);

/// (x - mean) / sqrt(variance) per dimension.
FeatureMatrix CmvnApply(const CmvnStats &stats, const FeatureMatrix &fm);

}  // namespace cvdetect

#endif  // CVDETECT_DSP_H_
