// src/dsp.cc

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

#include "cvdetect/dsp.h"

#include <fftw3.h>

#include <cmath>
#include <mutex>
#include <numbers>

#include "cvdetect/error.h"
#include "cvdetect/io-util.h"

namespace cvdetect {

namespace {

// FFTW planning is not thread safe; execution with new-array functions is.
std::mutex &FftwPlannerMutex() {
  static std::mutex mu;
  return mu;
}

}  // namespace

int FeatureConfig::FrameSamples(int sample_rate) const {
  return static_cast<int>(std::lround(frame_length_ms * 0.001 * sample_rate));
}

int FeatureConfig::ShiftSamples(int sample_rate) const {
  return static_cast<int>(std::lround(frame_shift_ms * 0.001 * sample_rate));
}

void FeatureConfig::Validate(int sample_rate) const {
  auto fail = [](const std::string &msg) {
    throw ValidationError("feature config: " + msg);
  };
  if (sample_rate <= 0) fail("sample rate must be positive");
  if (!(frame_length_ms > 0.0) || !(frame_shift_ms > 0.0))
    fail("frame length and shift must be positive");
  if (frame_shift_ms > frame_length_ms) fail("frame shift exceeds frame length");
  if (ShiftSamples(sample_rate) < 1) fail("frame shift shorter than one sample");
  if (num_mels < 1) fail("num_mels must be positive");
  if (fft_size < FrameSamples(sample_rate))
    fail("fft_size " + std::to_string(fft_size) + " smaller than frame (" +
         std::to_string(FrameSamples(sample_rate)) + " samples)");
  if (!(preemphasis >= 0.0 && preemphasis < 1.0)) fail("preemphasis must lie in [0, 1)");
  if (!(low_freq >= 0.0 && low_freq < high_freq && high_freq <= 0.5 * sample_rate))
    fail("need 0 <= low_freq < high_freq <= Nyquist");
  if (!(log_floor > 0.0) || !std::isfinite(log_floor)) fail("log_floor must be positive");
}

uint64_t FeatureConfig::Hash() const {
  ByteWriter w;
  w.PutF64(frame_length_ms);
  w.PutF64(frame_shift_ms);
  w.PutI32(num_mels);
  w.PutI32(fft_size);
  w.PutF64(preemphasis);
  w.PutF64(low_freq);
  w.PutF64(high_freq);
  w.PutF64(log_floor);
  return Fnv1a64(w.str());
}

double MelScale(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double InverseMelScale(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

int NumFrames(size_t num_samples, int frame_samples, int shift_samples) {
  if (num_samples < static_cast<size_t>(frame_samples)) return 0;
  return 1 + static_cast<int>((num_samples - frame_samples) / shift_samples);
}

struct MelFilterbank::FftPlan {
  fftw_plan plan = nullptr;
  ~FftPlan() {
    std::lock_guard<std::mutex> lock(FftwPlannerMutex());
    if (plan) fftw_destroy_plan(plan);
  }
};

MelFilterbank::MelFilterbank(const FeatureConfig &config, int sample_rate)
    : config_(config), sample_rate_(sample_rate) {
  config_.Validate(sample_rate);
  frame_samples_ = config_.FrameSamples(sample_rate);
  shift_samples_ = config_.ShiftSamples(sample_rate);

  window_.resize(frame_samples_);
  for (int i = 0; i < frame_samples_; ++i)
    window_[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / (frame_samples_ - 1));

  const int num_bins = config_.fft_size / 2 + 1;
  weights_ = Matrix(config_.num_mels, num_bins);
  const double mel_low = MelScale(config_.low_freq);
  const double mel_high = MelScale(config_.high_freq);
  const double delta = (mel_high - mel_low) / (config_.num_mels + 1);
  for (int j = 0; j < config_.num_mels; ++j) {
    const double left = mel_low + j * delta, center = left + delta,
                 right = center + delta;
    for (int k = 0; k < num_bins; ++k) {
      const double mel = MelScale(static_cast<double>(k) * sample_rate / config_.fft_size);
      if (mel > left && mel <= center)
        weights_(j, k) = (mel - left) / (center - left);
      else if (mel > center && mel < right)
        weights_(j, k) = (right - mel) / (right - center);
    }
  }

  plan_ = std::make_unique<FftPlan>();
  double *in = fftw_alloc_real(config_.fft_size);
  fftw_complex *out = fftw_alloc_complex(num_bins);
  {
    std::lock_guard<std::mutex> lock(FftwPlannerMutex());
    plan_->plan = fftw_plan_dft_r2c_1d(config_.fft_size, in, out, FFTW_ESTIMATE);
  }
  fftw_free(in);
  fftw_free(out);
  if (!plan_->plan) throw RuntimeError("FFTW failed to create a plan");
}

MelFilterbank::~MelFilterbank() = default;

FeatureMatrix MelFilterbank::Compute(const Waveform &wave) const {
  if (wave.sample_rate != sample_rate_)
    throw ValidationError("waveform rate " + std::to_string(wave.sample_rate) +
                          " does not match filterbank rate " +
                          std::to_string(sample_rate_));
  const int frames = NumFrames(wave.samples.size(), frame_samples_, shift_samples_);
  if (frames < 1)
    throw ValidationError("waveform of " + std::to_string(wave.samples.size()) +
                          " samples is shorter than one frame (" +
                          std::to_string(frame_samples_) + ")");
  const int n = config_.fft_size;
  const int num_bins = n / 2 + 1;
  double *in = fftw_alloc_real(n);
  fftw_complex *out = fftw_alloc_complex(num_bins);
  std::vector<double> magnitude(num_bins);
  const double log_floor = std::log(config_.log_floor);

  FeatureMatrix fm;
  fm.data = Matrix(frames, config_.num_mels);
  for (int f = 0; f < frames; ++f) {
    const double *x = wave.samples.data() + static_cast<size_t>(f) * shift_samples_;
    for (int i = frame_samples_ - 1; i > 0; --i)
      in[i] = (x[i] - config_.preemphasis * x[i - 1]) * window_[i];
    in[0] = (x[0] - config_.preemphasis * x[0]) * window_[0];
    for (int i = frame_samples_; i < n; ++i) in[i] = 0.0;
    fftw_execute_dft_r2c(plan_->plan, in, out);
    for (int k = 0; k < num_bins; ++k) magnitude[k] = std::hypot(out[k][0], out[k][1]);
    auto row = fm.data.Row(f);
    for (int j = 0; j < config_.num_mels; ++j) {
      auto w = weights_.Row(j);
      double energy = 0.0;
      for (int k = 0; k < num_bins; ++k) energy += w[k] * magnitude[k];
      row[j] = energy > config_.log_floor ? std::log(energy) : log_floor;
    }
  }
  fftw_free(in);
  fftw_free(out);
  return fm;
}

FeatureMatrix LogMel(const Waveform &wave, const FeatureConfig &config) {
  return MelFilterbank(config, wave.sample_rate).Compute(wave);
}

CmvnStats CmvnFit(std::span<const FeatureMatrix *const> features) {
  if (features.empty()) throw ValidationError("CMVN fit on an empty collection");
  const int dim = features[0]->dim();
  int64_t frames = 0;
  std::vector<double> sum(dim, 0.0);
  for (const FeatureMatrix *fm : features) {
    if (fm->dim() != dim)
      throw ValidationError("CMVN fit on matrices of mixed dimensionality (" +
                            std::to_string(dim) + " vs " + std::to_string(fm->dim()) + ")");
    if (fm->normalized) throw ValidationError("CMVN fit on normalized features");
    for (int t = 0; t < fm->frames(); ++t) {
      auto row = fm->data.Row(t);
      for (int d = 0; d < dim; ++d) sum[d] += row[d];
    }
    frames += fm->frames();
  }
  if (frames < 2) throw ValidationError("CMVN fit needs at least 2 frames");
  CmvnStats stats;
  stats.frame_count = frames;
  stats.mean.resize(dim);
  for (int d = 0; d < dim; ++d) stats.mean[d] = sum[d] / frames;
  std::vector<double> sq(dim, 0.0);
  for (const FeatureMatrix *fm : features) {
    for (int t = 0; t < fm->frames(); ++t) {
      auto row = fm->data.Row(t);
      for (int d = 0; d < dim; ++d) {
        const double c = row[d] - stats.mean[d];
        sq[d] += c * c;
      }
    }
  }
  stats.variance.resize(dim);
  for (int d = 0; d < dim; ++d)
    stats.variance[d] = std::max(sq[d] / frames, kVarianceFloor);
  return stats;
}

CmvnStats CmvnFit(std::span<const FeatureMatrix> features) {
  std::vector<const FeatureMatrix *> ptrs;
  ptrs.reserve(features.size());
  for (const auto &fm : features) ptrs.push_back(&fm);
  return CmvnFit(std::span<const FeatureMatrix *const>(ptrs));
}

FeatureMatrix CmvnApply(const CmvnStats &stats, const FeatureMatrix &fm) {
  if (fm.normalized) throw ValidationError("features are already normalized");
  if (fm.dim() != stats.dim())
    throw ValidationError("CMVN dimension " + std::to_string(stats.dim()) +
                          " does not match features (" + std::to_string(fm.dim()) + ")");
  FeatureMatrix out = fm;
  std::vector<double> inv_std(stats.dim());
  for (int d = 0; d < stats.dim(); ++d) inv_std[d] = 1.0 / std::sqrt(stats.variance[d]);
  for (int t = 0; t < out.frames(); ++t) {
    auto row = out.data.Row(t);
    for (int d = 0; d < stats.dim(); ++d) row[d] = (row[d] - stats.mean[d]) * inv_std[d];
  }
  out.normalized = true;
  return out;
}

}  // namespace cvdetect
