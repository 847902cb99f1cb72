// src/feature-archive.cc

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

#include "cvdetect/feature-archive.h"

#include <cmath>
#include <exception>
#include <thread>

#include "cvdetect/error.h"
#include "cvdetect/io-util.h"

namespace cvdetect {

namespace {

constexpr char kMagic[] = "CVFA";
constexpr uint32_t kVersion = 1;

}  // namespace

std::string SerializeFeatureArchive(const FeatureArchive &a) {
  ByteWriter w;
  w.PutBytes(std::string_view(kMagic, 4));
  w.PutU32(kVersion);
  w.PutU32(static_cast<uint32_t>(a.sample_rate));
  w.PutF64(a.config.frame_length_ms);
  w.PutF64(a.config.frame_shift_ms);
  w.PutI32(a.config.num_mels);
  w.PutI32(a.config.fft_size);
  w.PutF64(a.config.preemphasis);
  w.PutF64(a.config.low_freq);
  w.PutF64(a.config.high_freq);
  w.PutF64(a.config.log_floor);
  w.PutU64(a.config.Hash());
  w.PutU32(a.cmvn ? 1 : 0);
  if (a.cmvn) {
    w.PutU32(static_cast<uint32_t>(a.cmvn->dim()));
    w.PutU64(static_cast<uint64_t>(a.cmvn->frame_count));
    for (double m : a.cmvn->mean) w.PutF64(m);
    for (double v : a.cmvn->variance) w.PutF64(v);
  }
  w.PutU32(static_cast<uint32_t>(a.features.size()));
  for (const auto &[id, fm] : a.features) {
    if (fm.normalized)
      throw ValidationError("feature archive stores unnormalized features only ('" + id + "')");
    w.PutString(id);
    w.PutU32(static_cast<uint32_t>(fm.frames()));
    w.PutU32(static_cast<uint32_t>(fm.dim()));
    for (double v : fm.data.values()) w.PutF32(static_cast<float>(v));
  }
  return w.Release();
}

FeatureArchive DeserializeFeatureArchive(std::string_view bytes,
                                         const std::string &source_name) {
  ByteReader r(bytes, source_name);
  if (r.GetBytes(4) != std::string_view(kMagic, 4)) r.Fail("not a feature archive");
  uint32_t version = r.GetU32();
  if (version != kVersion)
    r.Fail("unsupported feature archive version " + std::to_string(version));
  FeatureArchive a;
  a.sample_rate = static_cast<int>(r.GetU32());
  a.config.frame_length_ms = r.GetF64();
  a.config.frame_shift_ms = r.GetF64();
  a.config.num_mels = r.GetI32();
  a.config.fft_size = r.GetI32();
  a.config.preemphasis = r.GetF64();
  a.config.low_freq = r.GetF64();
  a.config.high_freq = r.GetF64();
  a.config.log_floor = r.GetF64();
  if (r.GetU64() != a.config.Hash()) r.Fail("feature config hash mismatch");
  a.config.Validate(a.sample_rate);
  uint32_t has_cmvn = r.GetU32();
  if (has_cmvn > 1) r.Fail("bad CMVN flag");
  if (has_cmvn) {
    CmvnStats s;
    uint32_t dim = r.GetU32();
    s.frame_count = static_cast<int64_t>(r.GetU64());
    s.mean.resize(dim);
    s.variance.resize(dim);
    for (auto &m : s.mean) m = r.GetF64();
    for (auto &v : s.variance) {
      v = r.GetF64();
      if (!(v > 0.0)) r.Fail("non-positive CMVN variance");
    }
    a.cmvn = std::move(s);
  }
  uint32_t count = r.GetU32();
  std::string prev;
  for (uint32_t i = 0; i < count; ++i) {
    std::string id = r.GetString();
    if (i > 0 && !(prev < id)) r.Fail("entries not sorted by id");
    uint32_t rows = r.GetU32(), cols = r.GetU32();
    if (rows == 0 || cols != static_cast<uint32_t>(a.config.num_mels))
      r.Fail("bad matrix shape for '" + id + "'");
    FeatureMatrix fm;
    fm.data = Matrix(static_cast<int>(rows), static_cast<int>(cols));
    for (double &v : fm.data.values()) {
      v = r.GetF32();
      if (!std::isfinite(v)) r.Fail("non-finite feature value in '" + id + "'");
    }
    a.features.emplace_hint(a.features.end(), id, std::move(fm));
    prev = std::move(id);
  }
  r.ExpectEnd();
  return a;
}

void SaveFeatureArchive(const FeatureArchive &archive, const std::string &path) {
  WriteFileAtomic(path, SerializeFeatureArchive(archive));
}

FeatureArchive LoadFeatureArchive(const std::string &path) {
  return DeserializeFeatureArchive(ReadFileToString(path), path);
}

FeatureTable FeaturizeRecords(const CorpusManifest &manifest,
                              const AudioSource &audio,
                              const FeatureConfig &config, int threads) {
  // Records sharing a recording are processed together.
  std::map<std::string, std::vector<const SegmentRecord *>> by_audio;
  for (const auto &r : manifest.records) by_audio[r.audio_ref].push_back(&r);
  std::vector<const std::vector<const SegmentRecord *> *> jobs;
  for (const auto &[ref, recs] : by_audio) jobs.push_back(&recs);

  const int num_workers = std::max(1, std::min<int>(threads, static_cast<int>(jobs.size())));
  std::vector<FeatureTable> partial(num_workers);
  std::vector<std::exception_ptr> errors(num_workers);
  auto work = [&](int worker) {
    try {
      std::map<int, std::unique_ptr<MelFilterbank>> banks;
      for (size_t j = worker; j < jobs.size(); j += num_workers) {
        const auto &recs = *jobs[j];
        Waveform wave = audio.Load(recs.front()->audio_ref);
        for (const SegmentRecord *rec : recs) {
          auto &bank = banks[rec->sample_rate];
          if (!bank) bank = std::make_unique<MelFilterbank>(config, rec->sample_rate);
          FeatureMatrix fm;
          try {
            fm = bank->Compute(SliceSegment(wave, *rec));
          } catch (const ValidationError &e) {
            throw ValidationError("record '" + rec->id + "': " + e.what());
          }
          for (double &v : fm.data.values()) v = static_cast<float>(v);
          partial[worker].emplace(rec->id, std::move(fm));
        }
      }
    } catch (...) {
      errors[worker] = std::current_exception();
    }
  };
  if (num_workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < num_workers; ++w) pool.emplace_back(work, w);
    for (auto &t : pool) t.join();
  }
  for (auto &e : errors)
    if (e) std::rethrow_exception(e);
  FeatureTable out;
  for (auto &p : partial) out.merge(p);
  return out;
}

CmvnStats FitTrainingCmvn(const CorpusManifest &manifest,
                          const FeatureTable &features) {
  std::vector<const FeatureMatrix *> train;
  for (const auto &r : manifest.records) {
    if (r.group != Group::kTrainTd) continue;
    auto it = features.find(r.id);
    if (it == features.end())
      throw ValidationError("no features for training record '" + r.id + "'");
    train.push_back(&it->second);
  }
  if (train.empty()) throw ValidationError("no training records for CMVN fit");
  return CmvnFit(std::span<const FeatureMatrix *const>(train));
}

}  // namespace cvdetect
