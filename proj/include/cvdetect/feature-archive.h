// cvdetect/feature-archive.h

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

#ifndef CVDETECT_FEATURE_ARCHIVE_H_
#define CVDETECT_FEATURE_ARCHIVE_H_

#include <map>
#include <optional>
#include <string>

#include "cvdetect/corpus.h"
#include "cvdetect/dsp.h"

namespace cvdetect {

using FeatureTable = std::map<std::string, FeatureMatrix>;

/**
   Binary container of unnormalized log-mel matrices keyed by record id.

   Layout (little endian):
     "CVFA" magic, u32 version (=1)
     u32 sample_rate, FeatureConfig fields, u64 config hash
     u8-in-u32 has_cmvn; if set: u32 dim, u64 frame_count,
       dim f64 means, dim f64 variances
     u32 entry count; per entry (sorted by id):
       string id, u32 rows, u32 cols, rows*cols f32 row-major values

   Values are stored as 32-bit floats. FeaturizeRecords() already rounds
   through float, so an archive survives save -> load -> save unchanged.
 */
struct FeatureArchive {
  FeatureConfig config;
  int sample_rate = 16000;
  FeatureTable features;
  std::optional<CmvnStats> cmvn;
};

std::string SerializeFeatureArchive(const FeatureArchive &archive);
FeatureArchive DeserializeFeatureArchive(std::string_view bytes,
                                         const std::string &source_name);
void SaveFeatureArchive(const FeatureArchive &archive, const std::string &path);
FeatureArchive LoadFeatureArchive(const std::string &path);

/// Slices each record from its recording and computes log-mel features,
/// rounded to float precision. Recordings are loaded once per audio_ref.
/// `threads` > 1 splits records across worker threads; results do not
/// depend on the thread count.
FeatureTable FeaturizeRecords(const CorpusManifest &manifest,
                              const AudioSource &audio,
                              const FeatureConfig &config, int threads = 1);

/// Fits CMVN over TRAIN_TD records present in `features`.
CmvnStats FitTrainingCmvn(const CorpusManifest &manifest,
                          const FeatureTable &features);

}  // namespace cvdetect

#endif  // CVDETECT_FEATURE_ARCHIVE_H_
