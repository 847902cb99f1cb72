// cvdetect/wav-io.h

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

#ifndef CVDETECT_WAV_IO_H_
#define CVDETECT_WAV_IO_H_

#include <string>
#include <string_view>

#include "cvdetect/corpus.h"

namespace cvdetect {

constexpr int kRequiredSampleRate = 16000;

/// Decodes a RIFF/WAVE buffer. Only mono 16-bit PCM at 16 kHz is
/// accepted; anything else is a ValidationError. Samples are scaled to
/// [-1, 1) by 1/32768.
Waveform DecodeWav(std::string_view bytes, const std::string &source_name);
Waveform ReadWav(const std::string &path);

/// Encodes as mono 16-bit PCM, clipping to the representable range.
std::string EncodeWav(const Waveform &wave);
void WriteWav(const Waveform &wave, const std::string &path);

/// Rounds samples to the 16-bit grid, i.e. DecodeWav(EncodeWav(w)).
Waveform QuantizePcm16(const Waveform &wave);

}  // namespace cvdetect

#endif  // CVDETECT_WAV_IO_H_
