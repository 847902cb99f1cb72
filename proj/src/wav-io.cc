// src/wav-io.cc

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

#include "cvdetect/wav-io.h"

#include <algorithm>
#include <cmath>
#include <optional>

#include "cvdetect/error.h"
#include "cvdetect/io-util.h"

namespace cvdetect {

namespace {

int16_t ToPcm16(double x) {
  double v = std::round(x * 32768.0);
  v = std::clamp(v, -32768.0, 32767.0);
  return static_cast<int16_t>(v);
}

}  // namespace

Waveform DecodeWav(std::string_view bytes, const std::string &source_name) {
  ByteReader reader(bytes, source_name);
  if (reader.GetBytes(4) != "RIFF") reader.Fail("not a RIFF file");
  reader.GetU32();
  if (reader.GetBytes(4) != "WAVE") reader.Fail("not a WAVE file");

  std::optional<uint32_t> sample_rate;
  while (!reader.AtEnd()) {
    std::string id(reader.GetBytes(4));
    uint32_t size = reader.GetU32();
    if (id == "fmt ") {
      ByteReader fmt(reader.GetBytes(size), source_name);
      if (size & 1) reader.GetBytes(1);
      uint32_t tag_channels = fmt.GetU32();
      uint32_t format_tag = tag_channels & 0xffff, channels = tag_channels >> 16;
      uint32_t rate = fmt.GetU32();
      fmt.GetU32();  // byte rate
      uint32_t align_bits = fmt.GetU32();
      uint32_t bits = align_bits >> 16;
      if (format_tag != 1)
        throw ValidationError(source_name + ": only PCM WAV is supported");
      if (channels != 1)
        throw ValidationError(source_name + ": expected mono audio, got " +
                              std::to_string(channels) + " channels");
      if (bits != 16)
        throw ValidationError(source_name + ": expected 16-bit samples, got " +
                              std::to_string(bits));
      if (rate != static_cast<uint32_t>(kRequiredSampleRate))
        throw ValidationError(source_name + ": unsupported sample rate " +
                              std::to_string(rate) + " Hz (need " +
                              std::to_string(kRequiredSampleRate) + ")");
      sample_rate = rate;
    } else if (id == "data") {
      if (!sample_rate) reader.Fail("data chunk before fmt chunk");
      std::string_view data = reader.GetBytes(size);
      Waveform wave;
      wave.sample_rate = static_cast<int>(*sample_rate);
      wave.samples.resize(size / 2);
      for (size_t i = 0; i < wave.samples.size(); ++i) {
        uint16_t lo = static_cast<unsigned char>(data[2 * i]);
        uint16_t hi = static_cast<unsigned char>(data[2 * i + 1]);
        int16_t s = static_cast<int16_t>(lo | (hi << 8));
        wave.samples[i] = s / 32768.0;
      }
      return wave;
    } else {
      reader.GetBytes(size + (size & 1));
    }
  }
  reader.Fail("no data chunk");
}

Waveform ReadWav(const std::string &path) {
  return DecodeWav(ReadFileToString(path), path);
}

std::string EncodeWav(const Waveform &wave) {
  const uint32_t data_bytes = static_cast<uint32_t>(wave.samples.size() * 2);
  ByteWriter w;
  w.PutBytes("RIFF");
  w.PutU32(36 + data_bytes);
  w.PutBytes("WAVE");
  w.PutBytes("fmt ");
  w.PutU32(16);
  w.PutU32(1u | (1u << 16));  // PCM, mono
  w.PutU32(static_cast<uint32_t>(wave.sample_rate));
  w.PutU32(static_cast<uint32_t>(wave.sample_rate) * 2);
  w.PutU32(2u | (16u << 16));  // block align, bits per sample
  w.PutBytes("data");
  w.PutU32(data_bytes);
  std::string out = w.Release();
  out.reserve(out.size() + data_bytes);
  for (double x : wave.samples) {
    uint16_t s = static_cast<uint16_t>(ToPcm16(x));
    out.push_back(static_cast<char>(s & 0xff));
    out.push_back(static_cast<char>(s >> 8));
  }
  return out;
}

void WriteWav(const Waveform &wave, const std::string &path) {
  WriteFileAtomic(path, EncodeWav(wave));
}

Waveform QuantizePcm16(const Waveform &wave) {
  Waveform out = wave;
  for (double &x : out.samples) x = ToPcm16(x) / 32768.0;
  return out;
}

}  // namespace cvdetect
