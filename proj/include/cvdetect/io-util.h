// cvdetect/io-util.h

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

#ifndef CVDETECT_IO_UTIL_H_
#define CVDETECT_IO_UTIL_H_

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace cvdetect {

/// Shortest decimal text that parses back to exactly the same double.
std::string FormatDouble(double value);

/// Strict parse: the whole string must be a finite number.
/// Throws ValidationError naming `what` otherwise.
double ParseDouble(std::string_view text, std::string_view what);
int64_t ParseInt(std::string_view text, std::string_view what);

std::vector<std::string> SplitWhitespace(std::string_view line);
std::vector<std::string> Split(std::string_view text, char sep);

std::string ReadFileToString(const std::string &path);

/// Writes to a temporary sibling file and renames it over `path`, so a
/// reader never observes a partially written output.
void WriteFileAtomic(const std::string &path, std::string_view contents);

/// 64-bit FNV-1a.
uint64_t Fnv1a64(std::string_view bytes);

/// Little-endian binary serialization helpers used by the archive,
/// checkpoint and embedding-table formats.
class ByteWriter {
 public:
  void PutU32(uint32_t v);
  void PutU64(uint64_t v);
  void PutI32(int32_t v) { PutU32(static_cast<uint32_t>(v)); }
  void PutF32(float v);
  void PutF64(double v);
  void PutString(std::string_view s);
  void PutBytes(std::string_view s) { buf_.append(s); }

  const std::string &str() const { return buf_; }
  std::string Release() { return std::move(buf_); }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  /// `what` names the data source in error messages.
  ByteReader(std::string_view data, std::string what)
      : data_(data), what_(std::move(what)) {}

  uint32_t GetU32();
  uint64_t GetU64();
  int32_t GetI32() { return static_cast<int32_t>(GetU32()); }
  float GetF32();
  double GetF64();
  std::string GetString();
  std::string_view GetBytes(size_t n);

  bool AtEnd() const { return pos_ == data_.size(); }
  /// Throws unless every byte has been consumed.
  void ExpectEnd() const;
  [[noreturn]] void Fail(const std::string &msg) const;

 private:
  std::string_view data_;
  std::string what_;
  size_t pos_ = 0;
};

}  // namespace cvdetect

#endif  // CVDETECT_IO_UTIL_H_
