// cvdetect/error.h

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

#ifndef CVDETECT_ERROR_H_
#define CVDETECT_ERROR_H_

#include <stdexcept>
#include <string>

namespace cvdetect {

/// Bad input: malformed files, violated preconditions, out-of-range
/// parameters. The CLI maps this to exit status 1.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string &what)
      : std::runtime_error(what) {}
};

/// Failure while running on valid input (I/O, non-finite values during
/// training). The CLI maps this to exit status 2.
class RuntimeError : public std::runtime_error {
 public:
  explicit RuntimeError(const std::string &what)
      : std::runtime_error(what) {}
};

}  // namespace cvdetect

#endif  // CVDETECT_ERROR_H_
