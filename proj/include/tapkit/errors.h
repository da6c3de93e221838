// Copyright 2026 The TapKit Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef TAPKIT_ERRORS_H_
#define TAPKIT_ERRORS_H_

#include <stdexcept>
#include <string>

namespace tapkit {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller broke an operation's precondition (shape mismatch, index out of
// range and so on). Indicates a programming error rather than bad data.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

// Malformed input document. The message names the offending node path or
// line number.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Well-formed input that cannot be used: missing assets, version mismatch,
// landscape screenshot, empty crop.
class DataError : public Error {
 public:
  using Error::Error;
};

// Training diverged (nonfinite loss or gradient).
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace tapkit

#endif  // TAPKIT_ERRORS_H_
