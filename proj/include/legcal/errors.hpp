// Copyright 2026 The legcal Authors
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

#pragma once

#include <stdexcept>
#include <string>

namespace legcal {

enum class ErrorCode {
  kAngleNearPi,
  kNotPD,
  kBoxViolation,
  kLengthMismatch,
  kIkOutOfRange,
  kSchemaVersionMismatch,
  kMalformedRecord,
  kNotFactorizable,
  kConfig,
  kIo,
  kInvalidArgument,
  kSolverDiverged,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what, long line = -1);

  ErrorCode code() const { return code_; }
  // Source line for kMalformedRecord, -1 otherwise.
  long line() const { return line_; }

 private:
  ErrorCode code_;
  long line_;
};

}  // namespace legcal
