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

#include "legcal/errors.hpp"

namespace legcal {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kAngleNearPi: return "AngleNearPi";
    case ErrorCode::kNotPD: return "NotPD";
    case ErrorCode::kBoxViolation: return "BoxViolation";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kIkOutOfRange: return "IkOutOfRange";
    case ErrorCode::kSchemaVersionMismatch: return "SchemaVersionMismatch";
    case ErrorCode::kMalformedRecord: return "MalformedRecord";
    case ErrorCode::kNotFactorizable: return "NotFactorizable";
    case ErrorCode::kConfig: return "ConfigError";
    case ErrorCode::kIo: return "IoError";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kSolverDiverged: return "SolverDiverged";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& what, long line)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), line_(line) {}

}  // namespace legcal
