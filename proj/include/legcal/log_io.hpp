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

#include <iosfwd>
#include <optional>
#include <string>

#include "legcal/sensor_log.hpp"

namespace legcal {

inline constexpr int kLogFormatVersion = 1;

struct ImportedLog {
  SensorLog log;
  std::optional<TruthBundle> truth;
};

/// Line-oriented text format; numbers use %.17g so a round trip is bit-exact.
void write_log(std::ostream& os, const SensorLog& log, const TruthBundle* truth = nullptr);
/// Throws kSchemaVersionMismatch or kMalformedRecord (with the 1-based line number).
ImportedLog read_log(std::istream& is);

void export_log(const std::string& path, const SensorLog& log, const TruthBundle* truth = nullptr);
ImportedLog import_log(const std::string& path);

}  // namespace legcal
