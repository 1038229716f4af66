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

#include "legcal/sensor_log.hpp"

#include "legcal/errors.hpp"

namespace legcal {

namespace {

template <typename V>
V slice(const V& v, std::size_t begin, std::size_t count) {
  if (begin + count > v.size()) throw Error(ErrorCode::kLengthMismatch, "segment out of range");
  return V(v.begin() + static_cast<std::ptrdiff_t>(begin),
           v.begin() + static_cast<std::ptrdiff_t>(begin + count));
}

}  // namespace

SensorLog SensorLog::segment(std::size_t begin, std::size_t count) const {
  SensorLog out;
  out.dt = dt;
  out.n_legs = n_legs;
  out.robot_hash = robot_hash;
  out.imu = slice(imu, begin, count);
  out.legs = slice(legs, begin, count);
  if (!mocap.empty()) out.mocap = slice(mocap, begin, count);
  return out;
}

TruthBundle TruthBundle::segment(std::size_t begin, std::size_t count) const {
  TruthBundle out;
  out.seed = seed;
  out.theta = theta;
  out.states = slice(states, begin, count);
  return out;
}

}  // namespace legcal
