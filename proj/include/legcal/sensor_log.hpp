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

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "legcal/manifold.hpp"

namespace legcal {

struct ImuSample {
  double t = 0.0;
  Vector3 accel = Vector3::Zero();
  Vector3 gyro = Vector3::Zero();
};

struct LegSample {
  std::vector<Vector3> alpha;
  std::vector<Vector3> alpha_dot;
  std::vector<std::uint8_t> contact;

  LegSample() = default;
  explicit LegSample(int n_legs)
      : alpha(n_legs, Vector3::Zero()), alpha_dot(n_legs, Vector3::Zero()), contact(n_legs, 0) {}
};

/// Motion-capture ground truth: marker pose and base velocity (world frame).
struct MocapSample {
  Pose pose;
  Vector3 velocity = Vector3::Zero();
};

struct SensorLog {
  double dt = 0.01;
  int n_legs = 4;
  std::uint64_t robot_hash = 0;
  std::vector<ImuSample> imu;
  std::vector<LegSample> legs;
  std::vector<MocapSample> mocap;

  std::size_t size() const { return imu.size(); }
  /// Copy of samples [begin, begin + count).
  SensorLog segment(std::size_t begin, std::size_t count) const;
};

struct TruthBundle {
  std::uint64_t seed = 0;
  Eigen::VectorXd theta;
  std::vector<ManifoldState> states;

  TruthBundle segment(std::size_t begin, std::size_t count) const;
};

}  // namespace legcal
