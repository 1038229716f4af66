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
#include <vector>

#include <Eigen/Core>

#include "legcal/covariance.hpp"
#include "legcal/robot.hpp"
#include "legcal/sensor_log.hpp"

namespace legcal {

enum class GaitType { kStand, kTrot };

struct GaitScript {
  double duration = 3.0;  // s
  double dt = 0.01;       // s
  GaitType type = GaitType::kTrot;
  double stride_length = 0.15;  // m
  double step_height = 0.06;    // m
  double speed = 0.3;           // peak forward speed, m/s
  double lateral_speed = 0.0;   // m/s
  double yaw_rate = 0.0;        // rad/s
  double ramp_time = 0.5;       // smoothstep ramp of speeds, s
  double body_height = 0.28;    // m
  double roll_amplitude = 0.0;  // rad
  double roll_frequency = 0.0;  // Hz
  double pitch_amplitude = 0.0;
  double pitch_frequency = 0.0;
  double height_amplitude = 0.0;  // m
  double height_frequency = 0.0;

  void validate() const;
  std::size_t num_samples() const;
  /// Trot gait period; zero for stand.
  double gait_period() const;
};

/// Noise-free kinematic truth. Sample k spans [t_k, t_k + dt); biases are zero here.
struct TruthTrajectory {
  double dt = 0.01;
  std::vector<ManifoldState> states;
  std::vector<LegSample> legs;          // true joint angles/rates and contacts
  std::vector<Vector3> body_rate;       // Log(R_k^T R_{k+1}) / dt
  std::vector<Vector3> accel_world;     // (v_{k+1} - v_k) / dt
  std::vector<Vector3> foot_velocity;   // leg-major per sample (n_legs per k)
};

/// Feet of theta_foot_true are the contact points the joint angles place on the ground.
TruthTrajectory generate_trajectory(const GaitScript& script, const RobotKinematics& robot,
                                    const std::vector<Vector3>& theta_foot_true = {});

struct SynthesisOptions {
  Vector3 gravity = Vector3(0.0, 0.0, -9.81);
  Vector3 accel_bias0 = Vector3::Zero();
  Vector3 gyro_bias0 = Vector3::Zero();
};

struct SynthesisResult {
  SensorLog log;
  TruthBundle truth;
};

/// IMU/encoder noise and bias walks drawn from theta_true's blocks; mocap offset by theta_base.
/// Q_p and Q_foot are not used: the truth has no position noise and no foot slip.
SynthesisResult synthesize_sensors(const TruthTrajectory& truth, const Eigen::VectorXd& theta_true,
                                   const ParamLayout& layout, const RobotKinematics& robot,
                                   std::uint64_t seed, const SynthesisOptions& options = {});

}  // namespace legcal
