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
#include <memory>
#include <vector>

#include "legcal/covariance.hpp"
#include "legcal/datagen.hpp"
#include "legcal/estimator.hpp"
#include "legcal/robot.hpp"

namespace legcal::testing {

/// Generating noise levels (standard deviations), identical on all three axes.
struct NoiseLevels {
  double q_p = 1e-3;
  double q_a = 0.05;
  double q_w = 5e-3;
  double q_foot = 1e-3;
  double q_ba = 1e-3;
  double q_bw = 1e-4;
  double r_alpha = 1e-3;
  double r_alphadot = 0.05;
};

inline const Vector3 kFootOffset(0.01, -0.005, 0.02);
inline const Vector3 kBaseOffset(0.05, 0.02, 0.03);

struct ScenarioOptions {
  int steps = 50;  // horizon T (log has T+1 samples)
  std::uint64_t seed = 7;
  bool noise = true;
  bool offsets = true;
  NoiseLevels levels;
  CovMode mode = CovMode::kDiagonal;
  GaitScript script = default_script();

  static GaitScript default_script();
};

/// theta with the given stds and (optionally) the injected offsets.
Eigen::VectorXd make_theta(const ParamLayout& layout, const NoiseLevels& levels, bool offsets);

/// A synthetic log with truth plus a ready-to-solve problem at the generating theta.
struct Scenario {
  RobotKinematics robot{RobotDescription::default_quadruped()};
  ParamLayout layout;
  Eigen::VectorXd theta_true;
  SynthesisResult data;
  EstimationProblem problem;  // theta = theta_true, prior at the true x_0

  Scenario() = default;
  Scenario(const Scenario&) = delete;
  Scenario& operator=(const Scenario&) = delete;
};

std::unique_ptr<Scenario> make_scenario(const ScenarioOptions& options = {});

/// The T=50 problem used by the finite-difference checks.
std::unique_ptr<Scenario> standard_fd_scenario();
/// Trot with lateral, yaw, roll, pitch and height excitation.
GaitScript calibration_script();
/// The calibration problem (T=300) with injected offsets and joint-rate noise 0.005 rad/s.
std::unique_ptr<Scenario> standard_calibration_scenario(std::uint64_t seed = 7);

/// Tight solver settings for finite-difference probes.
SolverOptions tight_solver();

/// Random tangent perturbation with entries in [-scale, scale].
Eigen::VectorXd random_tangent(int size, double scale, std::uint64_t seed);

}  // namespace legcal::testing
