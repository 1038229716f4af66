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

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "legcal/calibrator.hpp"
#include "legcal/covariance.hpp"
#include "legcal/datagen.hpp"
#include "legcal/estimator.hpp"
#include "legcal/metrics.hpp"
#include "legcal/robot.hpp"

namespace legcal {

/// Per-block standard deviations, identical on the three axes, in CovBlock order.
using BlockStds = std::array<double, kNumCovBlocks>;

/// theta with diagonal covariances std^2 I, one foot offset per leg and the base offset.
Eigen::VectorXd theta_from_stds(const ParamLayout& layout, const BlockStds& stds,
                                const std::vector<Vector3>& foot_offsets,
                                const Vector3& base_offset);

// Robot description files (JSON with "schema_version").
RobotDescription parse_robot(const std::string& json_text, const std::string& origin = "<string>");
std::string robot_to_json(const RobotDescription& robot);
/// Throws kIo (naming the path), kConfig or kSchemaVersionMismatch.
RobotDescription load_robot(const std::string& path);
void save_robot(const std::string& path, const RobotDescription& robot);

struct GenerateConfig {
  GaitScript script;
  BlockStds noise_std = {1e-3, 0.05, 5e-3, 1e-3, 1e-3, 1e-4, 1e-3, 0.05};
  std::vector<Vector3> foot_offsets;  // one per leg, or a single entry for all legs
  Vector3 base_offset = Vector3::Zero();
  Vector3 accel_bias0 = Vector3::Zero();
  Vector3 gyro_bias0 = Vector3::Zero();
  std::uint64_t seed = 0;
  CovMode mode = CovMode::kDiagonal;
};

/// Samples of a log fed to the estimator; count 0 means to the end.
struct Segment {
  std::size_t begin = 0;
  std::size_t count = 0;
};

struct CalibrationConfig {
  CovMode mode = CovMode::kDiagonal;
  BlockStds initial_std = {1e-3, 0.05, 5e-3, 1e-3, 1e-3, 1e-4, 1e-3, 0.05};
  Vector3 initial_foot_offset = Vector3::Zero();
  Vector3 initial_base_offset = Vector3::Zero();
  std::array<double, kNumCovBlocks> cov_upper = {0.05, 1.0, 0.1, 0.05, 0.05, 5e-3, 0.05, 1.0};
  double offset_bound = 0.1;
  double pd_floor = 1e-6;
  std::optional<std::vector<double>> prior_std;  // tangent-dimension entries
  SolverOptions solver;
  FrankWolfeOptions frank_wolfe;
  Segment segment;
  Segment evaluation_segment;
  double gradcheck_eps = 1e-5;
  double gradcheck_tol = 1e-3;
  std::vector<int> gradcheck_components;  // all when empty
};

GenerateConfig parse_generate_config(const std::string& json_text,
                                     const std::string& origin = "<string>");
GenerateConfig load_generate_config(const std::string& path);
CalibrationConfig parse_calibration_config(const std::string& json_text,
                                           const std::string& origin = "<string>");
CalibrationConfig load_calibration_config(const std::string& path);

/// Initial theta and feasible set described by a calibration config.
Eigen::VectorXd initial_theta(const CalibrationConfig& config, const ParamLayout& layout);
FeasibleSet feasible_set(const CalibrationConfig& config, const ParamLayout& layout);

// Theta files: flattened vector plus the layout schema hash.
std::string theta_to_json(const Eigen::VectorXd& theta, const ParamLayout& layout);
/// Throws kSchemaVersionMismatch when the stored hash differs from the layout's.
Eigen::VectorXd parse_theta(const std::string& json_text, const ParamLayout& layout,
                            const std::string& origin = "<string>");
void save_theta(const std::string& path, const Eigen::VectorXd& theta, const ParamLayout& layout);
Eigen::VectorXd load_theta(const std::string& path, const ParamLayout& layout);

/// One row per trace record: scalars then theta columns, numbers with 17 significant digits.
std::string trace_to_csv(const CalibrationTrace& trace, const ParamLayout& layout);
/// k, t, rotation vector, position, velocity, biases, feet.
std::string trajectory_to_csv(const std::vector<ManifoldState>& X, double dt);

struct MetricsReport {
  std::string command;
  bool converged = true;
  std::string stop_reason;
  std::optional<TrajectoryErrors> errors;
  std::optional<TrajectoryErrors> errors_before;  // at the initial theta
  std::optional<double> loss;
  std::optional<double> grad_norm;
  int iterations = 0;          // outer iterations (calibrate) or estimator iterations
  int solver_iterations = 0;   // estimator iterations, summed
  std::vector<std::string> theta_names;
  std::vector<double> theta_error;  // theta - theta_true, when truth is known
  double wall_clock_s = 0.0;
};

/// Keys in a fixed order; doubles in shortest round-trip form.
std::string report_to_json(const MetricsReport& report);

void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

/// Problem on samples [segment) of the log. The prior mean is the truth state at the segment
/// start when truth is given, else the first mocap sample (position corrected by theta_base,
/// feet by forward kinematics, zero biases).
EstimationProblem make_problem(const RobotKinematics& robot, const SensorLog& log,
                               const ParamLayout& layout, const Eigen::VectorXd& theta,
                               const Segment& segment = {}, const TruthBundle* truth = nullptr,
                               const std::optional<std::vector<double>>& prior_std = {});

}  // namespace legcal
