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

#include "support/fixtures.hpp"

#include <random>

namespace legcal::testing {

GaitScript ScenarioOptions::default_script() {
  GaitScript s;
  s.type = GaitType::kTrot;
  s.dt = 0.01;
  s.speed = 0.4;
  s.lateral_speed = 0.05;
  s.yaw_rate = 0.3;
  s.ramp_time = 0.3;
  s.stride_length = 0.16;
  s.step_height = 0.06;
  s.roll_amplitude = 0.06;
  s.roll_frequency = 0.9;
  s.pitch_amplitude = 0.05;
  s.pitch_frequency = 0.6;
  s.height_amplitude = 0.015;
  s.height_frequency = 1.3;
  return s;
}

Eigen::VectorXd make_theta(const ParamLayout& layout, const NoiseLevels& lv, bool offsets) {
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(layout.size());
  const double stds[kNumCovBlocks] = {lv.q_p,  lv.q_a,  lv.q_w,       lv.q_foot,
                                      lv.q_ba, lv.q_bw, lv.r_alpha, lv.r_alphadot};
  for (int b = 0; b < kNumCovBlocks; ++b) {
    set_covariance_block(theta, layout, static_cast<CovBlock>(b),
                         stds[b] * stds[b] * Matrix3::Identity());
  }
  if (offsets) {
    for (int j = 0; j < layout.n_legs(); ++j) theta.segment<3>(layout.foot_offset(j)) = kFootOffset;
    theta.segment<3>(layout.base_offset()) = kBaseOffset;
  }
  return theta;
}

std::unique_ptr<Scenario> make_scenario(const ScenarioOptions& o) {
  auto sc = std::make_unique<Scenario>();
  sc->layout = ParamLayout(sc->robot.num_legs(), o.mode);
  sc->theta_true = make_theta(sc->layout, o.levels, o.offsets);

  GaitScript script = o.script;
  script.duration = o.steps * script.dt;
  const TruthTrajectory truth =
      generate_trajectory(script, sc->robot, theta_feet(sc->theta_true, sc->layout));
  Eigen::VectorXd theta_gen = sc->theta_true;
  if (!o.noise) theta_gen.head(sc->layout.cov_size()).setZero();
  SynthesisOptions syn;
  syn.accel_bias0 = Vector3(0.05, -0.03, 0.02);
  syn.gyro_bias0 = Vector3(2e-3, -1e-3, 1.5e-3);
  sc->data = synthesize_sensors(truth, theta_gen, sc->layout, sc->robot, o.seed, syn);
  sc->data.truth.theta = sc->theta_true;

  EstimationProblem& p = sc->problem;
  p.robot = &sc->robot;
  p.log = sc->data.log;
  p.layout = sc->layout;
  p.theta = sc->theta_true;
  p.prior_mean = sc->data.truth.states.front();
  p.prior = PriorCov::defaults(sc->robot.num_legs());
  return sc;
}

std::unique_ptr<Scenario> standard_fd_scenario() {
  ScenarioOptions o;
  o.steps = 50;
  o.seed = 11;
  return make_scenario(o);
}

GaitScript calibration_script() {
  GaitScript s = ScenarioOptions::default_script();
  s.lateral_speed = 0.15;
  s.yaw_rate = 0.8;
  s.roll_amplitude = 0.12;
  s.pitch_amplitude = 0.1;
  s.height_amplitude = 0.03;
  return s;
}

std::unique_ptr<Scenario> standard_calibration_scenario(std::uint64_t seed) {
  ScenarioOptions o;
  o.steps = 300;
  o.seed = seed;
  o.script = calibration_script();
  o.levels.r_alphadot = 0.005;
  return make_scenario(o);
}

SolverOptions tight_solver() {
  SolverOptions s;
  s.grad_tol = 0.0;
  s.scaled_grad_tol = 1e-12;
  s.rel_cost_tol = 0.0;
  s.step_tol = 1e-12;
  s.polish_steps = 3;
  s.max_iterations = 60;
  return s;
}

Eigen::VectorXd random_tangent(int size, double scale, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  Eigen::VectorXd v(size);
  for (int i = 0; i < size; ++i) v[i] = u(rng);
  return v;
}

}  // namespace legcal::testing
