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

#include "legcal/datagen.hpp"

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "legcal/errors.hpp"

namespace legcal {

namespace {

double smoothstep(double u) { return u * u * (3.0 - 2.0 * u); }

struct Profile {
  const GaitScript& s;

  double ramp(double t) const {
    if (s.ramp_time <= 0.0 || t >= s.ramp_time) return 1.0;
    return smoothstep(std::max(t, 0.0) / s.ramp_time);
  }
  double ramp_integral(double t) const {
    const double tau = s.ramp_time;
    if (tau <= 0.0) return t;
    if (t >= tau) return 0.5 * tau + (t - tau);
    const double u = t / tau;
    return tau * (u * u * u - 0.5 * u * u * u * u);
  }
  double speed_scale() const { return s.type == GaitType::kStand ? 0.0 : 1.0; }
  double yaw(double t) const { return speed_scale() * s.yaw_rate * ramp_integral(t); }

  static double osc(double amp, double freq, double t) {
    return amp * std::sin(2.0 * M_PI * freq * t);
  }
  static double osc_rate(double amp, double freq, double t) {
    return amp * 2.0 * M_PI * freq * std::cos(2.0 * M_PI * freq * t);
  }

  Matrix3 yaw_matrix(double t) const {
    return Eigen::AngleAxisd(yaw(t), Vector3::UnitZ()).toRotationMatrix();
  }
  Matrix3 rotation(double t) const {
    return yaw_matrix(t) *
           Eigen::AngleAxisd(osc(s.pitch_amplitude, s.pitch_frequency, t), Vector3::UnitY())
               .toRotationMatrix() *
           Eigen::AngleAxisd(osc(s.roll_amplitude, s.roll_frequency, t), Vector3::UnitX())
               .toRotationMatrix();
  }
  Vector3 velocity(double t) const {
    const double r = speed_scale() * ramp(t);
    Vector3 v = yaw_matrix(t) * Vector3(r * s.speed, r * s.lateral_speed, 0.0);
    v.z() = osc_rate(s.height_amplitude, s.height_frequency, t);
    return v;
  }
};

// Contact of leg j at time t: diagonal pairs {0, 3} and {1, 2} alternate.
bool in_stance(const GaitScript& s, int leg, double t) {
  if (s.type == GaitType::kStand) return true;
  const double period = s.gait_period();
  const double phase = t / period - std::floor(t / period);
  const bool pair_a = (leg % 4 == 0 || leg % 4 == 3);
  return pair_a ? phase < 0.5 : phase >= 0.5;
}

}  // namespace

void GaitScript::validate() const {
  if (!(duration > 0.0)) throw Error(ErrorCode::kConfig, "duration must be positive");
  if (!(dt >= 0.002 && dt <= 0.02)) throw Error(ErrorCode::kConfig, "dt outside [0.002, 0.02]");
  if (!(body_height > 0.0)) throw Error(ErrorCode::kConfig, "body_height must be positive");
  if (type == GaitType::kTrot) {
    if (!(speed > 0.0)) throw Error(ErrorCode::kConfig, "trot needs a positive speed");
    if (!(stride_length > 0.0)) throw Error(ErrorCode::kConfig, "trot needs a positive stride");
    if (!(step_height >= 0.0)) throw Error(ErrorCode::kConfig, "step_height must be >= 0");
    if (gait_period() < 4.0 * dt) throw Error(ErrorCode::kConfig, "gait period too short for dt");
  }
  if (ramp_time < 0.0) throw Error(ErrorCode::kConfig, "ramp_time must be >= 0");
}

std::size_t GaitScript::num_samples() const {
  return static_cast<std::size_t>(std::llround(duration / dt)) + 1;
}

double GaitScript::gait_period() const {
  return type == GaitType::kStand ? 0.0 : stride_length / speed;
}

TruthTrajectory generate_trajectory(const GaitScript& script, const RobotKinematics& robot,
                                    const std::vector<Vector3>& theta_foot_true) {
  script.validate();
  const int n_legs = robot.num_legs();
  std::vector<Vector3> offsets = theta_foot_true;
  if (offsets.empty()) offsets.assign(n_legs, Vector3::Zero());
  if (static_cast<int>(offsets.size()) != n_legs) {
    throw Error(ErrorCode::kLengthMismatch, "theta_foot_true size");
  }

  const Profile prof{script};
  const double dt = script.dt;
  const std::size_t n = script.num_samples();
  const std::size_t margin =
      script.type == GaitType::kTrot
          ? static_cast<std::size_t>(std::ceil(0.5 * script.gait_period() / dt)) + 3
          : 2;
  const std::size_t total = n + margin;

  // Base: analytic rotation and velocity, positions integrated so the IMU model is exact.
  std::vector<Matrix3> R(total);
  std::vector<Vector3> v(total), p(total);
  for (std::size_t k = 0; k < total; ++k) {
    const double t = static_cast<double>(k) * dt;
    R[k] = prof.rotation(t);
    v[k] = prof.velocity(t);
  }
  p[0] = Vector3(0.0, 0.0, script.body_height);
  for (std::size_t k = 0; k + 1 < total; ++k) p[k + 1] = p[k] + 0.5 * dt * (v[k] + v[k + 1]);

  auto foothold = [&](int leg, std::size_t k) {
    const Vector3 nom = robot.nominal_stance(leg);
    const double t = static_cast<double>(k) * dt;
    Vector3 f = p[k] + prof.yaw_matrix(t) * Vector3(nom.x(), nom.y(), 0.0);
    if (script.type == GaitType::kTrot) f += 0.25 * script.gait_period() * v[k];
    f.z() = 0.0;
    return f;
  };

  // Feet: fixed in stance, smoothstep + sine arc in swing.
  std::vector<std::vector<Vector3>> feet(total, std::vector<Vector3>(n_legs));
  std::vector<std::vector<Vector3>> foot_vel(total, std::vector<Vector3>(n_legs, Vector3::Zero()));
  std::vector<std::vector<std::uint8_t>> contact(total, std::vector<std::uint8_t>(n_legs));
  for (int j = 0; j < n_legs; ++j) {
    for (std::size_t k = 0; k < total; ++k) {
      contact[k][j] = in_stance(script, j, static_cast<double>(k) * dt) ? 1 : 0;
    }
    Vector3 f_prev = foothold(j, 0);
    f_prev -= (script.type == GaitType::kTrot ? 0.25 * script.gait_period() : 0.0) * v[0];
    f_prev.z() = 0.0;
    std::size_t k = 0;
    while (k < total) {
      if (contact[k][j]) {
        feet[k][j] = f_prev;
        ++k;
        continue;
      }
      // Swing run [k, kb); touchdown at kb.
      std::size_t kb = k;
      while (kb < total && !contact[kb][j]) ++kb;
      const std::size_t ka = k;  // lift-off sample index (last stance is ka - 1)
      const std::size_t kt = std::min(kb, total - 1);
      const Vector3 f_next = foothold(j, kt);
      const double span = static_cast<double>(kb - ka + 1) * dt;
      for (std::size_t i = ka; i < kb; ++i) {
        const double tau = static_cast<double>(i - ka + 1) * dt / span;
        const double s = smoothstep(tau), ds = 6.0 * tau * (1.0 - tau) / span;
        feet[i][j] = f_prev + s * (f_next - f_prev);
        feet[i][j].z() += script.step_height * std::sin(M_PI * tau);
        foot_vel[i][j] = ds * (f_next - f_prev);
        foot_vel[i][j].z() += script.step_height * M_PI * std::cos(M_PI * tau) / span;
      }
      f_prev = f_next;
      k = kb;
    }
  }

  TruthTrajectory out;
  out.dt = dt;
  out.states.reserve(n);
  out.legs.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    ManifoldState x(n_legs);
    x.pose = Pose(Rotation::from_matrix(R[k]), p[k]);
    x.velocity = v[k];
    x.feet = feet[k];
    // Rates taken from the rotation actually stored so the process model closes exactly.
    const Matrix3 Rk = x.pose.rotation.matrix();
    const Matrix3 Rk1 = Rotation::from_matrix(R[k + 1]).matrix();
    const Vector3 w = lie::log_so3<double>(Rk.transpose() * Rk1) / dt;
    out.body_rate.push_back(w);
    out.accel_world.push_back((v[k + 1] - v[k]) / dt);

    LegSample legs(n_legs);
    for (int j = 0; j < n_legs; ++j) {
      const Vector3 body = Rk.transpose() * (feet[k][j] - p[k]);
      const Vector3 a = robot.inverse_kinematics(body, j, offsets[j]);
      const Vector3 fk = robot.forward_kinematics(a, j, offsets[j]);
      const Matrix3 J = robot.leg_jacobian(a, j, offsets[j]);
      const Vector3 rhs = Rk.transpose() * (foot_vel[k][j] - v[k]) - w.cross(fk);
      legs.alpha[j] = a;
      legs.alpha_dot[j] = J.partialPivLu().solve(rhs);
      legs.contact[j] = contact[k][j];
      out.foot_velocity.push_back(foot_vel[k][j]);
    }
    out.states.push_back(std::move(x));
    out.legs.push_back(std::move(legs));
  }
  return out;
}

SynthesisResult synthesize_sensors(const TruthTrajectory& truth, const Eigen::VectorXd& theta_true,
                                   const ParamLayout& layout, const RobotKinematics& robot,
                                   std::uint64_t seed, const SynthesisOptions& options) {
  if (theta_true.size() != layout.size()) throw Error(ErrorCode::kLengthMismatch, "theta size");
  const int n_legs = robot.num_legs();
  if (layout.n_legs() != n_legs) throw Error(ErrorCode::kLengthMismatch, "layout legs");
  const std::size_t n = truth.states.size();

  auto factor = [&](CovBlock b) {
    return cholesky_factor<double>(theta_true.data() + layout.cov_offset(b), layout.mode());
  };
  const Matrix3 La = factor(CovBlock::kQa), Lw = factor(CovBlock::kQw);
  const Matrix3 Lba = std::sqrt(truth.dt) * factor(CovBlock::kQba);
  const Matrix3 Lbw = std::sqrt(truth.dt) * factor(CovBlock::kQbw);
  const Matrix3 Lq = factor(CovBlock::kRalpha), Lqd = factor(CovBlock::kRalphaDot);
  const Vector3 base = theta_base(theta_true, layout);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw = [&](const Matrix3& L) {
    Vector3 e;
    for (int i = 0; i < 3; ++i) e[i] = normal(rng);
    return Vector3(L * e);
  };

  SynthesisResult res;
  res.log.dt = truth.dt;
  res.log.n_legs = n_legs;
  res.log.robot_hash = robot.hash();
  res.truth.seed = seed;
  res.truth.theta = theta_true;
  Vector3 ba = options.accel_bias0, bw = options.gyro_bias0;
  for (std::size_t k = 0; k < n; ++k) {
    const ManifoldState& x = truth.states[k];
    const Matrix3 R = x.pose.rotation.matrix();
    ImuSample imu;
    imu.t = static_cast<double>(k) * truth.dt;
    imu.accel = R.transpose() * (truth.accel_world[k] - options.gravity) + ba + draw(La);
    imu.gyro = truth.body_rate[k] + bw + draw(Lw);

    LegSample legs = truth.legs[k];
    for (int j = 0; j < n_legs; ++j) {
      legs.alpha[j] += draw(Lq);
      legs.alpha_dot[j] += draw(Lqd);
    }

    MocapSample mocap;
    mocap.pose = Pose(x.pose.rotation, x.pose.translation + R * base);
    mocap.velocity = x.velocity;

    ManifoldState xs = x;
    xs.accel_bias = ba;
    xs.gyro_bias = bw;
    res.truth.states.push_back(std::move(xs));
    res.log.imu.push_back(imu);
    res.log.legs.push_back(std::move(legs));
    res.log.mocap.push_back(mocap);

    ba += draw(Lba);
    bw += draw(Lbw);
  }
  return res;
}

}  // namespace legcal
