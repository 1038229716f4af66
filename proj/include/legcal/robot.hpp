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
#include <string>
#include <vector>

#include <Eigen/Core>

#include "legcal/lie.hpp"
#include "legcal/manifold.hpp"
#include "legcal/sensor_log.hpp"

namespace legcal {

struct LegDescription {
  std::string name;
  Vector3 hip_position = Vector3::Zero();  // body frame
  double side = 1.0;                       // +1 left, -1 right
  std::array<Vector3, 3> axes = {Vector3::UnitX(), Vector3::UnitY(), Vector3::UnitY()};
};

struct RobotDescription {
  static constexpr int kSchemaVersion = 1;
  std::string name = "quadruped";
  double hip_length = 0.08;
  double thigh_length = 0.213;
  double calf_length = 0.213;
  double offset_bound = 0.1;  // |theta_foot|, |theta_base| box, m
  std::vector<LegDescription> legs;

  /// Four-leg robot with Go1-like hip mounts, legs FL, FR, RL, RR.
  static RobotDescription default_quadruped();
};

/// Terms of a leg's kinematics at fixed joint angles, affine in the foot offset:
///   fk = fk0 + R_bc th,  J[:,k] = J0[:,k] + dR[k] th,  Jdot[:,k] = Jdot0[:,k] + dRdot[k] th.
struct LegTerms {
  Vector3 fk0;
  Matrix3 R_bc;
  Matrix3 J0;
  std::array<Matrix3, 3> dR;
  Matrix3 Jdot0;
  std::array<Matrix3, 3> dRdot;

  template <typename T>
  lie::Vec3<T> fk(const lie::Vec3<T>& th) const {
    return fk0.cast<T>() + R_bc.cast<T>() * th;
  }
  template <typename T>
  lie::Mat3<T> jacobian(const lie::Vec3<T>& th) const {
    lie::Mat3<T> J = J0.cast<T>();
    for (int k = 0; k < 3; ++k) J.col(k) += dR[k].cast<T>() * th;
    return J;
  }
  template <typename T>
  lie::Mat3<T> jacobian_dot(const lie::Vec3<T>& th) const {
    lie::Mat3<T> Jd = Jdot0.cast<T>();
    for (int k = 0; k < 3; ++k) Jd.col(k) += dRdot[k].cast<T>() * th;
    return Jd;
  }
};

class RobotKinematics {
 public:
  explicit RobotKinematics(RobotDescription description);

  int num_legs() const { return static_cast<int>(desc_.legs.size()); }
  const RobotDescription& description() const { return desc_; }
  std::uint64_t hash() const { return hash_; }

  /// Calf orientation R_BC(alpha) in the body frame.
  template <typename T>
  lie::Mat3<T> calf_rotation(const lie::Vec3<T>& a, int leg) const {
    const auto& L = desc_.legs[leg];
    lie::Mat3<T> R = lie::exp_so3<T>(L.axes[0].cast<T>() * a[0]);
    R = R * lie::exp_so3<T>(L.axes[1].cast<T>() * a[1]);
    return R * lie::exp_so3<T>(L.axes[2].cast<T>() * a[2]);
  }

  /// Foot point in the body frame including the calf-frame offset.
  template <typename T>
  lie::Vec3<T> forward_kinematics_t(const lie::Vec3<T>& a, int leg, const lie::Vec3<T>& th) const {
    const auto& L = desc_.legs[leg];
    const lie::Mat3<T> R1 = lie::exp_so3<T>(L.axes[0].cast<T>() * a[0]);
    const lie::Mat3<T> R2 = lie::exp_so3<T>(L.axes[1].cast<T>() * a[1]);
    const lie::Mat3<T> R3 = lie::exp_so3<T>(L.axes[2].cast<T>() * a[2]);
    const lie::Vec3<T> o1(T(0), T(L.side * desc_.hip_length), T(0));
    const lie::Vec3<T> o2(T(0), T(0), T(-desc_.thigh_length));
    const lie::Vec3<T> o3(T(0), T(0), T(-desc_.calf_length));
    return L.hip_position.cast<T>() + R1 * (o1 + R2 * (o2 + R3 * (o3 + th)));
  }

  Vector3 forward_kinematics(const Vector3& a, int leg, const Vector3& theta_foot) const;
  Matrix3 leg_jacobian(const Vector3& a, int leg, const Vector3& theta_foot) const;
  Matrix3 leg_jacobian_dot(const Vector3& a, const Vector3& a_dot, int leg,
                           const Vector3& theta_foot) const;
  LegTerms leg_terms(const Vector3& a, const Vector3& a_dot, int leg) const;

  /// Joint angles placing the offset foot point at p (body frame). Throws kIkOutOfRange.
  Vector3 inverse_kinematics(const Vector3& p, int leg, const Vector3& theta_foot) const;

  /// Foot position at zero joint angles and zero offset.
  Vector3 nominal_stance(int leg) const;

 private:
  RobotDescription desc_;
  std::uint64_t hash_;
  bool standard_axes_ = true;
};

/// Noise-free mean propagation over one IMU sample. The gyro is taken in the body frame.
ManifoldState process_propagate(const ManifoldState& x, const ImuSample& u, double dt,
                                const Vector3& gravity);

template <typename T>
void propagate_mean(const lie::Mat3<T>& R, const lie::Vec3<T>& p, const lie::Vec3<T>& v,
                    const lie::Vec3<T>& ba, const lie::Vec3<T>& bw, const Vector3& accel,
                    const Vector3& gyro, double dt, const Vector3& gravity, lie::Mat3<T>& R1,
                    lie::Vec3<T>& p1, lie::Vec3<T>& v1) {
  const lie::Vec3<T> a = R * (accel.cast<T>() - ba) + gravity.cast<T>();
  p1 = p + v * dt + a * (0.5 * dt * dt);
  v1 = v + a * dt;
  R1 = R * lie::exp_so3<T>((gyro.cast<T>() - bw) * dt);
}

struct LegMeasurement {
  Vector3 y_p;            // model: p - p_foot
  Vector3 y_v;            // model: v
  Vector3 y_p_measured;   // -R fk(alpha, theta_foot)
  Vector3 y_v_measured;   // -R J alpha_dot - R (w - b_w) x fk
  bool velocity_active;   // contact flag
};

std::vector<LegMeasurement> measurement_predict(const RobotKinematics& robot,
                                                const ManifoldState& x, const LegSample& legs,
                                                const ImuSample& u,
                                                const std::vector<Vector3>& theta_foot);

/// First-order maps from (alpha, alpha_dot, omega) noise to foot position/velocity (body frame).
struct NoiseMapping {
  Eigen::Matrix<double, 3, 9> G_p;
  Eigen::Matrix<double, 3, 9> G_v;
};

NoiseMapping noise_mapping(const RobotKinematics& robot, const Vector3& a, const Vector3& a_dot,
                           const Vector3& omega, int leg, const Vector3& theta_foot);

struct InducedCov {
  Matrix3 R_pf;
  Matrix3 R_vf;
};

inline constexpr double kCovFloor = 1e-12;

/// World-frame induced covariances R_WB G R_z G^T R_WB^T + floor I. Throws kNotPD.
InducedCov induced_measurement_cov(const Eigen::Matrix<double, 3, 9>& G_p,
                                   const Eigen::Matrix<double, 3, 9>& G_v,
                                   const Eigen::Matrix<double, 9, 9>& R_z, const Matrix3& R_wb);

}  // namespace legcal
