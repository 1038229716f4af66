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

#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "legcal/lie.hpp"

namespace legcal {

using Vector3 = Eigen::Vector3d;
using Matrix3 = Eigen::Matrix3d;
using Twist = Eigen::Matrix<double, 6, 1>;

/// Unit quaternion (w, x, y, z), kept normalized with w >= 0.
class Rotation {
 public:
  Rotation() = default;

  /// Normalizes and canonicalizes. With normalize=false only the sign is fixed.
  static Rotation from_quaternion(double w, double x, double y, double z, bool normalize = true);
  static Rotation from_matrix(const Matrix3& R);

  const Eigen::Quaterniond& quaternion() const { return q_; }
  double w() const { return q_.w(); }
  double x() const { return q_.x(); }
  double y() const { return q_.y(); }
  double z() const { return q_.z(); }

  Matrix3 matrix() const { return q_.toRotationMatrix(); }
  Rotation inverse() const;
  Rotation operator*(const Rotation& other) const;
  Vector3 operator*(const Vector3& v) const { return q_ * v; }

 private:
  explicit Rotation(const Eigen::Quaterniond& q) : q_(q) {}
  Eigen::Quaterniond q_ = Eigen::Quaterniond::Identity();
};

struct Pose {
  Rotation rotation;
  Vector3 translation = Vector3::Zero();

  Pose() = default;
  Pose(const Rotation& r, const Vector3& t) : rotation(r), translation(t) {}

  Pose operator*(const Pose& other) const;
  Vector3 operator*(const Vector3& v) const { return rotation * v + translation; }
  Pose inverse() const;
};

Eigen::Matrix4d twist_hat(const Twist& xi);
Twist twist_vee(const Eigen::Matrix4d& m);

Rotation so3_exp(const Vector3& w);
Vector3 so3_log(const Rotation& r);
/// Rotation vector to quaternion; same map as so3_exp.
Rotation zeta(const Vector3& w);

Pose se3_exp(const Twist& xi);
Twist se3_log(const Pose& T);

/// Tangent layout: rotation, translation, velocity, feet (leg-major), accel bias, gyro bias.
struct TangentLayout {
  static constexpr int kRot = 0;
  static constexpr int kTrans = 3;
  static constexpr int kVel = 6;
  static constexpr int kFeet = 9;
  static int foot(int leg) { return kFeet + 3 * leg; }
  static int accel_bias(int n_legs) { return kFeet + 3 * n_legs; }
  static int gyro_bias(int n_legs) { return kFeet + 3 * n_legs + 3; }
  static int dim(int n_legs) { return 6 + 3 + 3 * n_legs + 6; }
};

struct ManifoldState {
  Pose pose;
  Vector3 velocity = Vector3::Zero();
  std::vector<Vector3> feet;
  Vector3 accel_bias = Vector3::Zero();
  Vector3 gyro_bias = Vector3::Zero();

  ManifoldState() = default;
  explicit ManifoldState(int n_legs) : feet(n_legs, Vector3::Zero()) {}

  int num_legs() const { return static_cast<int>(feet.size()); }
  int tangent_dim() const { return TangentLayout::dim(num_legs()); }
};

/// x [+] tau with the pose part left-applied: exp(tau_pose) * T.
ManifoldState boxplus(const ManifoldState& x, const Eigen::VectorXd& tau);
/// x1 [-] x2 with the pose part log(T1 * T2^-1).
Eigen::VectorXd boxminus(const ManifoldState& x1, const ManifoldState& x2);

}  // namespace legcal
