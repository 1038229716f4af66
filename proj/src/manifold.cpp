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

#include "legcal/manifold.hpp"

#include <cmath>

namespace legcal {

namespace {

Eigen::Quaterniond canonical(Eigen::Quaterniond q) {
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  return q;
}

}  // namespace

Rotation Rotation::from_quaternion(double w, double x, double y, double z, bool normalize) {
  Eigen::Quaterniond q(w, x, y, z);
  if (normalize) q.normalize();
  return Rotation(canonical(q));
}

Rotation Rotation::from_matrix(const Matrix3& R) {
  Eigen::Quaterniond q(R);
  q.normalize();
  return Rotation(canonical(q));
}

Rotation Rotation::inverse() const { return Rotation(canonical(q_.conjugate())); }

Rotation Rotation::operator*(const Rotation& other) const {
  Eigen::Quaterniond q = q_ * other.q_;
  q.normalize();
  return Rotation(canonical(q));
}

Pose Pose::operator*(const Pose& other) const {
  return Pose(rotation * other.rotation, rotation * other.translation + translation);
}

Pose Pose::inverse() const {
  const Rotation inv = rotation.inverse();
  return Pose(inv, -(inv * translation));
}

Eigen::Matrix4d twist_hat(const Twist& xi) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
  m.topLeftCorner<3, 3>() = lie::hat<double>(xi.head<3>());
  m.topRightCorner<3, 1>() = xi.tail<3>();
  return m;
}

Twist twist_vee(const Eigen::Matrix4d& m) {
  Twist xi;
  xi << m(2, 1), m(0, 2), m(1, 0), m(0, 3), m(1, 3), m(2, 3);
  return xi;
}

Rotation so3_exp(const Vector3& w) {
  // Half-angle quaternion; cos/sin of the half angle as series near zero.
  const double t2 = w.squaredNorm();
  double c, s;  // cos(t/2), sin(t/2)/t
  if (t2 < 1e-16) {
    c = 1.0 - t2 / 8.0;
    s = 0.5 - t2 / 48.0;
  } else {
    const double t = std::sqrt(t2);
    c = std::cos(0.5 * t);
    s = std::sin(0.5 * t) / t;
  }
  return Rotation::from_quaternion(c, s * w.x(), s * w.y(), s * w.z());
}

Vector3 so3_log(const Rotation& r) {
  const Eigen::Quaterniond& q = r.quaternion();
  const Vector3 v = q.vec();
  const double s = v.norm();
  const double t = 2.0 * std::atan2(s, q.w());
  if (M_PI - t < lie::kNearPi) {
    throw Error(ErrorCode::kAngleNearPi, "rotation angle within 1e-6 of pi");
  }
  if (s < 1e-8) return (2.0 / q.w()) * (1.0 - s * s / (3.0 * q.w() * q.w())) * v;
  return (t / s) * v;
}

Rotation zeta(const Vector3& w) { return so3_exp(w); }

Pose se3_exp(const Twist& xi) {
  const Vector3 w = xi.head<3>();
  return Pose(so3_exp(w), lie::left_jacobian_so3<double>(w) * xi.tail<3>());
}

Twist se3_log(const Pose& T) {
  const Vector3 w = so3_log(T.rotation);
  Twist xi;
  xi.head<3>() = w;
  xi.tail<3>() = lie::left_jacobian_so3_inv<double>(w) * T.translation;
  return xi;
}

ManifoldState boxplus(const ManifoldState& x, const Eigen::VectorXd& tau) {
  const int n = x.num_legs();
  ManifoldState out(n);
  out.pose = se3_exp(tau.head<6>()) * x.pose;
  out.velocity = x.velocity + tau.segment<3>(TangentLayout::kVel);
  for (int j = 0; j < n; ++j) out.feet[j] = x.feet[j] + tau.segment<3>(TangentLayout::foot(j));
  out.accel_bias = x.accel_bias + tau.segment<3>(TangentLayout::accel_bias(n));
  out.gyro_bias = x.gyro_bias + tau.segment<3>(TangentLayout::gyro_bias(n));
  return out;
}

Eigen::VectorXd boxminus(const ManifoldState& x1, const ManifoldState& x2) {
  const int n = x1.num_legs();
  if (x2.num_legs() != n) throw Error(ErrorCode::kLengthMismatch, "boxminus leg count");
  Eigen::VectorXd tau(TangentLayout::dim(n));
  tau.head<6>() = se3_log(x1.pose * x2.pose.inverse());
  tau.segment<3>(TangentLayout::kVel) = x1.velocity - x2.velocity;
  for (int j = 0; j < n; ++j) tau.segment<3>(TangentLayout::foot(j)) = x1.feet[j] - x2.feet[j];
  tau.segment<3>(TangentLayout::accel_bias(n)) = x1.accel_bias - x2.accel_bias;
  tau.segment<3>(TangentLayout::gyro_bias(n)) = x1.gyro_bias - x2.gyro_bias;
  return tau;
}

namespace lie {

Eigen::Matrix3d se3_q_block(const Eigen::Vector3d& w, const Eigen::Vector3d& rho) {
  const double t2 = w.squaredNorm();
  double c1, c2, c3;
  // The closed forms cancel to O(t^4), so the series covers a wider range here.
  if (t2 < 1e-2) {
    const double t4 = t2 * t2, t6 = t4 * t2;
    c1 = 1.0 / 6.0 - t2 / 120.0 + t4 / 5040.0 - t6 / 362880.0;
    c2 = 1.0 / 24.0 - t2 / 720.0 + t4 / 40320.0 - t6 / 3628800.0;
    c3 = 1.0 / 120.0 - t2 / 2520.0 + t4 / 120960.0 - t6 / 9979200.0;
  } else {
    const double t = std::sqrt(t2);
    const double s = std::sin(t), c = std::cos(t);
    c1 = (t - s) / (t2 * t);
    c2 = (t2 + 2.0 * c - 2.0) / (2.0 * t2 * t2);
    c3 = (2.0 * t - 3.0 * s + t * c) / (2.0 * t2 * t2 * t);
  }
  const Eigen::Matrix3d W = hat<double>(w);
  const Eigen::Matrix3d P = hat<double>(rho);
  const Eigen::Matrix3d WP = W * P, PW = P * W, WPW = W * P * W;
  return 0.5 * P + c1 * (WP + PW + WPW) + c2 * (W * WP + PW * W - 3.0 * WPW) +
         c3 * (WPW * W + W * WPW);
}

Eigen::Matrix<double, 6, 6> left_jacobian_se3(const Vec6<double>& xi) {
  const Eigen::Vector3d w = xi.head<3>();
  const Eigen::Matrix3d J = left_jacobian_so3<double>(w);
  Eigen::Matrix<double, 6, 6> out = Eigen::Matrix<double, 6, 6>::Zero();
  out.topLeftCorner<3, 3>() = J;
  out.bottomRightCorner<3, 3>() = J;
  out.bottomLeftCorner<3, 3>() = se3_q_block(w, xi.tail<3>());
  return out;
}

Eigen::Matrix<double, 6, 6> left_jacobian_se3_inv(const Vec6<double>& xi) {
  const Eigen::Vector3d w = xi.head<3>();
  const Eigen::Matrix3d Ji = left_jacobian_so3_inv<double>(w);
  Eigen::Matrix<double, 6, 6> out = Eigen::Matrix<double, 6, 6>::Zero();
  out.topLeftCorner<3, 3>() = Ji;
  out.bottomRightCorner<3, 3>() = Ji;
  out.bottomLeftCorner<3, 3>() = -Ji * se3_q_block(w, xi.tail<3>()) * Ji;
  return out;
}

Eigen::Matrix<double, 6, 6> adjoint_se3(const Eigen::Matrix3d& R, const Eigen::Vector3d& p) {
  Eigen::Matrix<double, 6, 6> out = Eigen::Matrix<double, 6, 6>::Zero();
  out.topLeftCorner<3, 3>() = R;
  out.bottomRightCorner<3, 3>() = R;
  out.bottomLeftCorner<3, 3>() = hat<double>(p) * R;
  return out;
}

}  // namespace lie

}  // namespace legcal
