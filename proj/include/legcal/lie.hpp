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

// Scalar-generic SO(3)/SE(3) kernels on rotation matrices. Works with double
// and ad::Dual. Near-zero branches are polynomials in theta^2 so that first
// and second derivatives stay exact at the identity.

#include <cmath>

#include <Eigen/Core>

#include "legcal/ad.hpp"
#include "legcal/errors.hpp"

namespace legcal::lie {

template <typename T>
using Vec3 = Eigen::Matrix<T, 3, 1>;
template <typename T>
using Mat3 = Eigen::Matrix<T, 3, 3>;
template <typename T>
using Vec6 = Eigen::Matrix<T, 6, 1>;

using ad::value;

// Below this angle the trigonometric ratios switch to series.
inline constexpr double kSeriesAngle = 1e-3;
inline constexpr double kNearPi = 1e-6;

template <typename T>
Mat3<T> hat(const Vec3<T>& w) {
  Mat3<T> m;
  m << T(0), -w.z(), w.y(), w.z(), T(0), -w.x(), -w.y(), w.x(), T(0);
  return m;
}

template <typename T>
Vec3<T> vee(const Mat3<T>& m) {
  return Vec3<T>(m(2, 1), m(0, 2), m(1, 0));
}

// Coefficients a = sin(t)/t, b = (1-cos t)/t^2, c = (t-sin t)/t^3.
template <typename T>
void so3_coefficients(const T& t2, T& a, T& b, T& c) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  if (value(t2) < kSeriesAngle * kSeriesAngle) {
    a = T(1) - t2 / 6.0 + t2 * t2 / 120.0 - t2 * t2 * t2 / 5040.0;
    b = 0.5 - t2 / 24.0 + t2 * t2 / 720.0 - t2 * t2 * t2 / 40320.0;
    c = T(1.0 / 6.0) - t2 / 120.0 + t2 * t2 / 5040.0 - t2 * t2 * t2 / 362880.0;
    return;
  }
  const T t = sqrt(t2);
  const T s = sin(t);
  const T h = sin(t * 0.5);
  a = s / t;
  b = 2.0 * h * h / t2;
  c = (t - s) / (t2 * t);
}

template <typename T>
Mat3<T> exp_so3(const Vec3<T>& w) {
  const T t2 = w.squaredNorm();
  T a, b, c;
  so3_coefficients(t2, a, b, c);
  const Mat3<T> W = hat(w);
  return Mat3<T>::Identity() + a * W + b * (W * W);
}

// Left Jacobian of SO(3); also the V matrix of the SE(3) exponential.
template <typename T>
Mat3<T> left_jacobian_so3(const Vec3<T>& w) {
  const T t2 = w.squaredNorm();
  T a, b, c;
  so3_coefficients(t2, a, b, c);
  const Mat3<T> W = hat(w);
  return Mat3<T>::Identity() + b * W + c * (W * W);
}

template <typename T>
Mat3<T> left_jacobian_so3_inv(const Vec3<T>& w) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  const T t2 = w.squaredNorm();
  T d;
  if (value(t2) < kSeriesAngle * kSeriesAngle) {
    d = T(1.0 / 12.0) + t2 / 720.0 + t2 * t2 / 30240.0 + t2 * t2 * t2 / 1209600.0;
  } else {
    const T t = sqrt(t2);
    const T half = t * 0.5;
    d = (T(1) - half * cos(half) / sin(half)) / t2;
  }
  const Mat3<T> W = hat(w);
  return Mat3<T>::Identity() - 0.5 * W + d * (W * W);
}

// Rotation vector of R. Throws kAngleNearPi within kNearPi of pi.
template <typename T>
Vec3<T> log_so3(const Mat3<T>& R) {
  using std::atan2;
  using std::sqrt;
  const T c = (R.trace() - 1.0) * 0.5;
  const Vec3<T> v = 0.5 * vee<T>(R - R.transpose());
  const T s2 = v.squaredNorm();
  if (value(c) > 0.0 && value(s2) < kSeriesAngle * kSeriesAngle) {
    // theta / sin(theta) as a series in sin^2.
    const T f = T(1) + s2 / 6.0 + 3.0 * s2 * s2 / 40.0 + 5.0 * s2 * s2 * s2 / 112.0;
    return f * v;
  }
  const T s = sqrt(s2);
  const T t = atan2(s, c);
  if (M_PI - value(t) < kNearPi) {
    throw Error(ErrorCode::kAngleNearPi, "rotation angle within 1e-6 of pi");
  }
  return (t / s) * v;
}

// Twists are ordered (rotation, translation).
template <typename T>
void exp_se3(const Vec6<T>& xi, Mat3<T>& R, Vec3<T>& p) {
  const Vec3<T> w = xi.template head<3>();
  const Vec3<T> rho = xi.template tail<3>();
  R = exp_so3(w);
  p = left_jacobian_so3(w) * rho;
}

template <typename T>
Vec6<T> log_se3(const Mat3<T>& R, const Vec3<T>& p) {
  Vec6<T> xi;
  const Vec3<T> w = log_so3(R);
  xi.template head<3>() = w;
  xi.template tail<3>() = left_jacobian_so3_inv(w) * p;
  return xi;
}

// (R, p) <- exp(xi) * (R, p).
template <typename T>
void left_perturb(const Vec6<T>& xi, Mat3<T>& R, Vec3<T>& p) {
  Mat3<T> dR;
  Vec3<T> dp;
  exp_se3(xi, dR, dp);
  p = dR * p + dp;
  R = dR * R;
}

// Q block of the SE(3) left Jacobian in (rotation, translation) order.
Eigen::Matrix3d se3_q_block(const Eigen::Vector3d& w, const Eigen::Vector3d& rho);

// Left Jacobian J_l(xi) and its inverse for twists ordered (rotation, translation).
Eigen::Matrix<double, 6, 6> left_jacobian_se3(const Vec6<double>& xi);
Eigen::Matrix<double, 6, 6> left_jacobian_se3_inv(const Vec6<double>& xi);

// Adjoint of (R, p) acting on (rotation, translation) twists.
Eigen::Matrix<double, 6, 6> adjoint_se3(const Eigen::Matrix3d& R, const Eigen::Vector3d& p);

}  // namespace legcal::lie
