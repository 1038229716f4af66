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

#include "legcal/covariance.hpp"
#include "legcal/lie.hpp"
#include "legcal/manifold.hpp"
#include "legcal/robot.hpp"
#include "legcal/sensor_log.hpp"

namespace legcal {

/// Lower-level problem: log of T+1 samples, parameters theta, arrival prior on x_0.
struct EstimationProblem {
  const RobotKinematics* robot = nullptr;
  SensorLog log;
  ParamLayout layout;
  Eigen::VectorXd theta;
  ManifoldState prior_mean;
  PriorCov prior;
  Vector3 gravity = Vector3(0.0, 0.0, -9.81);

  int num_states() const { return static_cast<int>(log.size()); }
  int horizon() const { return num_states() - 1; }
  int state_dim() const { return TangentLayout::dim(log.n_legs); }
  /// Throws kLengthMismatch / kNotPD on inconsistent inputs.
  void validate() const;
};

/// State-independent weights and kinematic terms for one theta.
struct ResidualContext {
  int n_legs = 0;
  int dim = 0;
  double dt = 0.0;
  Eigen::Matrix<double, 9, 9> W_proc;  // (rot, trans, vel)
  Matrix3 W_foot, W_ba, W_bw;
  Eigen::VectorXd W_prior;  // diagonal
  std::vector<Vector3> theta_foot;
  std::vector<std::vector<LegTerms>> terms;  // [k][leg]
  std::vector<std::vector<Matrix3>> W_p;     // [k][leg]
  std::vector<std::vector<Matrix3>> W_v;     // [k][leg], zero when out of contact
};

ResidualContext make_context(const EstimationProblem& problem);

/// Adjugate inverse of a 3x3 matrix; works for dual scalars.
template <typename T>
lie::Mat3<T> inverse3(const lie::Mat3<T>& A) {
  lie::Mat3<T> C;
  C(0, 0) = A(1, 1) * A(2, 2) - A(1, 2) * A(2, 1);
  C(0, 1) = A(0, 2) * A(2, 1) - A(0, 1) * A(2, 2);
  C(0, 2) = A(0, 1) * A(1, 2) - A(0, 2) * A(1, 1);
  C(1, 0) = A(1, 2) * A(2, 0) - A(1, 0) * A(2, 2);
  C(1, 1) = A(0, 0) * A(2, 2) - A(0, 2) * A(2, 0);
  C(1, 2) = A(0, 2) * A(1, 0) - A(0, 0) * A(1, 2);
  C(2, 0) = A(1, 0) * A(2, 1) - A(1, 1) * A(2, 0);
  C(2, 1) = A(0, 1) * A(2, 0) - A(0, 0) * A(2, 1);
  C(2, 2) = A(0, 0) * A(1, 1) - A(0, 1) * A(1, 0);
  const T det = A(0, 0) * C(0, 0) + A(0, 1) * C(1, 0) + A(0, 2) * C(2, 0);
  return C / det;
}

/// Body-frame leg measurement weights (S + floor I)^-1 with S = G R_z G^T, as functions of
/// the covariances and the foot offset. The floor is kCovFloor * trace(S) / 3 so weights scale
/// exactly with the covariances.
template <typename T>
void measurement_weights(const LegTerms& t, const Vector3& omega_meas, const lie::Mat3<T>& R_a,
                         const lie::Mat3<T>& R_ad, const lie::Mat3<T>& Q_w,
                         const lie::Vec3<T>& th, bool contact, lie::Mat3<T>& W_p,
                         lie::Mat3<T>& W_v) {
  const lie::Mat3<T> J = t.jacobian<T>(th);
  const lie::Mat3<T> Jd = t.jacobian_dot<T>(th);
  const lie::Vec3<T> fk = t.fk<T>(th);
  auto floored = [](const lie::Mat3<T>& S) {
    return lie::Mat3<T>(S + lie::Mat3<T>::Identity() * (S.trace() * (kCovFloor / 3.0)));
  };
  W_p = inverse3<T>(floored(J * R_a * J.transpose()));
  if (!contact) {
    W_v.setZero();
    return;
  }
  const lie::Mat3<T> A = Jd + lie::hat<T>(omega_meas.cast<T>()) * J;
  const lie::Mat3<T> F = lie::hat<T>(fk);
  W_v = inverse3<T>(floored(A * R_a * A.transpose() + J * R_ad * J.transpose() +
                            F * Q_w * F.transpose()));
}

/// Process residual x_{k+1} [-] f(x_k, u_k) in (rot, trans, vel) at perturbed states
/// x_k [+] (xi0, dv0, dba0, dbw0), x_{k+1} [+] (xi1, dv1).
template <typename T>
Eigen::Matrix<T, 9, 1> process_residual(const ManifoldState& x0, const ManifoldState& x1,
                                        const ImuSample& u, double dt, const Vector3& gravity,
                                        const lie::Vec6<T>& xi0, const lie::Vec3<T>& dv0,
                                        const lie::Vec3<T>& dba0, const lie::Vec3<T>& dbw0,
                                        const lie::Vec6<T>& xi1, const lie::Vec3<T>& dv1) {
  lie::Mat3<T> R0 = x0.pose.rotation.matrix().cast<T>();
  lie::Vec3<T> p0 = x0.pose.translation.cast<T>();
  lie::left_perturb<T>(xi0, R0, p0);
  const lie::Vec3<T> v0 = x0.velocity.cast<T>() + dv0;
  const lie::Vec3<T> ba = x0.accel_bias.cast<T>() + dba0;
  const lie::Vec3<T> bw = x0.gyro_bias.cast<T>() + dbw0;
  lie::Mat3<T> Rh;
  lie::Vec3<T> ph, vh;
  propagate_mean<T>(R0, p0, v0, ba, bw, u.accel, u.gyro, dt, gravity, Rh, ph, vh);

  lie::Mat3<T> R1 = x1.pose.rotation.matrix().cast<T>();
  lie::Vec3<T> p1 = x1.pose.translation.cast<T>();
  lie::left_perturb<T>(xi1, R1, p1);
  const lie::Vec3<T> v1 = x1.velocity.cast<T>() + dv1;

  // log(T1 * That^-1)
  const lie::Mat3<T> dR = R1 * Rh.transpose();
  const lie::Vec3<T> dp = p1 - dR * ph;
  Eigen::Matrix<T, 9, 1> r;
  r.template head<6>() = lie::log_se3<T>(dR, dp);
  r.template tail<3>() = v1 - vh;
  return r;
}

/// Body-frame leg residuals at x [+] (xi, dv, dfoot, dbw) with offset th.
///   r_p = R^T (p - f) + fk,   r_v = R^T v + J alpha_dot + (gyro - b_w) x fk
template <typename T>
void measurement_residual(const ManifoldState& x, int leg, const LegTerms& t,
                          const Vector3& alpha_dot, const Vector3& gyro, const lie::Vec6<T>& xi,
                          const lie::Vec3<T>& dv, const lie::Vec3<T>& dfoot,
                          const lie::Vec3<T>& dbw, const lie::Vec3<T>& th, lie::Vec3<T>& r_p,
                          lie::Vec3<T>& r_v) {
  lie::Mat3<T> R = x.pose.rotation.matrix().cast<T>();
  lie::Vec3<T> p = x.pose.translation.cast<T>();
  lie::left_perturb<T>(xi, R, p);
  const lie::Vec3<T> v = x.velocity.cast<T>() + dv;
  const lie::Vec3<T> f = x.feet[leg].cast<T>() + dfoot;
  const lie::Vec3<T> w = gyro.cast<T>() - (x.gyro_bias.cast<T>() + dbw);
  const lie::Vec3<T> fk = t.fk<T>(th);
  r_p = R.transpose() * (p - f) + fk;
  r_v = R.transpose() * v + t.jacobian<T>(th) * alpha_dot.cast<T>() + w.cross(fk);
}

/// Prior pose residual log(T * Tbar^-1) at exp(xi) * T.
template <typename T>
lie::Vec6<T> prior_pose_residual(const Pose& pose, const Pose& mean, const lie::Vec6<T>& xi) {
  lie::Mat3<T> R = pose.rotation.matrix().cast<T>();
  lie::Vec3<T> p = pose.translation.cast<T>();
  lie::left_perturb<T>(xi, R, p);
  const lie::Mat3<T> Rm = mean.rotation.matrix().cast<T>();
  const lie::Mat3<T> dR = R * Rm.transpose();
  return lie::log_se3<T>(dR, lie::Vec3<T>(p - dR * mean.translation.cast<T>()));
}

/// Total cost J = sum r^T W r (no 1/2).
double total_cost(const std::vector<ManifoldState>& X, const EstimationProblem& problem,
                  const ResidualContext& ctx);

/// Per-term costs, for tests and diagnostics.
struct CostBreakdown {
  double prior = 0.0;
  double process = 0.0;     // (rot, trans, vel)
  double random_walk = 0.0; // feet and biases
  double leg_position = 0.0;
  double leg_velocity = 0.0;
  double total() const { return prior + process + random_walk + leg_position + leg_velocity; }
};
CostBreakdown cost_breakdown(const std::vector<ManifoldState>& X, const EstimationProblem& problem,
                             const ResidualContext& ctx);

/// Stacked whitened residual vector L^T r (W = L L^T), in a fixed block order.
Eigen::VectorXd whitened_residuals(const std::vector<ManifoldState>& X,
                                   const EstimationProblem& problem, const ResidualContext& ctx);

}  // namespace legcal
