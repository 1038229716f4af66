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

#include "legcal/robot.hpp"

#include <cmath>
#include <cstdio>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "legcal/hash.hpp"

namespace legcal {

namespace {

double wrap_angle(double a) {
  while (a > M_PI) a -= 2 * M_PI;
  while (a <= -M_PI) a += 2 * M_PI;
  return a;
}

std::string describe(const RobotDescription& d) {
  std::string s;
  char buf[96];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g,", v);
    s += buf;
  };
  s += d.name + ";";
  num(d.hip_length);
  num(d.thigh_length);
  num(d.calf_length);
  num(d.offset_bound);
  for (const auto& L : d.legs) {
    s += L.name + ":";
    for (int i = 0; i < 3; ++i) num(L.hip_position[i]);
    num(L.side);
    for (const auto& ax : L.axes)
      for (int i = 0; i < 3; ++i) num(ax[i]);
  }
  return s;
}

}  // namespace

RobotDescription RobotDescription::default_quadruped() {
  RobotDescription d;
  const double hx = 0.1881, hy = 0.04675;
  d.legs = {{"FL", Vector3(hx, hy, 0), 1.0},
            {"FR", Vector3(hx, -hy, 0), -1.0},
            {"RL", Vector3(-hx, hy, 0), 1.0},
            {"RR", Vector3(-hx, -hy, 0), -1.0}};
  return d;
}

RobotKinematics::RobotKinematics(RobotDescription description)
    : desc_(std::move(description)), hash_(fnv1a(describe(desc_))) {
  for (const auto& L : desc_.legs) {
    standard_axes_ = standard_axes_ && L.axes[0] == Vector3::UnitX() &&
                     L.axes[1] == Vector3::UnitY() && L.axes[2] == Vector3::UnitY();
  }
}

Vector3 RobotKinematics::forward_kinematics(const Vector3& a, int leg,
                                            const Vector3& theta_foot) const {
  return forward_kinematics_t<double>(a, leg, theta_foot);
}

LegTerms RobotKinematics::leg_terms(const Vector3& a, const Vector3& a_dot, int leg) const {
  using DD = ad::Dual<ad::Dual<double, 3>, 3>;
  lie::Vec3<DD> ad_a;
  for (int k = 0; k < 3; ++k) ad_a[k] = ad::variable2<3>(a[k], k);
  const lie::Vec3<DD> f = forward_kinematics_t<DD>(ad_a, leg, lie::Vec3<DD>::Zero());
  const lie::Mat3<DD> R = calf_rotation<DD>(ad_a, leg);

  LegTerms t;
  t.Jdot0.setZero();
  for (int k = 0; k < 3; ++k) {
    t.dR[k].setZero();
    t.dRdot[k].setZero();
  }
  for (int r = 0; r < 3; ++r) {
    t.fk0[r] = ad::value(f[r]);
    for (int k = 0; k < 3; ++k) {
      t.J0(r, k) = f[r].v[k].a;
      for (int i = 0; i < 3; ++i) t.Jdot0(r, k) += f[r].v[k].v[i] * a_dot[i];
    }
    for (int c = 0; c < 3; ++c) {
      t.R_bc(r, c) = ad::value(R(r, c));
      for (int k = 0; k < 3; ++k) {
        t.dR[k](r, c) = R(r, c).v[k].a;
        for (int i = 0; i < 3; ++i) t.dRdot[k](r, c) += R(r, c).v[k].v[i] * a_dot[i];
      }
    }
  }
  return t;
}

Matrix3 RobotKinematics::leg_jacobian(const Vector3& a, int leg, const Vector3& theta_foot) const {
  return leg_terms(a, Vector3::Zero(), leg).jacobian<double>(theta_foot);
}

Matrix3 RobotKinematics::leg_jacobian_dot(const Vector3& a, const Vector3& a_dot, int leg,
                                          const Vector3& theta_foot) const {
  return leg_terms(a, a_dot, leg).jacobian_dot<double>(theta_foot);
}

Vector3 RobotKinematics::nominal_stance(int leg) const {
  const auto& L = desc_.legs[leg];
  return L.hip_position + Vector3(0, L.side * desc_.hip_length,
                                  -(desc_.thigh_length + desc_.calf_length));
}

Vector3 RobotKinematics::inverse_kinematics(const Vector3& p, int leg,
                                            const Vector3& theta_foot) const {
  const auto& L = desc_.legs[leg];
  const double l1 = desc_.thigh_length;
  Vector3 a(0.0, 0.8, -1.6);
  if (standard_axes_) {
    const Vector3 q = p - L.hip_position;
    const double d = L.side * desc_.hip_length + theta_foot.y();
    const double r = std::hypot(q.y(), q.z());
    if (r <= std::abs(d)) throw Error(ErrorCode::kIkOutOfRange, "target inside hip offset");
    const double beta = std::atan2(q.z(), q.y());
    const double delta = std::acos(d / r);
    double a1 = 0.0, zp = 0.0;
    bool found = false;
    for (double cand : {wrap_angle(beta + delta), wrap_angle(beta - delta)}) {
      const double z = -std::sin(cand) * q.y() + std::cos(cand) * q.z();
      if (z < 0 && (!found || std::abs(cand) < std::abs(a1))) {
        a1 = cand;
        zp = z;
        found = true;
      }
    }
    if (!found) throw Error(ErrorCode::kIkOutOfRange, "no foot-below-hip roll solution");
    const double xp = q.x();
    const double cx = theta_foot.x(), cz = theta_foot.z() - desc_.calf_length;
    const double rho = std::hypot(cx, cz);
    const double phi = std::atan2(cx, cz);
    const double uz = (rho * rho + l1 * l1 - (xp * xp + zp * zp)) / (2 * l1);
    if (std::abs(uz) > rho) throw Error(ErrorCode::kIkOutOfRange, "target out of leg reach");
    const double a3 = wrap_angle(std::acos(uz / rho) - phi);
    const double ux = std::cos(a3) * cx + std::sin(a3) * cz;
    const double a2 = wrap_angle(std::atan2(xp, zp) - std::atan2(ux, uz - l1));
    a = Vector3(a1, a2, a3);
  }
  for (int it = 0; it < 50; ++it) {
    const Vector3 e = forward_kinematics(a, leg, theta_foot) - p;
    if (e.norm() < 1e-15) break;
    a -= leg_jacobian(a, leg, theta_foot).partialPivLu().solve(e);
  }
  if ((forward_kinematics(a, leg, theta_foot) - p).norm() > 1e-12) {
    throw Error(ErrorCode::kIkOutOfRange, "inverse kinematics did not converge");
  }
  return a;
}

ManifoldState process_propagate(const ManifoldState& x, const ImuSample& u, double dt,
                                const Vector3& gravity) {
  ManifoldState out = x;
  const Matrix3 R = x.pose.rotation.matrix();
  const Vector3 a = R * (u.accel - x.accel_bias) + gravity;
  out.pose.translation = x.pose.translation + x.velocity * dt + 0.5 * dt * dt * a;
  out.velocity = x.velocity + a * dt;
  out.pose.rotation = x.pose.rotation * zeta((u.gyro - x.gyro_bias) * dt);
  return out;
}

std::vector<LegMeasurement> measurement_predict(const RobotKinematics& robot,
                                                const ManifoldState& x, const LegSample& legs,
                                                const ImuSample& u,
                                                const std::vector<Vector3>& theta_foot) {
  std::vector<LegMeasurement> out(robot.num_legs());
  const Matrix3 R = x.pose.rotation.matrix();
  const Vector3 w = u.gyro - x.gyro_bias;
  for (int j = 0; j < robot.num_legs(); ++j) {
    const LegTerms t = robot.leg_terms(legs.alpha[j], legs.alpha_dot[j], j);
    const Vector3 fk = t.fk<double>(theta_foot[j]);
    const Matrix3 J = t.jacobian<double>(theta_foot[j]);
    auto& m = out[j];
    m.y_p = x.pose.translation - x.feet[j];
    m.y_v = x.velocity;
    m.y_p_measured = -R * fk;
    m.y_v_measured = -R * (J * legs.alpha_dot[j]) - R * w.cross(fk);
    m.velocity_active = legs.contact[j] != 0;
  }
  return out;
}

NoiseMapping noise_mapping(const RobotKinematics& robot, const Vector3& a, const Vector3& a_dot,
                           const Vector3& omega, int leg, const Vector3& theta_foot) {
  const LegTerms t = robot.leg_terms(a, a_dot, leg);
  const Matrix3 J = t.jacobian<double>(theta_foot);
  const Matrix3 Jd = t.jacobian_dot<double>(theta_foot);
  const Vector3 fk = t.fk<double>(theta_foot);
  NoiseMapping g;
  g.G_p.setZero();
  g.G_p.leftCols<3>() = J;
  g.G_v.leftCols<3>() = Jd + lie::hat<double>(omega) * J;
  g.G_v.middleCols<3>(3) = J;
  g.G_v.rightCols<3>() = -lie::hat<double>(fk);
  return g;
}

InducedCov induced_measurement_cov(const Eigen::Matrix<double, 3, 9>& G_p,
                                   const Eigen::Matrix<double, 3, 9>& G_v,
                                   const Eigen::Matrix<double, 9, 9>& R_z, const Matrix3& R_wb) {
  auto build = [&](const Eigen::Matrix<double, 3, 9>& G) {
    const Eigen::Matrix<double, 3, 9> A = R_wb * G;
    Matrix3 S = A * R_z * A.transpose();
    S = 0.5 * (S + S.transpose()).eval();
    S.diagonal().array() += kCovFloor;
    const double lmin = Eigen::SelfAdjointEigenSolver<Matrix3>(S).eigenvalues().minCoeff();
    if (!(lmin >= 0.5 * kCovFloor)) {
      throw Error(ErrorCode::kNotPD, "induced measurement covariance not positive definite");
    }
    return S;
  };
  return {build(G_p), build(G_v)};
}

}  // namespace legcal
