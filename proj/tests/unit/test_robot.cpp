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

#include <cmath>
#include <random>

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <gtest/gtest.h>

#include "legcal/robot.hpp"

namespace legcal {
namespace {

const RobotKinematics& robot() {
  static const RobotKinematics r(RobotDescription::default_quadruped());
  return r;
}

Vector3 random_angles(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> a1(-0.4, 0.4), a2(0.2, 1.2), a3(-2.4, -0.9);
  return Vector3(a1(rng), a2(rng), a3(rng));
}

// Independent chain of homogeneous transforms.
Vector3 homogeneous_fk(const RobotDescription& d, int leg, const Vector3& a, const Vector3& th) {
  const auto& L = d.legs[leg];
  auto T = [](const Eigen::Matrix3d& R, const Vector3& p) {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = R;
    m.topRightCorner<3, 1>() = p;
    return m;
  };
  auto rot = [](const Vector3& axis, double ang) {
    return Eigen::AngleAxisd(ang, axis).toRotationMatrix();
  };
  const Eigen::Matrix4d chain =
      T(Eigen::Matrix3d::Identity(), L.hip_position) * T(rot(L.axes[0], a[0]), Vector3::Zero()) *
      T(Eigen::Matrix3d::Identity(), Vector3(0, L.side * d.hip_length, 0)) *
      T(rot(L.axes[1], a[1]), Vector3::Zero()) *
      T(Eigen::Matrix3d::Identity(), Vector3(0, 0, -d.thigh_length)) *
      T(rot(L.axes[2], a[2]), Vector3::Zero()) *
      T(Eigen::Matrix3d::Identity(), Vector3(0, 0, -d.calf_length));
  return (chain * Eigen::Vector4d(th.x(), th.y(), th.z(), 1.0)).head<3>();
}

TEST(ForwardKinematics, ZeroAnglesGiveNominalStance) {
  for (int j = 0; j < 4; ++j) {
    const Vector3 f = robot().forward_kinematics(Vector3::Zero(), j, Vector3::Zero());
    EXPECT_LT((f - robot().nominal_stance(j)).cwiseAbs().maxCoeff(), 1e-12);
  }
  EXPECT_NEAR(robot().nominal_stance(0).x(), 0.1881, 1e-15);
  EXPECT_NEAR(robot().nominal_stance(0).y(), 0.04675 + 0.08, 1e-15);
  EXPECT_NEAR(robot().nominal_stance(0).z(), -0.426, 1e-15);
}

TEST(ForwardKinematics, CalfOffsetAtZeroAngles) {
  const Vector3 f = robot().forward_kinematics(Vector3::Zero(), 1, Vector3(0, 0, -0.02));
  EXPECT_LT((f - robot().nominal_stance(1) - Vector3(0, 0, -0.02)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ForwardKinematics, MatchesHomogeneousChain) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  RobotDescription d = RobotDescription::default_quadruped();
  d.legs[3].axes = {Vector3(1, 0.2, 0).normalized(), Vector3(0, 1, 0.1).normalized(),
                    Vector3(0.1, 1, 0).normalized()};
  const RobotKinematics custom(d);
  for (int i = 0; i < 100; ++i) {
    const int leg = i % 4;
    const Vector3 a = random_angles(rng), th(u(rng), u(rng), u(rng));
    EXPECT_LT((custom.forward_kinematics(a, leg, th) - homogeneous_fk(d, leg, a, th))
                  .cwiseAbs().maxCoeff(), 1e-12);
    // fk = fk(a, 0) + R_bc th
    const LegTerms t = custom.leg_terms(a, Vector3::Zero(), leg);
    EXPECT_LT((t.fk<double>(th) - homogeneous_fk(d, leg, a, th)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(LegJacobian, MatchesFiniteDifferences) {
  std::mt19937_64 rng(22);
  const double h = 1e-6;
  for (int i = 0; i < 40; ++i) {
    const int leg = i % 4;
    const Vector3 a = random_angles(rng), th(0.01, -0.005, 0.02);
    const Matrix3 J = robot().leg_jacobian(a, leg, th);
    for (int k = 0; k < 3; ++k) {
      const Vector3 e = Vector3::Unit(k) * h;
      const Vector3 fd = (robot().forward_kinematics(a + e, leg, th) -
                          robot().forward_kinematics(a - e, leg, th)) / (2 * h);
      EXPECT_LT((fd - J.col(k)).cwiseAbs().maxCoeff(), 1e-6);
    }
  }
}

TEST(LegJacobianDot, MatchesFiniteDifferences) {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> n(0, 3);
  const double d = 1e-5;
  for (int i = 0; i < 40; ++i) {
    const int leg = i % 4;
    const Vector3 a = random_angles(rng), ad(n(rng), n(rng), n(rng)), th(0.01, -0.005, 0.02);
    const Matrix3 fd = (robot().leg_jacobian(a + ad * d, leg, th) -
                        robot().leg_jacobian(a - ad * d, leg, th)) / (2 * d);
    EXPECT_LT((fd - robot().leg_jacobian_dot(a, ad, leg, th)).cwiseAbs().maxCoeff(), 1e-5);
  }
  EXPECT_EQ(robot().leg_jacobian_dot(Vector3(0.1, 0.8, -1.5), Vector3::Zero(), 0, Vector3::Zero()),
            Matrix3::Zero());
}

TEST(InverseKinematics, RecoversAnglesWithOffsets) {
  std::mt19937_64 rng(24);
  std::uniform_real_distribution<double> u(-0.03, 0.03);
  for (int i = 0; i < 200; ++i) {
    const int leg = i % 4;
    const Vector3 a = random_angles(rng), th(u(rng), u(rng), u(rng));
    const Vector3 p = robot().forward_kinematics(a, leg, th);
    const Vector3 b = robot().inverse_kinematics(p, leg, th);
    EXPECT_LT((robot().forward_kinematics(b, leg, th) - p).norm(), 1e-12);
    EXPECT_LT((b - a).cwiseAbs().maxCoeff(), 1e-9);
  }
  EXPECT_THROW(robot().inverse_kinematics(Vector3(0.2, 0.1, -0.9), 0, Vector3::Zero()), Error);
}

TEST(ProcessPropagate, HoveringIsStationary) {
  ManifoldState x(4);
  x.pose.translation = Vector3(1, 2, 0.3);
  ImuSample u;
  u.accel = Vector3(0, 0, 9.81);
  const ManifoldState y = process_propagate(x, u, 0.01, Vector3(0, 0, -9.81));
  EXPECT_EQ(y.pose.translation, x.pose.translation);
  EXPECT_EQ(y.velocity, Vector3::Zero());
  EXPECT_EQ(y.pose.rotation.w(), 1.0);
}

TEST(ProcessPropagate, FreeFall) {
  ManifoldState x(4);
  x.pose.translation = Vector3(1, 2, 3);
  const ManifoldState y = process_propagate(x, ImuSample{}, 0.1, Vector3(0, 0, -9.81));
  EXPECT_NEAR(y.velocity.z(), -0.981, 1e-15);
  EXPECT_NEAR(y.pose.translation.z(), 3 - 0.04905, 1e-15);
  EXPECT_EQ(y.pose.translation.head<2>(), Vector3(1, 2, 3).head<2>());
}

TEST(ProcessPropagate, ConvergesToAnalyticProfileAtFirstOrder) {
  // Constant body rate; world acceleration a(t) = (sin t, cos 2t, 0.3 t).
  const Vector3 w(0.3, -0.2, 0.5), g(0, 0, -9.81);
  const double T = 1.0;
  auto acc = [](double t) { return Vector3(std::sin(t), std::cos(2 * t), 0.3 * t); };
  auto exact_p = [](double t) {
    return Vector3(t - std::sin(t), (1 - std::cos(2 * t)) / 4, 0.05 * t * t * t);
  };
  auto run = [&](int n) {
    const double dt = T / n;
    ManifoldState x(4);
    for (int k = 0; k < n; ++k) {
      const double t = k * dt;
      const Matrix3 R = so3_exp(w * t).matrix();
      ImuSample u;
      u.accel = R.transpose() * (acc(t) - g);
      u.gyro = w;
      x = process_propagate(x, u, dt, g);
    }
    return x;
  };
  const ManifoldState coarse = run(100), fine = run(10000);
  const double e_coarse = (coarse.pose.translation - exact_p(T)).norm();
  const double e_fine = (fine.pose.translation - exact_p(T)).norm();
  // Left-endpoint acceleration: |error| <= dt * T^2 * max|a'| / 2 with max|a'| <= sqrt(1+4+0.09).
  EXPECT_LE(e_coarse, 0.01 * std::sqrt(5.09) / 2);
  EXPECT_GT(e_coarse / e_fine, 50.0);
  EXPECT_LT(e_coarse / e_fine, 200.0);
  EXPECT_LT((coarse.pose.rotation.matrix() - so3_exp(w * T).matrix()).cwiseAbs().maxCoeff(), 1e-12);
}

struct StandingScene {
  ManifoldState x{4};
  LegSample legs{4};
  ImuSample u;
};

StandingScene standing(const std::vector<Vector3>& theta_true) {
  StandingScene s;
  s.x.pose = Pose(so3_exp(Vector3(0.05, -0.1, 0.7)), Vector3(0.3, -0.2, 0.28));
  const Matrix3 R = s.x.pose.rotation.matrix();
  for (int j = 0; j < 4; ++j) {
    const Vector3 foot_body = robot().nominal_stance(j) + Vector3(0.0, 0.0, 0.15);
    s.legs.alpha[j] = robot().inverse_kinematics(foot_body, j, theta_true[j]);
    s.legs.contact[j] = 1;
    s.x.feet[j] = s.x.pose.translation + R * foot_body;
  }
  return s;
}

TEST(MeasurementPredict, ConsistentWhenStanding) {
  const std::vector<Vector3> th(4, Vector3::Zero());
  const StandingScene s = standing(th);
  for (const auto& m : measurement_predict(robot(), s.x, s.legs, s.u, th)) {
    EXPECT_LT((m.y_p_measured - m.y_p).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((m.y_v_measured - m.y_v).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_TRUE(m.velocity_active);
  }
}

TEST(MeasurementPredict, FootOffsetShowsAsCentimetre) {
  const std::vector<Vector3> truth(4, Vector3(0.0, 0.0, 0.01));
  const StandingScene s = standing(truth);
  const std::vector<Vector3> model(4, Vector3::Zero());
  for (const auto& m : measurement_predict(robot(), s.x, s.legs, s.u, model)) {
    EXPECT_NEAR((m.y_p_measured - m.y_p).norm(), 0.01, 1e-12);
  }
}

TEST(MeasurementPredict, SwingLegGatesVelocity) {
  const std::vector<Vector3> th(4, Vector3::Zero());
  StandingScene s = standing(th);
  s.legs.contact[2] = 0;
  const auto m = measurement_predict(robot(), s.x, s.legs, s.u, th);
  EXPECT_FALSE(m[2].velocity_active);
  EXPECT_TRUE(m[1].velocity_active);
}

TEST(NoiseMapping, ZeroRates) {
  const Vector3 a(0.1, 0.9, -1.7), th(0.01, 0, 0.02);
  const NoiseMapping g = noise_mapping(robot(), a, Vector3::Zero(), Vector3::Zero(), 0, th);
  EXPECT_EQ(g.G_v.leftCols<3>(), Matrix3::Zero());
  EXPECT_LT((g.G_v.middleCols<3>(3) - robot().leg_jacobian(a, 0, th)).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(g.G_p.rightCols<6>(), (Eigen::Matrix<double, 3, 6>::Zero()));
}

TEST(NoiseMapping, ZeroFootPositionEdge) {
  RobotDescription d = RobotDescription::default_quadruped();
  d.legs[0].hip_position = Vector3(0, -d.hip_length, d.thigh_length + d.calf_length);
  const RobotKinematics r(d);
  ASSERT_LT(r.forward_kinematics(Vector3::Zero(), 0, Vector3::Zero()).norm(), 1e-15);
  const NoiseMapping g =
      noise_mapping(r, Vector3::Zero(), Vector3(0.1, 0.2, 0.3), Vector3(1, 2, 3), 0, Vector3::Zero());
  EXPECT_EQ(g.G_v.rightCols<3>(), Matrix3::Zero());
}

TEST(NoiseMapping, FirstOrderAgreementWithNonlinearRemeasurement) {
  const int leg = 1;
  const Vector3 th(0.01, -0.005, 0.02);
  const Vector3 a(0.15, 0.85, -1.6), ad(0.7, -1.2, 2.0), w(0.3, -0.5, 0.2);
  auto h = [&](const Eigen::Matrix<double, 9, 1>& z) {
    const Vector3 az = z.head<3>(), adz = z.segment<3>(3), wz = z.tail<3>();
    Eigen::Matrix<double, 6, 1> out;
    const Vector3 fk = robot().forward_kinematics(az, leg, th);
    out.head<3>() = fk;
    out.tail<3>() = robot().leg_jacobian(az, leg, th) * adz + wz.cross(fk);
    return out;
  };
  Eigen::Matrix<double, 9, 1> z0;
  z0 << a, ad, w;
  const NoiseMapping g = noise_mapping(robot(), a, ad, w, leg, th);
  Eigen::Matrix<double, 6, 9> G;
  G << g.G_p, g.G_v;
  Eigen::Matrix<double, 9, 1> dir;
  dir << 0.3, -0.7, 0.5, 1.0, 0.2, -0.4, 0.6, 0.9, -0.1;
  double rel[2];
  const double scales[2] = {1e-3, 5e-4};
  for (int s = 0; s < 2; ++s) {
    const Eigen::Matrix<double, 9, 1> dz = scales[s] * dir;
    const auto lin = G * dz;
    rel[s] = (h(z0 + dz) - h(z0) - lin).norm() / lin.norm();
  }
  EXPECT_GT(rel[0] / rel[1], 1.8);
  EXPECT_LT(rel[0] / rel[1], 2.2);
}

TEST(InducedCov, IdentityCase) {
  Eigen::Matrix<double, 3, 9> Gp = Eigen::Matrix<double, 3, 9>::Zero();
  Gp.leftCols<3>().setIdentity();
  const auto c = induced_measurement_cov(Gp, Gp, Eigen::Matrix<double, 9, 9>::Identity(),
                                         Matrix3::Identity());
  EXPECT_LT((c.R_pf - Matrix3::Identity()).cwiseAbs().maxCoeff(), 1e-11);
}

TEST(InducedCov, PsdAndRotationInvariantTrace) {
  std::mt19937_64 rng(25);
  std::normal_distribution<double> n(0, 1);
  for (int i = 0; i < 50; ++i) {
    Eigen::Matrix<double, 3, 9> Gp, Gv;
    Eigen::Matrix<double, 9, 9> L;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 9; ++c) {
        Gp(r, c) = n(rng);
        Gv(r, c) = n(rng);
      }
    for (int r = 0; r < 9; ++r)
      for (int c = 0; c < 9; ++c) L(r, c) = n(rng);
    const Eigen::Matrix<double, 9, 9> Rz = L * L.transpose();
    const Matrix3 R = so3_exp(Vector3(n(rng), n(rng), n(rng))).matrix();
    const auto c = induced_measurement_cov(Gp, Gv, Rz, R);
    const Matrix3 raw = R * Gv * Rz * Gv.transpose() * R.transpose();
    const Matrix3 sym = 0.5 * (raw + raw.transpose());
    EXPECT_GE(Eigen::SelfAdjointEigenSolver<Matrix3>(sym).eigenvalues().minCoeff(),
              -1e-14 * sym.norm());
    const auto c0 = induced_measurement_cov(Gp, Gv, Rz, Matrix3::Identity());
    EXPECT_NEAR(c.R_pf.trace(), c0.R_pf.trace(), 1e-10 * c0.R_pf.trace());
    EXPECT_NEAR(c.R_vf.trace(), c0.R_vf.trace(), 1e-10 * c0.R_vf.trace());
  }
}

TEST(InducedCov, RejectsIndefinite) {
  Eigen::Matrix<double, 3, 9> Gp = Eigen::Matrix<double, 3, 9>::Zero();
  Gp.leftCols<3>().setIdentity();
  Eigen::Matrix<double, 9, 9> Rz = Eigen::Matrix<double, 9, 9>::Identity();
  Rz(1, 1) = -1.0;
  try {
    induced_measurement_cov(Gp, Gp, Rz, Matrix3::Identity());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNotPD);
  }
}

}  // namespace
}  // namespace legcal
