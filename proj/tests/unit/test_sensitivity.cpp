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
#include <cstdio>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "legcal/errors.hpp"
#include "legcal/estimator.hpp"
#include "legcal/sensitivity.hpp"
#include "support/fixtures.hpp"

namespace legcal {
namespace {

Eigen::VectorXd gradient_at(const std::vector<ManifoldState>& X, const EstimationProblem& p) {
  return build_normal_equations(X, p, make_context(p), Exec::kSerial).g;
}

double fd_step(const EstimationProblem& p, int j, double base) {
  // Relative steps on covariance entries, absolute on offsets.
  return j < p.layout.cov_size() ? base * std::abs(p.theta[j]) : base;
}

struct Solved {
  std::unique_ptr<testing::Scenario> sc;
  std::vector<ManifoldState> X;
};

Solved solved_fd_problem() {
  Solved s{testing::standard_fd_scenario(), {}};
  const EstimateResult r = solve_fie(s.sc->problem, testing::tight_solver());
  EXPECT_TRUE(r.converged);
  s.X = r.trajectory;
  return s;
}

TEST(Sensitivity, RhsMatchesFiniteDifferenceOfGradient) {
  Solved s = solved_fd_problem();
  EstimationProblem p = s.sc->problem;
  const Eigen::MatrixXd B = assemble_rhs(s.X, p);
  ASSERT_EQ(B.rows(), static_cast<Eigen::Index>(s.X.size()) * p.state_dim());
  ASSERT_EQ(B.cols(), p.layout.size());
  for (int j = 0; j < p.layout.base_offset(); ++j) {
    const double h = fd_step(p, j, 1e-6);
    const double t0 = p.theta[j];
    p.theta[j] = t0 + h;
    const Eigen::VectorXd gp = gradient_at(s.X, p);
    p.theta[j] = t0 - h;
    const Eigen::VectorXd gm = gradient_at(s.X, p);
    p.theta[j] = t0;
    const Eigen::VectorXd fd = -(gp - gm) / (2.0 * h);
    const double scale = std::max(fd.cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((B.col(j) - fd).cwiseAbs().maxCoeff() / scale, 1e-5) << "column " << j;
  }
}

TEST(Sensitivity, BaseOffsetColumnsAreZero) {
  Solved s = solved_fd_problem();
  const Eigen::MatrixXd B = assemble_rhs(s.X, s.sc->problem);
  EXPECT_EQ(B.rightCols<3>().cwiseAbs().maxCoeff(), 0.0);
}

// For a diagonal block W = 1/(c L^2) so dW/dL = -2 W / L: doubling L scales its column of B
// by exactly 1/8 at fixed X, keeping the sign pattern.
TEST(Sensitivity, DoublingDiagonalEntryScalesColumnByEighth) {
  Solved s = solved_fd_problem();
  EstimationProblem p = s.sc->problem;
  const Eigen::MatrixXd B = assemble_rhs(s.X, p);
  for (CovBlock b : {CovBlock::kQp, CovBlock::kQbw, CovBlock::kQfoot}) {
    for (int i = 0; i < 3; ++i) {
      const int j = p.layout.cov_offset(b) + i;
      EstimationProblem q = p;
      q.theta[j] *= 2.0;
      const Eigen::VectorXd c = assemble_rhs(s.X, q).col(j);
      ASSERT_GT(B.col(j).cwiseAbs().maxCoeff(), 0.0);
      EXPECT_LT((8.0 * c - B.col(j)).cwiseAbs().maxCoeff(), 1e-12 * B.col(j).cwiseAbs().maxCoeff())
          << cov_block_name(b) << " " << i;
    }
  }
}

TEST(Sensitivity, ExactHessianMatchesFiniteDifferenceOfGradient) {
  testing::ScenarioOptions o;
  o.steps = 5;
  o.seed = 3;
  auto sc = testing::make_scenario(o);
  const EstimationProblem& p = sc->problem;
  const std::vector<ManifoldState> X = solve_fie(p, testing::tight_solver()).trajectory;
  const Eigen::MatrixXd He = assemble_kkt_jacobian(X, p, HessianKind::kExact).to_dense();
  const Eigen::MatrixXd Hg = assemble_kkt_jacobian(X, p, HessianKind::kGaussNewton).to_dense();
  const int d = static_cast<int>(He.rows());
  Eigen::MatrixXd fd(d, d);
  const double h = 1e-6;
  for (int i = 0; i < d; ++i) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(d);
    e[i] = h;
    fd.col(i) = (gradient_at(retract(X, e), p) - gradient_at(retract(X, -e), p)) / (2.0 * h);
  }
  // The gradient lives in left-perturbation coordinates at X, and the curvature of the
  // retraction vanishes at a stationary point, so fd is symmetric to FD accuracy.
  const double scale = fd.cwiseAbs().maxCoeff();
  const double err_exact = (He - fd).cwiseAbs().maxCoeff() / scale;
  const double err_gn = (Hg - fd).cwiseAbs().maxCoeff() / scale;
  std::printf("hessian vs fd: exact %.3e, gauss-newton %.3e\n", err_exact, err_gn);
  EXPECT_LT(err_exact, 1e-4);
  EXPECT_EQ((He - He.transpose()).cwiseAbs().maxCoeff(), 0.0);
  const HessianGap gap = gauss_newton_gap(X, p);
  EXPECT_NEAR(gap.relative, (He - Hg).cwiseAbs().maxCoeff() / He.cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Sensitivity, KktMatrixIsBandedAndSymmetric) {
  Solved s = solved_fd_problem();
  const BlockTridiagonal H = assemble_kkt_jacobian(s.X, s.sc->problem);
  const Eigen::MatrixXd Hd = H.to_dense();
  const int n = H.block;
  for (int a = 0; a < H.num_blocks(); ++a) {
    for (int b = 0; b < H.num_blocks(); ++b) {
      if (std::abs(a - b) > 1) EXPECT_EQ(Hd.block(a * n, b * n, n, n).cwiseAbs().maxCoeff(), 0.0);
    }
  }
  EXPECT_EQ((Hd - Hd.transpose()).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Sensitivity, ZeroRhsGivesZero) {
  Solved s = solved_fd_problem();
  KktSystem sys = assemble_kkt_system(s.X, s.sc->problem);
  sys.B.setZero();
  const SensitivityMatrix z = solve_sensitivity(sys);
  EXPECT_EQ(z.Z.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Sensitivity, OneFactorizationPerCall) {
  Solved s = solved_fd_problem();
  const SensitivityMatrix z = compute_sensitivity(s.X, s.sc->problem);
  EXPECT_EQ(z.factorizations, 1);
  EXPECT_EQ(z.shift, 0.0);
  EXPECT_TRUE(z.Z.allFinite());
}

TEST(Sensitivity, SerialAndParallelAgree) {
  Solved s = solved_fd_problem();
  const KktSystem a = assemble_kkt_system(s.X, s.sc->problem, HessianKind::kExact, Exec::kSerial);
  const KktSystem b =
      assemble_kkt_system(s.X, s.sc->problem, HessianKind::kExact, Exec::kParallel);
  EXPECT_EQ(a.H.to_dense(), b.H.to_dense());
  EXPECT_EQ(a.B, b.B);
  SensitivityOptions so;
  so.exec = Exec::kSerial;
  const Eigen::MatrixXd Zs = solve_sensitivity(a, so).Z;
  so.exec = Exec::kParallel;
  EXPECT_EQ(Zs, solve_sensitivity(a, so).Z);
}

TEST(Sensitivity, MatchesResolveFiniteDifference) {
  Solved s = solved_fd_problem();
  EstimationProblem p = s.sc->problem;
  const SensitivityMatrix z = compute_sensitivity(s.X, p);
  SensitivityOptions gn;
  gn.hessian = HessianKind::kGaussNewton;
  const SensitivityMatrix zg = compute_sensitivity(s.X, p, gn);
  const double eps = 1e-5;
  double worst = 0.0, worst_gn = 0.0;
  for (int j = 0; j < p.layout.size(); ++j) {
    const double t0 = p.theta[j];
    p.theta[j] = t0 + eps;
    const auto Xp = solve_fie(p, s.X, testing::tight_solver()).trajectory;
    p.theta[j] = t0 - eps;
    const auto Xm = solve_fie(p, s.X, testing::tight_solver()).trajectory;
    p.theta[j] = t0;
    const Eigen::VectorXd fd = trajectory_difference(Xp, Xm) / (2.0 * eps);
    const Eigen::ArrayXd denom = 1.0 + fd.array().abs();
    const double err = ((z.Z.col(j) - fd).array().abs() / denom).maxCoeff();
    const double err_gn = ((zg.Z.col(j) - fd).array().abs() / denom).maxCoeff();
    worst = std::max(worst, err);
    worst_gn = std::max(worst_gn, err_gn);
    EXPECT_LE(err, 1e-3) << "column " << j;
  }
  std::printf("ift vs re-solve fd: exact %.3e, gauss-newton %.3e\n", worst, worst_gn);
}

// Single state, one leg, rotation pinned: (p, f) follow the linear fusion formula, so
// their derivatives w.r.t. the foot offset and R_alpha follow from differentiating it.
TEST(Sensitivity, SingleStateMatchesClosedForm) {
  RobotDescription desc = RobotDescription::default_quadruped();
  desc.legs.resize(1);
  const RobotKinematics robot(desc);
  const ParamLayout layout(1, CovMode::kFull);
  testing::NoiseLevels lv;
  Eigen::VectorXd theta = testing::make_theta(layout, lv, false);
  const Vector3 alpha(0.1, 0.7, -1.4);
  const Matrix3 J = robot.leg_jacobian(alpha, 0, Vector3::Zero());
  set_covariance_block(theta, layout, CovBlock::kRalpha, 4e-6 * (J.transpose() * J).inverse());

  EstimationProblem p;
  p.robot = &robot;
  p.layout = layout;
  p.theta = theta;
  p.log.dt = 0.01;
  p.log.n_legs = 1;
  p.log.imu.resize(1);
  p.log.legs.assign(1, LegSample(1));
  p.log.legs[0].alpha[0] = alpha;
  p.log.legs[0].contact[0] = 0;
  p.log.mocap.resize(1);
  const Vector3 fk0 = robot.forward_kinematics(alpha, 0, Vector3::Zero());
  p.prior_mean = ManifoldState(1);
  p.prior_mean.pose.translation = Vector3(0.3, -0.2, 0.5);
  p.prior_mean.feet[0] = p.prior_mean.pose.translation + 1.04 * fk0;
  p.prior = PriorCov::defaults(1);
  p.prior.std_dev.segment<3>(TangentLayout::kRot).setConstant(1e-7);
  p.prior.std_dev.segment<3>(TangentLayout::kTrans).setConstant(2e-3);
  p.prior.std_dev.segment<3>(TangentLayout::foot(0)).setConstant(5e-3);

  auto fusion = [&](const Eigen::VectorXd& th) {
    const Vector3 tf = theta_foot(th, layout, 0);
    const Vector3 fk = robot.forward_kinematics(alpha, 0, tf);
    const Matrix3 Jt = robot.leg_jacobian(alpha, 0, tf);
    const Matrix3 W = (Jt * covariance_block(th, layout, CovBlock::kRalpha) * Jt.transpose()).inverse();
    Eigen::Matrix<double, 6, 6> Pinv = Eigen::Matrix<double, 6, 6>::Zero();
    Pinv.topLeftCorner<3, 3>() = Matrix3::Identity() / 4e-6;
    Pinv.bottomRightCorner<3, 3>() = Matrix3::Identity() / 25e-6;
    Eigen::Matrix<double, 3, 6> H;
    H << Matrix3::Identity(), -Matrix3::Identity();
    Eigen::Matrix<double, 6, 1> mu;
    mu << p.prior_mean.pose.translation, p.prior_mean.feet[0];
    const Eigen::Matrix<double, 6, 6> A = Pinv + H.transpose() * W * H;
    return Eigen::Matrix<double, 6, 1>(A.ldlt().solve(Pinv * mu - H.transpose() * W * fk));
  };

  const EstimateResult r = solve_fie(p, {p.prior_mean}, testing::tight_solver());
  ASSERT_TRUE(r.converged);
  const SensitivityMatrix z = compute_sensitivity(r.trajectory, p);
  std::vector<int> cols;
  for (int i = 0; i < 3; ++i) cols.push_back(layout.foot_offset(0) + i);
  for (int i = 0; i < 6; ++i) cols.push_back(layout.cov_offset(CovBlock::kRalpha) + i);
  for (int j : cols) {
    const double h = 1e-7 * std::max(1.0, std::abs(theta[j]) * 1e3);
    Eigen::VectorXd tp = theta, tm = theta;
    tp[j] += h;
    tm[j] -= h;
    const Eigen::Matrix<double, 6, 1> dz = (fusion(tp) - fusion(tm)) / (2.0 * h);
    Eigen::Matrix<double, 6, 1> zj;
    zj << z.Z.col(j).segment<3>(TangentLayout::kTrans), z.Z.col(j).segment<3>(TangentLayout::foot(0));
    // Left perturbation of the translation is a plain shift at zero rotation.
    EXPECT_LT((zj - dz).norm(), 1e-5 * (1.0 + dz.norm())) << "column " << j;
  }
}

}  // namespace
}  // namespace legcal
