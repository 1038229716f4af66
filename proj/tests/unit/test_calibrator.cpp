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
#include <limits>
#include <random>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "legcal/calibrator.hpp"
#include "legcal/errors.hpp"
#include "support/fixtures.hpp"

namespace legcal {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

FeasibleSet box2(double lo, double hi) {
  FeasibleSet fs;
  fs.lower = Eigen::Vector2d(lo, lo);
  fs.upper = Eigen::Vector2d(hi, hi);
  return fs;
}

FeasibleSet random_box(int m, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-2.0, 2.0), w(0.1, 3.0);
  FeasibleSet fs;
  fs.lower.resize(m);
  fs.upper.resize(m);
  for (int j = 0; j < m; ++j) {
    fs.lower[j] = u(rng);
    fs.upper[j] = fs.lower[j] + w(rng);
  }
  return fs;
}

Eigen::VectorXd random_inside(const FeasibleSet& fs, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::VectorXd x(fs.lower.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) x[j] = fs.lower[j] + u(rng) * (fs.upper[j] - fs.lower[j]);
  return x;
}

TEST(Lmo, VertexAndTrustRegionExamples) {
  const FeasibleSet fs = box2(0.0, 10.0);
  const Eigen::Vector2d g(1.0, -1.0), th(5.0, 5.0);
  EXPECT_EQ(lmo(g, th, fs, kInf), Eigen::VectorXd(Eigen::Vector2d(0.0, 10.0)));
  EXPECT_EQ(lmo(g, th, fs, 1.0), Eigen::VectorXd(Eigen::Vector2d(4.0, 6.0)));
  EXPECT_EQ(lmo(Eigen::Vector2d(0.0, 2.0), th, fs, 1.0), Eigen::VectorXd(Eigen::Vector2d(5.0, 4.0)));
}

TEST(Lmo, MatchesVertexEnumeration) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> r(0.05, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int m = 1 + trial % 6;
    const FeasibleSet fs = random_box(m, rng);
    const Eigen::VectorXd th = random_inside(fs, rng);
    Eigen::VectorXd g(m), rad(m);
    for (int j = 0; j < m; ++j) {
      g[j] = n(rng);
      rad[j] = r(rng);
    }
    const Eigen::VectorXd lo = fs.lower.cwiseMax(th - rad), hi = fs.upper.cwiseMin(th + rad);
    double best = kInf;
    for (int mask = 0; mask < (1 << m); ++mask) {
      Eigen::VectorXd v(m);
      for (int j = 0; j < m; ++j) v[j] = (mask >> j) & 1 ? hi[j] : lo[j];
      best = std::min(best, g.dot(v));
    }
    const Eigen::VectorXd s = lmo(g, th, fs, rad);
    EXPECT_NEAR(g.dot(s), best, 1e-12 * (1.0 + std::abs(best)));
    EXPECT_TRUE((s.array() >= lo.array()).all() && (s.array() <= hi.array()).all());
  }
}

TEST(ModelLmo, MatchesActiveSetEnumeration) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 60; ++trial) {
    const int m = 1 + trial % 5;
    const FeasibleSet fs = random_box(m, rng);
    const Eigen::VectorXd th = random_inside(fs, rng);
    const Eigen::VectorXd rad = Eigen::VectorXd::Constant(m, 0.7);
    Eigen::MatrixXd A(m + 2, m);
    for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = n(rng);
    const Eigen::MatrixXd H = A.transpose() * A;
    Eigen::VectorXd g(m);
    for (int j = 0; j < m; ++j) g[j] = 3.0 * n(rng);
    const Eigen::VectorXd lo = fs.lower.cwiseMax(th - rad) - th;
    const Eigen::VectorXd hi = fs.upper.cwiseMin(th + rad) - th;
    auto q = [&](const Eigen::VectorXd& d) { return g.dot(d) + 0.5 * d.dot(H * d); };

    // Each coordinate at its lower bound, upper bound, or free (stationary in the free block).
    double best = kInf;
    int combos = 1;
    for (int j = 0; j < m; ++j) combos *= 3;
    for (int c = 0; c < combos; ++c) {
      Eigen::VectorXd d = Eigen::VectorXd::Zero(m);
      std::vector<int> free;
      for (int j = 0, code = c; j < m; ++j, code /= 3) {
        if (code % 3 == 0) d[j] = lo[j];
        if (code % 3 == 1) d[j] = hi[j];
        if (code % 3 == 2) free.push_back(j);
      }
      if (!free.empty()) {
        const int f = static_cast<int>(free.size());
        Eigen::MatrixXd Hff(f, f);
        Eigen::VectorXd rhs(f);
        for (int a = 0; a < f; ++a) {
          rhs[a] = -g[free[a]];
          for (int j = 0; j < m; ++j) {
            if (std::find(free.begin(), free.end(), j) == free.end()) rhs[a] -= H(free[a], j) * d[j];
          }
          for (int b = 0; b < f; ++b) Hff(a, b) = H(free[a], free[b]);
        }
        const Eigen::VectorXd x = Hff.ldlt().solve(rhs);
        bool ok = true;
        for (int a = 0; a < f; ++a) {
          d[free[a]] = x[a];
          ok = ok && x[a] >= lo[free[a]] - 1e-12 && x[a] <= hi[free[a]] + 1e-12;
        }
        if (!ok) continue;
      }
      best = std::min(best, q(d));
    }
    const Eigen::VectorXd s = model_lmo(g, H, th, fs, rad);
    EXPECT_NEAR(q(s - th), best, 1e-9 * (1.0 + std::abs(best))) << "trial " << trial;
    EXPECT_TRUE(((s - th).array() >= lo.array()).all() && ((s - th).array() <= hi.array()).all());
  }
}

TEST(ModelLmo, ZeroModelIsTheLinearVertex) {
  const FeasibleSet fs = box2(0.0, 10.0);
  const Eigen::Vector2d g(1.0, -1.0), th(5.0, 5.0);
  const Eigen::VectorXd s = model_lmo(g, Eigen::MatrixXd::Zero(2, 2), th, fs, Eigen::Vector2d(1.0, 1.0));
  EXPECT_EQ(s, Eigen::VectorXd(Eigen::Vector2d(4.0, 6.0)));
}

TEST(Armijo, FullStepOnQuadratic) {
  // L = x^2 / 2 from x = 1 along the direction -1: the target point is the minimizer 0.
  auto f = [](const Eigen::VectorXd& x) { return 0.5 * x.squaredNorm(); };
  const Eigen::VectorXd th = Eigen::VectorXd::Constant(1, 1.0);
  const ArmijoResult r = armijo_search(f, th, f(th), Eigen::VectorXd::Zero(1), th);
  EXPECT_EQ(r.gamma, 1.0);
  EXPECT_EQ(r.trials, 1);
  EXPECT_EQ(r.loss, 0.0);

  // Target -1 overshoots to the same loss; the halved step lands on the minimizer.
  const ArmijoResult h = armijo_search(f, th, f(th), Eigen::VectorXd::Constant(1, -1.0), th);
  EXPECT_EQ(h.gamma, 0.5);
  EXPECT_EQ(h.loss, 0.0);
}

TEST(Armijo, HalvesOnSteepCurvature) {
  // L(x) = -x + 1.5 x^2 from x = 0 towards 1: L(1) = 0.5 fails, L(0.5) = -0.125 passes.
  auto f = [](const Eigen::VectorXd& x) { return -x[0] + 1.5 * x[0] * x[0]; };
  const Eigen::VectorXd th = Eigen::VectorXd::Zero(1), s = Eigen::VectorXd::Ones(1);
  const ArmijoResult r = armijo_search(f, th, 0.0, s, Eigen::VectorXd::Constant(1, -1.0));
  EXPECT_EQ(r.gamma, 0.5);
  EXPECT_EQ(r.trials, 2);
  EXPECT_DOUBLE_EQ(r.loss, -0.125);
}

TEST(Armijo, NonDescentAndExhaustion) {
  int calls = 0;
  auto f = [&](const Eigen::VectorXd&) {
    ++calls;
    return kInf;
  };
  const Eigen::VectorXd th = Eigen::VectorXd::Zero(1), s = Eigen::VectorXd::Ones(1);
  const ArmijoResult up = armijo_search(f, th, 0.0, s, Eigen::VectorXd::Ones(1));
  EXPECT_FALSE(up.descent);
  EXPECT_EQ(up.gamma, 0.0);
  EXPECT_EQ(calls, 0);

  const ArmijoResult ex = armijo_search(f, th, 0.0, s, -Eigen::VectorXd::Ones(1));
  EXPECT_TRUE(ex.exhausted);
  EXPECT_EQ(ex.gamma, 0.0);
  EXPECT_EQ(ex.trials, 31);
}

ManifoldState state_at(const Pose& pose, const Vector3& v) {
  ManifoldState x(4);
  x.pose = pose;
  x.velocity = v;
  return x;
}

TEST(UpperLoss, Examples) {
  MocapSample m;
  m.velocity = Vector3(0.1, 0.2, 0.3);
  const Vector3 zero = Vector3::Zero();
  ManifoldState x = state_at(Pose(Rotation(), Vector3(0.3, 0.0, 0.0)), m.velocity);
  EXPECT_NEAR(upper_loss({x}, {m}, zero), 0.045, 1e-15);

  // The estimate equals the corrected ground truth.
  m.pose = Pose(Rotation::from_quaternion(0.9, 0.1, -0.3, 0.2), Vector3(1.0, 2.0, 0.5));
  const Vector3 tb(0.05, 0.02, 0.03);
  x = state_at(corrected_ground_truth(m, tb), m.velocity);
  EXPECT_NEAR(upper_loss({x}, {m}, tb), 0.0, 1e-28);
  EXPECT_NEAR(x.pose.translation.x(), (m.pose.translation - m.pose.rotation * tb).x(), 0.0);

  try {
    upper_loss({x, x}, {m}, tb);
    FAIL() << "expected LengthMismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kLengthMismatch);
  }
}

std::vector<ManifoldState> perturbed_states(const std::vector<MocapSample>& gt, std::uint64_t seed) {
  std::vector<ManifoldState> X;
  for (std::size_t k = 0; k < gt.size(); ++k) {
    ManifoldState x = state_at(gt[k].pose, gt[k].velocity);
    X.push_back(boxplus(x, testing::random_tangent(x.tangent_dim(), 0.2, seed + k)));
  }
  return X;
}

std::vector<MocapSample> random_mocap(int count, std::uint64_t seed) {
  std::vector<MocapSample> gt;
  for (int k = 0; k < count; ++k) {
    const ManifoldState x = boxplus(ManifoldState(4), testing::random_tangent(27, 1.0, seed + 100 + k));
    MocapSample m;
    m.pose = x.pose;
    m.velocity = x.velocity;
    gt.push_back(m);
  }
  return gt;
}

TEST(UpperLoss, PartialsMatchFiniteDifferences) {
  const std::vector<MocapSample> gt = random_mocap(3, 1);
  const std::vector<ManifoldState> X = perturbed_states(gt, 2);
  const Vector3 tb(0.04, -0.03, 0.02);
  const LossPartials lp = loss_partials(X, gt, tb);
  EXPECT_DOUBLE_EQ(lp.loss, upper_loss(X, gt, tb));
  const int n = X[0].tangent_dim();
  const double h = 1e-6;
  for (std::size_t k = 0; k < X.size(); ++k) {
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXd tau = Eigen::VectorXd::Zero(n);
      tau[i] = h;
      std::vector<ManifoldState> Xp = X, Xm = X;
      Xp[k] = boxplus(X[k], tau);
      Xm[k] = boxplus(X[k], -tau);
      const double fd = (upper_loss(Xp, gt, tb) - upper_loss(Xm, gt, tb)) / (2.0 * h);
      EXPECT_NEAR(lp.d_state[static_cast<Eigen::Index>(k) * n + i], fd, 1e-8) << k << "," << i;
    }
  }
  for (int i = 0; i < 3; ++i) {
    Vector3 d = Vector3::Zero();
    d[i] = h;
    const double fd = (upper_loss(X, gt, tb + d) - upper_loss(X, gt, tb - d)) / (2.0 * h);
    EXPECT_NEAR(lp.d_base[i], fd, 1e-8);
  }
}

TEST(UpperLoss, BaseTermWithoutRotationError) {
  // With R_est = R_mocap the base partial is -sum R_m^T (p_m - R_m theta_b - p_est).
  std::vector<MocapSample> gt = random_mocap(4, 9);
  std::vector<ManifoldState> X;
  const Vector3 tb(0.05, 0.02, 0.03);
  Vector3 expected = Vector3::Zero();
  for (std::size_t k = 0; k < gt.size(); ++k) {
    const Vector3 p = gt[k].pose.translation + Vector3(0.1, -0.2, 0.05) * static_cast<double>(k + 1);
    X.push_back(state_at(Pose(gt[k].pose.rotation, p), gt[k].velocity));
    const Matrix3 R = gt[k].pose.rotation.matrix();
    expected -= R.transpose() * (gt[k].pose.translation - R * tb - p);
  }
  const LossPartials lp = loss_partials(X, gt, tb);
  EXPECT_LT((lp.d_base - expected).cwiseAbs().maxCoeff(), 1e-12);
}

struct Fd {
  std::unique_ptr<testing::Scenario> sc;
  Eigen::VectorXd theta0;  // generating covariances, zero offsets
};

Fd fd_problem(bool noise = true) {
  testing::ScenarioOptions o;
  o.steps = 50;
  o.seed = 11;
  o.noise = noise;
  Fd f{testing::make_scenario(o), {}};
  f.theta0 = f.sc->theta_true;
  f.theta0.tail(3 * f.sc->layout.n_legs() + 3).setZero();
  return f;
}

TEST(BilevelGradient, MatchesFullPipelineFiniteDifference) {
  Fd f = fd_problem();
  const BilevelProblem bp(f.sc->problem, f.sc->data.log.mocap, testing::tight_solver());
  const BilevelProblem::Gradient g = bp.gradient(f.theta0);
  const Eigen::VectorXd fd =
      finite_difference_gradient(bp, f.theta0, 1e-5, g.eval.solve.trajectory);
  const double floor = 1e-6 * fd.cwiseAbs().maxCoeff();
  for (Eigen::Index j = 0; j < fd.size(); ++j) {
    const double rel = std::abs(g.grad[j] - fd[j]) / std::max(std::abs(fd[j]), floor);
    EXPECT_LT(rel, 1e-3) << "component " << j << " analytic " << g.grad[j] << " fd " << fd[j];
  }
}

TEST(BilevelGradient, BaseOffsetIsInvisibleToTheEstimator) {
  Fd f = fd_problem();
  const BilevelProblem bp(f.sc->problem, f.sc->data.log.mocap);
  const auto a = bp.evaluate(f.theta0);
  Eigen::VectorXd shifted = f.theta0;
  shifted.tail<3>() = Vector3(0.01, -0.02, 0.03);
  const auto b = bp.evaluate(shifted);
  EXPECT_EQ(a.solve.trajectory.back().pose.translation, b.solve.trajectory.back().pose.translation);
  EXPECT_NE(a.loss, b.loss);
}

TEST(BilevelGradient, VanishesAtTruthWithoutNoise) {
  Fd f = fd_problem(false);
  const BilevelProblem bp(f.sc->problem, f.sc->data.log.mocap, testing::tight_solver());
  const BilevelProblem::Gradient g = bp.gradient(f.sc->theta_true);
  EXPECT_LT(g.eval.loss, 1e-20);
  EXPECT_LT(g.grad.norm(), 1e-8);
}

TEST(BilevelGradient, CorruptionScalesSensitivityTermOnly) {
  Fd f = fd_problem();
  BilevelProblem bp(f.sc->problem, f.sc->data.log.mocap);
  const BilevelProblem::Evaluation ev = bp.evaluate(f.theta0);
  const Eigen::VectorXd clean = bp.gradient_at(f.theta0, ev);
  bp.set_sensitivity_corruption(0.5);
  const Eigen::VectorXd bad = bp.gradient_at(f.theta0, ev);
  const int cov = f.sc->layout.cov_size();
  EXPECT_LT((bad.head(cov) - 1.5 * clean.head(cov)).cwiseAbs().maxCoeff(),
            1e-12 * clean.head(cov).cwiseAbs().maxCoeff());
}

TEST(BilevelGradient, GaussNewtonModelIsSymmetricPsd) {
  Fd f = fd_problem();
  const BilevelProblem bp(f.sc->problem, f.sc->data.log.mocap);
  const BilevelProblem::Gradient g = bp.gradient(f.theta0, nullptr, true);
  const Eigen::MatrixXd& H = g.gauss_newton;
  ASSERT_EQ(H.rows(), f.theta0.size());
  EXPECT_EQ((H - H.transpose()).cwiseAbs().maxCoeff(), 0.0);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
  EXPECT_GT(es.eigenvalues().minCoeff(), -1e-10 * es.eigenvalues().maxCoeff());
}

TEST(FiniteDifference, SerialAndParallelAgree) {
  Fd f = fd_problem();
  const BilevelProblem bp(f.sc->problem, f.sc->data.log.mocap);
  const auto ev = bp.evaluate(f.theta0);
  const std::vector<int> comps = {0, 20, 30, 37};
  const Eigen::VectorXd a =
      finite_difference_gradient(bp, f.theta0, 1e-5, ev.solve.trajectory, comps, Exec::kSerial);
  const Eigen::VectorXd b =
      finite_difference_gradient(bp, f.theta0, 1e-5, ev.solve.trajectory, comps, Exec::kParallel);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a[1], 0.0);
}

FeasibleSet test_box(const ParamLayout& layout) {
  return FeasibleSet::per_block(layout, {0.05, 1.0, 0.1, 0.05, 0.05, 5e-3, 0.05, 1.0}, 0.1);
}

TEST(Calibrate, ZeroIterationsReturnsStart) {
  Fd f = fd_problem();
  const BilevelProblem bp(f.sc->problem, f.sc->data.log.mocap);
  FrankWolfeOptions o;
  o.t_max = 0;
  const CalibrationResult r = calibrate(bp, f.theta0, test_box(f.sc->layout), o);
  EXPECT_EQ(r.theta, f.theta0);
  ASSERT_EQ(r.trace.records.size(), 1u);
  EXPECT_EQ(r.stop_reason, "t_max");
  EXPECT_EQ(r.loss, r.trace.records[0].loss);
}

TEST(Calibrate, StopsImmediatelyAtNoiseFreeTruth) {
  Fd f = fd_problem(false);
  const BilevelProblem bp(f.sc->problem, f.sc->data.log.mocap, testing::tight_solver());
  const CalibrationResult r = calibrate(bp, f.sc->theta_true, test_box(f.sc->layout));
  ASSERT_EQ(r.trace.records.size(), 1u);
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.stop_reason, "converged");
  EXPECT_LT(r.trace.records[0].gap, 1e-8);
}

TEST(Calibrate, RejectsInfeasibleStart) {
  Fd f = fd_problem();
  const BilevelProblem bp(f.sc->problem, f.sc->data.log.mocap);
  Eigen::VectorXd bad = f.theta0;
  bad.tail<1>()[0] = 0.5;
  try {
    calibrate(bp, bad, test_box(f.sc->layout));
    FAIL() << "expected BoxViolation";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kBoxViolation);
  }
}

TEST(Calibrate, DescendsMonotonicallyAndStaysFeasible) {
  Fd f = fd_problem();
  const BilevelProblem bp(f.sc->problem, f.sc->data.log.mocap);
  const FeasibleSet fs = test_box(f.sc->layout);
  FrankWolfeOptions o;
  o.t_max = 6;
  o.check_convexity = true;
  const CalibrationResult r = calibrate(bp, f.theta0, fs, o);
  ASSERT_GE(r.trace.records.size(), 2u);
  for (std::size_t i = 0; i < r.trace.records.size(); ++i) {
    const TraceRecord& rec = r.trace.records[i];
    EXPECT_EQ(fs.violations(rec.theta), 0);
    EXPECT_EQ(count_non_pd_blocks(rec.theta, f.sc->layout), 0);
    if (i + 1 < r.trace.records.size()) {
      EXPECT_LE(r.trace.records[i + 1].loss, rec.loss);
    }
  }
  EXPECT_LT(r.loss, 0.1 * r.trace.records.front().loss);
}

TEST(Calibrate, LinearDirectionAlsoDescends) {
  Fd f = fd_problem();
  const BilevelProblem bp(f.sc->problem, f.sc->data.log.mocap);
  FrankWolfeOptions o;
  o.t_max = 3;
  o.direction = Direction::kLinear;
  const CalibrationResult r = calibrate(bp, f.theta0, test_box(f.sc->layout), o);
  for (std::size_t i = 0; i + 1 < r.trace.records.size(); ++i) {
    const TraceRecord& a = r.trace.records[i];
    if (!a.accepted) continue;
    const double predicted = -a.gap;  // linear LMO step: grad^T (s - theta) = -gap
    EXPECT_LE(r.trace.records[i + 1].loss, a.loss + 1e-4 * a.gamma * predicted);
  }
  EXPECT_LT(r.loss, r.trace.records.front().loss);
}

TEST(Calibrate, FrozenCoordinatesKeepTheirValues) {
  Fd f = fd_problem();
  const BilevelProblem bp(f.sc->problem, f.sc->data.log.mocap);
  FrankWolfeOptions o;
  o.t_max = 2;
  o.frozen.assign(f.theta0.size(), false);
  const int cov = f.sc->layout.cov_size();
  for (int j = 0; j < cov; ++j) o.frozen[j] = true;
  const CalibrationResult r = calibrate(bp, f.theta0, test_box(f.sc->layout), o);
  EXPECT_EQ(r.theta.head(cov), f.theta0.head(cov));
  EXPECT_NE(r.theta.tail(15), f.theta0.tail(15));
}

}  // namespace
}  // namespace legcal
