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

#include "legcal/residuals.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include "legcal/errors.hpp"

namespace legcal {

namespace {

template <int N>
Eigen::Matrix<double, N, N> inverse_pd(const Eigen::Matrix<double, N, N>& S) {
  Eigen::LLT<Eigen::Matrix<double, N, N>> llt(S);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::kNotPD, "weight block not PD");
  return llt.solve(Eigen::Matrix<double, N, N>::Identity());
}

double quad(const Vector3& r, const Matrix3& W) { return r.dot(W * r); }

Vector3 zero3() { return Vector3::Zero(); }

}  // namespace

void EstimationProblem::validate() const {
  if (robot == nullptr) throw Error(ErrorCode::kInvalidArgument, "problem has no robot");
  if (log.size() < 1) throw Error(ErrorCode::kLengthMismatch, "empty log");
  if (log.legs.size() != log.size()) throw Error(ErrorCode::kLengthMismatch, "leg stream length");
  if (log.n_legs != robot->num_legs() || layout.n_legs() != log.n_legs) {
    throw Error(ErrorCode::kLengthMismatch, "leg count mismatch");
  }
  if (theta.size() != layout.size()) throw Error(ErrorCode::kLengthMismatch, "theta size");
  if (prior_mean.num_legs() != log.n_legs) throw Error(ErrorCode::kLengthMismatch, "prior legs");
  if (prior.std_dev.size() != state_dim()) throw Error(ErrorCode::kLengthMismatch, "prior size");
  for (int i = 0; i < prior.std_dev.size(); ++i) {
    if (!(prior.std_dev[i] > 0.0)) throw Error(ErrorCode::kNotPD, "prior std must be positive");
  }
}

ResidualContext make_context(const EstimationProblem& problem) {
  problem.validate();
  const auto& layout = problem.layout;
  const auto& theta = problem.theta;
  ResidualContext ctx;
  ctx.n_legs = problem.log.n_legs;
  ctx.dim = problem.state_dim();
  ctx.dt = problem.log.dt;

  const ProcessCov q = assemble_process_cov(theta, layout, ctx.dt);
  ctx.W_proc.setZero();
  ctx.W_proc.block<3, 3>(0, 0) = inverse_pd<3>(q.rot);
  ctx.W_proc.block<3, 3>(3, 3) = inverse_pd<3>(q.trans);
  ctx.W_proc.block<3, 3>(6, 6) = inverse_pd<3>(q.vel);
  ctx.W_foot = inverse_pd<3>(q.foot);
  ctx.W_ba = inverse_pd<3>(q.ba);
  ctx.W_bw = inverse_pd<3>(q.bw);
  ctx.W_prior = problem.prior.information_diagonal();
  ctx.theta_foot = theta_feet(theta, layout);

  const Matrix3 R_a = covariance_block(theta, layout, CovBlock::kRalpha);
  const Matrix3 R_ad = covariance_block(theta, layout, CovBlock::kRalphaDot);
  const Matrix3 Q_w = covariance_block(theta, layout, CovBlock::kQw);

  const int n = problem.num_states();
  ctx.terms.assign(n, std::vector<LegTerms>(ctx.n_legs));
  ctx.W_p.assign(n, std::vector<Matrix3>(ctx.n_legs));
  ctx.W_v.assign(n, std::vector<Matrix3>(ctx.n_legs));
#pragma omp parallel for schedule(static)
  for (int k = 0; k < n; ++k) {
    const LegSample& legs = problem.log.legs[k];
    for (int j = 0; j < ctx.n_legs; ++j) {
      ctx.terms[k][j] = problem.robot->leg_terms(legs.alpha[j], legs.alpha_dot[j], j);
      measurement_weights<double>(ctx.terms[k][j], problem.log.imu[k].gyro, R_a, R_ad, Q_w,
                                  ctx.theta_foot[j], legs.contact[j] != 0, ctx.W_p[k][j],
                                  ctx.W_v[k][j]);
    }
  }
  return ctx;
}

CostBreakdown cost_breakdown(const std::vector<ManifoldState>& X, const EstimationProblem& problem,
                             const ResidualContext& ctx) {
  if (static_cast<int>(X.size()) != problem.num_states()) {
    throw Error(ErrorCode::kLengthMismatch, "trajectory length");
  }
  const int n = problem.num_states();
  const lie::Vec6<double> z6 = lie::Vec6<double>::Zero();
  CostBreakdown c;

  Eigen::VectorXd r0 = boxminus(X[0], problem.prior_mean);
  c.prior = r0.dot(ctx.W_prior.asDiagonal() * r0);

  for (int k = 0; k < n; ++k) {
    const ManifoldState& x = X[k];
    const LegSample& legs = problem.log.legs[k];
    const ImuSample& u = problem.log.imu[k];
    if (k + 1 < n) {
      const ManifoldState& x1 = X[k + 1];
      const Eigen::Matrix<double, 9, 1> r = process_residual<double>(
          x, x1, u, ctx.dt, problem.gravity, z6, zero3(), zero3(), zero3(), z6, zero3());
      c.process += r.dot(ctx.W_proc * r);
      for (int j = 0; j < ctx.n_legs; ++j) {
        if (legs.contact[j] && problem.log.legs[k + 1].contact[j]) {
          c.random_walk += quad(x1.feet[j] - x.feet[j], ctx.W_foot);
        }
      }
      c.random_walk += quad(x1.accel_bias - x.accel_bias, ctx.W_ba);
      c.random_walk += quad(x1.gyro_bias - x.gyro_bias, ctx.W_bw);
    }
    for (int j = 0; j < ctx.n_legs; ++j) {
      Vector3 rp, rv;
      measurement_residual<double>(x, j, ctx.terms[k][j], legs.alpha_dot[j], u.gyro, z6, zero3(),
                                   zero3(), zero3(), ctx.theta_foot[j], rp, rv);
      c.leg_position += quad(rp, ctx.W_p[k][j]);
      if (legs.contact[j]) c.leg_velocity += quad(rv, ctx.W_v[k][j]);
    }
  }
  return c;
}

double total_cost(const std::vector<ManifoldState>& X, const EstimationProblem& problem,
                  const ResidualContext& ctx) {
  return cost_breakdown(X, problem, ctx).total();
}

Eigen::VectorXd whitened_residuals(const std::vector<ManifoldState>& X,
                                   const EstimationProblem& problem, const ResidualContext& ctx) {
  const int n = problem.num_states();
  const lie::Vec6<double> z6 = lie::Vec6<double>::Zero();
  std::vector<double> out;
  auto push = [&](const Eigen::VectorXd& r, const Eigen::MatrixXd& W) {
    const Eigen::MatrixXd L = Eigen::LLT<Eigen::MatrixXd>(W).matrixL();
    const Eigen::VectorXd w = L.transpose() * r;
    out.insert(out.end(), w.data(), w.data() + w.size());
  };
  push(boxminus(X[0], problem.prior_mean), ctx.W_prior.asDiagonal().toDenseMatrix());
  for (int k = 0; k < n; ++k) {
    const ManifoldState& x = X[k];
    const LegSample& legs = problem.log.legs[k];
    const ImuSample& u = problem.log.imu[k];
    if (k + 1 < n) {
      const ManifoldState& x1 = X[k + 1];
      push(process_residual<double>(x, x1, u, ctx.dt, problem.gravity, z6, zero3(), zero3(),
                                    zero3(), z6, zero3()),
           ctx.W_proc);
      for (int j = 0; j < ctx.n_legs; ++j) {
        if (legs.contact[j] && problem.log.legs[k + 1].contact[j]) {
          push(x1.feet[j] - x.feet[j], ctx.W_foot);
        }
      }
      push(x1.accel_bias - x.accel_bias, ctx.W_ba);
      push(x1.gyro_bias - x.gyro_bias, ctx.W_bw);
    }
    for (int j = 0; j < ctx.n_legs; ++j) {
      Vector3 rp, rv;
      measurement_residual<double>(x, j, ctx.terms[k][j], legs.alpha_dot[j], u.gyro, z6, zero3(),
                                   zero3(), zero3(), ctx.theta_foot[j], rp, rv);
      push(rp, ctx.W_p[k][j]);
      if (legs.contact[j]) push(rv, ctx.W_v[k][j]);
    }
  }
  return Eigen::Map<Eigen::VectorXd>(out.data(), static_cast<Eigen::Index>(out.size()));
}

}  // namespace legcal
