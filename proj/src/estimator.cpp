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

#include "legcal/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <spdlog/spdlog.h>

#include "legcal/ad.hpp"
#include "legcal/errors.hpp"
#include "step_assembly.hpp"

namespace legcal {

namespace {

using detail::StepBlock;

template <int N>
using D = ad::Dual<double, N>;

template <int N, int Rows>
void split(const Eigen::Matrix<D<N>, Rows, 1>& r, Eigen::Matrix<double, Rows, 1>& val,
           Eigen::Matrix<double, Rows, N>& jac) {
  for (int i = 0; i < Rows; ++i) {
    val[i] = r[i].a;
    for (int j = 0; j < N; ++j) jac(i, j) = r[i].v[j];
  }
}

template <int N>
lie::Vec3<D<N>> seeded3(int first) {
  lie::Vec3<D<N>> v;
  for (int i = 0; i < 3; ++i) v[i] = D<N>(0.0, first + i);
  return v;
}

template <int N>
lie::Vec6<D<N>> seeded6(int first) {
  lie::Vec6<D<N>> v;
  for (int i = 0; i < 6; ++i) v[i] = D<N>(0.0, first + i);
  return v;
}

void process_block(const std::vector<ManifoldState>& X, const EstimationProblem& problem,
                   const ResidualContext& ctx, int k, StepBlock& blk) {
  constexpr int N = detail::kProcessVars;
  const ManifoldState& x0 = X[k];
  const ManifoldState& x1 = X[k + 1];
  const auto r = process_residual<D<N>>(x0, x1, problem.log.imu[k], ctx.dt, problem.gravity,
                                        seeded6<N>(0), seeded3<N>(6), seeded3<N>(9),
                                        seeded3<N>(12), seeded6<N>(15), seeded3<N>(21));
  Eigen::Matrix<double, 9, 1> rv;
  Eigen::Matrix<double, 9, N> J;
  split<N, 9>(r, rv, J);
  const Eigen::Matrix<double, N, 9> JtW = J.transpose() * ctx.W_proc;
  const Eigen::Matrix<double, N, N> Hl = 2.0 * JtW * J;
  const Eigen::Matrix<double, N, 1> gl = 2.0 * JtW * rv;
  const auto slots = detail::process_slots(ctx.n_legs);
  blk.add_hessian(Hl, slots);
  blk.add_gradient(gl, slots);
  blk.cost += rv.dot(ctx.W_proc * rv);

  const auto& c0 = problem.log.legs[k].contact;
  const auto& c1 = problem.log.legs[k + 1].contact;
  for (int j = 0; j < ctx.n_legs; ++j) {
    if (c0[j] && c1[j]) blk.add_random_walk(TangentLayout::foot(j), ctx.W_foot, x1.feet[j] - x0.feet[j]);
  }
  blk.add_random_walk(TangentLayout::accel_bias(ctx.n_legs), ctx.W_ba,
                      x1.accel_bias - x0.accel_bias);
  blk.add_random_walk(TangentLayout::gyro_bias(ctx.n_legs), ctx.W_bw,
                      x1.gyro_bias - x0.gyro_bias);
}

void measurement_block(const std::vector<ManifoldState>& X, const EstimationProblem& problem,
                       const ResidualContext& ctx, int k, StepBlock& blk) {
  constexpr int N = detail::kLegVars;
  const ManifoldState& x = X[k];
  const LegSample& legs = problem.log.legs[k];
  const Vector3& gyro = problem.log.imu[k].gyro;
  for (int j = 0; j < ctx.n_legs; ++j) {
    lie::Vec3<D<N>> rp, rv;
    measurement_residual<D<N>>(x, j, ctx.terms[k][j], legs.alpha_dot[j], gyro, seeded6<N>(0),
                               seeded3<N>(6), seeded3<N>(9), seeded3<N>(12),
                               lie::Vec3<D<N>>(ctx.theta_foot[j].cast<D<N>>()), rp, rv);
    Eigen::Matrix<double, 6, 1> r;
    Eigen::Matrix<double, 6, N> J;
    Eigen::Matrix<D<N>, 6, 1> rr;
    rr << rp, rv;
    split<N, 6>(rr, r, J);
    Eigen::Matrix<double, 6, 6> W = Eigen::Matrix<double, 6, 6>::Zero();
    W.topLeftCorner<3, 3>() = ctx.W_p[k][j];
    if (legs.contact[j]) W.bottomRightCorner<3, 3>() = ctx.W_v[k][j];
    const Eigen::Matrix<double, N, 6> JtW = J.transpose() * W;
    const auto slots = detail::leg_slots(ctx.n_legs, j);
    blk.add_hessian(Eigen::Matrix<double, N, N>(2.0 * JtW * J), slots);
    blk.add_gradient(Eigen::Matrix<double, N, 1>(2.0 * JtW * r), slots);
    blk.cost += r.dot(W * r);
  }
}

void prior_block(const std::vector<ManifoldState>& X, const EstimationProblem& problem,
                 const ResidualContext& ctx, BlockTridiagonal& H, Eigen::VectorXd& g,
                 double& cost) {
  constexpr int N = 6;
  const Eigen::VectorXd r = boxminus(X[0], problem.prior_mean);
  const auto rp = prior_pose_residual<D<N>>(X[0].pose, problem.prior_mean.pose, seeded6<N>(0));
  Eigen::MatrixXd J = Eigen::MatrixXd::Identity(ctx.dim, ctx.dim);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) J(i, j) = rp[i].v[j];
  const Eigen::MatrixXd JtW = J.transpose() * ctx.W_prior.asDiagonal();
  H.diag[0] += 2.0 * JtW * J;
  g.head(ctx.dim) += 2.0 * JtW * r;
  cost += r.dot(ctx.W_prior.asDiagonal() * r);
}

}  // namespace

NormalEquations build_normal_equations(const std::vector<ManifoldState>& X,
                                       const EstimationProblem& problem,
                                       const ResidualContext& ctx, Exec exec) {
  const int N = problem.num_states();
  if (static_cast<int>(X.size()) != N) throw Error(ErrorCode::kLengthMismatch, "trajectory length");
  const int n = ctx.dim;
  std::vector<StepBlock> blocks(N);
  auto step = [&](int k) {
    blocks[k].init(n);
    if (k + 1 < N) process_block(X, problem, ctx, k, blocks[k]);
    measurement_block(X, problem, ctx, k, blocks[k]);
  };
  if (exec == Exec::kSerial) {
    for (int k = 0; k < N; ++k) step(k);
  } else {
#pragma omp parallel for schedule(dynamic, 8)
    for (int k = 0; k < N; ++k) step(k);
  }

  NormalEquations ne;
  ne.H = BlockTridiagonal(N, n);
  ne.g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(N) * n);
  prior_block(X, problem, ctx, ne.H, ne.g, ne.cost);
  detail::reduce_steps(blocks, ne.H, ne.g, ne.cost);
  return ne;
}

std::vector<ManifoldState> retract(const std::vector<ManifoldState>& X,
                                   const Eigen::VectorXd& delta) {
  std::vector<ManifoldState> out(X.size());
  if (X.empty()) return out;
  const int n = X[0].tangent_dim();
  if (delta.size() != static_cast<Eigen::Index>(X.size()) * n) {
    throw Error(ErrorCode::kLengthMismatch, "delta size");
  }
  for (std::size_t k = 0; k < X.size(); ++k) {
    out[k] = boxplus(X[k], delta.segment(static_cast<Eigen::Index>(k) * n, n));
  }
  return out;
}

Eigen::VectorXd trajectory_difference(const std::vector<ManifoldState>& X1,
                                      const std::vector<ManifoldState>& X2) {
  if (X1.size() != X2.size()) throw Error(ErrorCode::kLengthMismatch, "trajectory length");
  if (X1.empty()) return {};
  const int n = X1[0].tangent_dim();
  Eigen::VectorXd d(static_cast<Eigen::Index>(X1.size()) * n);
  for (std::size_t k = 0; k < X1.size(); ++k) {
    d.segment(static_cast<Eigen::Index>(k) * n, n) = boxminus(X1[k], X2[k]);
  }
  return d;
}

std::vector<ManifoldState> dead_reckon(const EstimationProblem& problem) {
  problem.validate();
  const auto feet_offsets = theta_feet(problem.theta, problem.layout);
  const int N = problem.num_states();
  std::vector<ManifoldState> X(N);
  X[0] = problem.prior_mean;
  for (int k = 0; k < N; ++k) {
    if (k > 0) X[k] = process_propagate(X[k - 1], problem.log.imu[k - 1], problem.log.dt,
                                        problem.gravity);
    const Matrix3 R = X[k].pose.rotation.matrix();
    for (int j = 0; j < problem.log.n_legs; ++j) {
      X[k].feet[j] = X[k].pose.translation +
                     R * problem.robot->forward_kinematics(problem.log.legs[k].alpha[j], j,
                                                           feet_offsets[j]);
    }
  }
  return X;
}

double scaled_gradient_norm(const NormalEquations& ne) {
  const Eigen::VectorXd d = ne.H.diagonal();
  double m = 0.0;
  for (int i = 0; i < d.size(); ++i) {
    m = std::max(m, std::abs(ne.g[i]) / std::sqrt(std::max(d[i], std::numeric_limits<double>::min())));
  }
  return m;
}

EstimateResult solve_fie(const EstimationProblem& problem, const std::vector<ManifoldState>& init,
                         const SolverOptions& options) {
  const ResidualContext ctx = make_context(problem);
  EstimateResult res;
  res.trajectory = init;
  NormalEquations ne = build_normal_equations(res.trajectory, problem, ctx, options.exec);
  double lambda = std::clamp(options.lambda_init, options.lambda_min, options.lambda_max);
  double nu = 2.0;
  int failures_at_max = 0;

  for (int it = 0; it < options.max_iterations; ++it) {
    const double gnorm = ne.g.cwiseAbs().maxCoeff();
    res.iterations = it;
    if (gnorm <= options.grad_tol || scaled_gradient_norm(ne) <= options.scaled_grad_tol) {
      res.converged = true;
      break;
    }
    BlockTridiagonal Hd = ne.H;
    Hd.scale_diagonal(lambda);
    IterationRecord rec{it, ne.cost, gnorm, lambda, false};

    Eigen::VectorXd delta;
    bool ok = true;
    try {
      delta = BlockCholesky(Hd).solve(Eigen::VectorXd(-ne.g));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNotFactorizable) throw;
      ok = false;
    }
    if (ok && delta.cwiseAbs().maxCoeff() <= options.step_tol) {
      res.converged = true;
      break;
    }
    if (ok) {
      std::vector<ManifoldState> trial;
      double trial_cost = 0.0;
      try {
        trial = retract(res.trajectory, delta);
        trial_cost = total_cost(trial, problem, ctx);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kAngleNearPi) throw;
        trial_cost = std::numeric_limits<double>::infinity();
      }
      const double predicted = -(ne.g.dot(delta) + 0.5 * delta.dot(ne.H.multiply(delta)));
      const double actual = ne.cost - trial_cost;
      const double rho = predicted > 0.0 ? actual / predicted : -1.0;
      if (std::isfinite(trial_cost) && actual >= 0.0 && rho > 0.0) {
        rec.accepted = true;
        res.diagnostics.push_back(rec);
        const double rel = actual / std::max(ne.cost, std::numeric_limits<double>::min());
        res.trajectory = std::move(trial);
        ne = build_normal_equations(res.trajectory, problem, ctx, options.exec);
        lambda = std::max(options.lambda_min,
                          lambda * std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3)));
        nu = 2.0;
        failures_at_max = 0;
        spdlog::trace("fie it={} cost={:.6e} grad={:.3e} lambda={:.2e}", it, ne.cost, gnorm,
                      lambda);
        if (rel <= options.rel_cost_tol || ne.cost == 0.0) {
          res.iterations = it + 1;
          res.converged = true;
          break;
        }
        continue;
      }
    }
    res.diagnostics.push_back(rec);
    if (lambda >= options.lambda_max && ++failures_at_max >= 3) break;
    lambda = std::min(options.lambda_max, lambda * nu);
    nu *= 2.0;
    res.iterations = it + 1;
  }
  // Newton polishing: keep a step while the next Newton step keeps shrinking.
  auto newton_step = [](const NormalEquations& e) {
    return BlockCholesky(e.H).solve(Eigen::VectorXd(-e.g));
  };
  try {
    Eigen::VectorXd delta;
    if (options.polish_steps > 0) delta = newton_step(ne);
    for (int i = 0; i < options.polish_steps; ++i) {
      const double size = delta.cwiseAbs().maxCoeff();
      if (!(size > 0.0)) break;
      std::vector<ManifoldState> trial = retract(res.trajectory, delta);
      NormalEquations trial_ne = build_normal_equations(trial, problem, ctx, options.exec);
      Eigen::VectorXd next = newton_step(trial_ne);
      if (!std::isfinite(trial_ne.cost) || !(next.cwiseAbs().maxCoeff() < size)) break;
      res.trajectory = std::move(trial);
      ne = std::move(trial_ne);
      delta = std::move(next);
      ++res.polish_steps;
    }
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kNotFactorizable && e.code() != ErrorCode::kAngleNearPi) throw;
  }
  const double scaled = scaled_gradient_norm(ne);
  res.cost = ne.cost;
  res.grad_norm = ne.g.cwiseAbs().maxCoeff();
  res.scaled_grad_norm = scaled;
  if (res.grad_norm <= options.grad_tol || res.scaled_grad_norm <= options.scaled_grad_tol) {
    res.converged = true;
  }
  if (!res.converged) {
    // Newton decrement: the full Newton step cannot lower the cost by more than its rounding.
    try {
      res.newton_decrement = 0.5 * std::abs(ne.g.dot(newton_step(ne)));
      res.converged = res.newton_decrement <= options.rel_cost_tol * ne.cost;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNotFactorizable) throw;
    }
  }
  return res;
}

EstimateResult solve_fie(const EstimationProblem& problem, const SolverOptions& options) {
  return solve_fie(problem, dead_reckon(problem), options);
}

KktResidual kkt_residual(const std::vector<ManifoldState>& X, const EstimationProblem& problem) {
  const ResidualContext ctx = make_context(problem);
  const NormalEquations ne = build_normal_equations(X, problem, ctx);
  return {ne.g, ne.g.cwiseAbs().maxCoeff(), scaled_gradient_norm(ne)};
}

}  // namespace legcal
