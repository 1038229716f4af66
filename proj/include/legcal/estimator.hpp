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

#include "legcal/block_tridiagonal.hpp"
#include "legcal/residuals.hpp"

namespace legcal {

struct SolverOptions {
  double grad_tol = 1e-8;         // on ||grad J||_inf
  double scaled_grad_tol = 1e-10;  // on ||diag(H)^-1/2 grad J||_inf (rounding floor of large weights)
  double rel_cost_tol = 1e-12;  // relative cost change of an accepted step, and of the final
                                // Newton decrement 1/2 g^T H^-1 g
  double step_tol = 0.0;        // on ||delta||_inf of a computed step; 0 disables
  /// Undamped Newton steps after the loop, kept while they lower the scaled gradient. They
  /// resolve directions whose cost decrease is below the rounding level of the cost.
  int polish_steps = 2;
  int max_iterations = 100;
  double lambda_init = 1e-6;
  double lambda_min = 1e-12;
  double lambda_max = 1e2;
  Exec exec = Exec::kParallel;
};

struct IterationRecord {
  int iteration = 0;
  double cost = 0.0;
  double grad_norm = 0.0;
  double lambda = 0.0;
  bool accepted = false;
};

struct EstimateResult {
  std::vector<ManifoldState> trajectory;
  double cost = 0.0;
  double grad_norm = 0.0;         // ||grad J||_inf at the returned trajectory
  double scaled_grad_norm = 0.0;  // ||diag(H)^-1/2 grad J||_inf
  double newton_decrement = 0.0;  // 1/2 g^T H^-1 g, computed when the gradient tests fail
  int iterations = 0;
  int polish_steps = 0;  // polishing steps kept
  bool converged = false;
  std::vector<IterationRecord> diagnostics;
};

/// Gauss-Newton normal equations in tangent coordinates:
/// H = 2 sum J^T W J (block-tridiagonal), g = 2 sum J^T W r, cost = sum r^T W r.
struct NormalEquations {
  BlockTridiagonal H;
  Eigen::VectorXd g;
  double cost = 0.0;
};

NormalEquations build_normal_equations(const std::vector<ManifoldState>& X,
                                       const EstimationProblem& problem,
                                       const ResidualContext& ctx, Exec exec = Exec::kParallel);

/// IMU dead reckoning from the prior mean; feet placed by forward kinematics at each step.
std::vector<ManifoldState> dead_reckon(const EstimationProblem& problem);

/// Levenberg-Marquardt on the full trajectory. Returns best-so-far with converged=false
/// after max_iterations.
EstimateResult solve_fie(const EstimationProblem& problem, const std::vector<ManifoldState>& init,
                         const SolverOptions& options = {});
EstimateResult solve_fie(const EstimationProblem& problem, const SolverOptions& options = {});

struct KktResidual {
  Eigen::VectorXd gradient;
  double norm = 0.0;         // infinity norm
  double scaled_norm = 0.0;  // ||diag(H)^-1/2 gradient||_inf
};

double scaled_gradient_norm(const NormalEquations& ne);

KktResidual kkt_residual(const std::vector<ManifoldState>& X, const EstimationProblem& problem);

/// X [+] delta and X1 [-] X2, stacked per state.
std::vector<ManifoldState> retract(const std::vector<ManifoldState>& X,
                                   const Eigen::VectorXd& delta);
Eigen::VectorXd trajectory_difference(const std::vector<ManifoldState>& X1,
                                      const std::vector<ManifoldState>& X2);

}  // namespace legcal
