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

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "legcal/block_tridiagonal.hpp"
#include "legcal/residuals.hpp"

namespace legcal {

/// Which Hessian of the estimator cost enters the implicit-function solve.
enum class HessianKind {
  kGaussNewton,  // 2 J^T W J
  kExact,        // adds the residual-curvature term 2 sum (W r)_i d2 r_i
};

/// Linearized stationarity system at a solved trajectory: H Z = B with
/// H = d(grad J)/dx and B = -d(grad J)/dtheta.
struct KktSystem {
  BlockTridiagonal H;
  Eigen::MatrixXd B;  // (num_states * state_dim) x theta size
};

/// Tangent-space sensitivity dx/dtheta; rows follow the stacked state tangent.
struct SensitivityMatrix {
  Eigen::MatrixXd Z;
  double shift = 0.0;         // diagonal shift needed to factorize H
  std::int64_t factorizations = 0;
};

struct SensitivityOptions {
  HessianKind hessian = HessianKind::kExact;
  Exec exec = Exec::kParallel;
  double initial_shift = 1e-9;
  int max_retries = 8;
};

BlockTridiagonal assemble_kkt_jacobian(const std::vector<ManifoldState>& X,
                                       const EstimationProblem& problem,
                                       HessianKind kind = HessianKind::kExact,
                                       Exec exec = Exec::kParallel);

/// Columns for the covariance entries (through the weights) and the foot offsets (through
/// the weights and the residuals). The base-offset columns are zero.
Eigen::MatrixXd assemble_rhs(const std::vector<ManifoldState>& X,
                             const EstimationProblem& problem, Exec exec = Exec::kParallel);

/// H and B from one pass over the trajectory.
KktSystem assemble_kkt_system(const std::vector<ManifoldState>& X,
                              const EstimationProblem& problem,
                              HessianKind kind = HessianKind::kExact,
                              Exec exec = Exec::kParallel);

/// One factorization of H, then one back-substitution per column of B.
SensitivityMatrix solve_sensitivity(const KktSystem& system, const SensitivityOptions& options = {});

SensitivityMatrix compute_sensitivity(const std::vector<ManifoldState>& X,
                                      const EstimationProblem& problem,
                                      const SensitivityOptions& options = {});

/// max |H_exact - H_gn| relative to max |H_exact|.
struct HessianGap {
  double max_abs = 0.0;
  double relative = 0.0;
};
HessianGap gauss_newton_gap(const std::vector<ManifoldState>& X, const EstimationProblem& problem);

}  // namespace legcal
