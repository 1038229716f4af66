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

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "legcal/covariance.hpp"
#include "legcal/estimator.hpp"
#include "legcal/sensitivity.hpp"
#include "legcal/sensor_log.hpp"

namespace legcal {

/// Mocap pose with the marker offset removed: (R_m, p_m - R_m theta_base).
Pose corrected_ground_truth(const MocapSample& m, const Vector3& theta_base);

/// 1/2 sum_k ||log(T_k T_gt,k^-1)||^2 + ||v_k - v_gt,k||^2. Throws kLengthMismatch.
double upper_loss(const std::vector<ManifoldState>& X, const std::vector<MocapSample>& gt,
                  const Vector3& theta_base);

/// Partial derivatives of the upper loss: left-tangent gradient stacked per state, and the
/// explicit base-offset term.
struct LossPartials {
  double loss = 0.0;
  Eigen::VectorXd d_state;
  Vector3 d_base = Vector3::Zero();
};
LossPartials loss_partials(const std::vector<ManifoldState>& X, const std::vector<MocapSample>& gt,
                           const Vector3& theta_base);

/// Lower-level problem template plus the ground truth the upper loss compares against.
class BilevelProblem {
 public:
  BilevelProblem(EstimationProblem base, std::vector<MocapSample> ground_truth,
                 SolverOptions solver = {}, SensitivityOptions sensitivity = {});

  const EstimationProblem& base() const { return base_; }
  const ParamLayout& layout() const { return base_.layout; }
  const std::vector<MocapSample>& ground_truth() const { return gt_; }
  const SolverOptions& solver_options() const { return solver_; }

  /// Debug negative control: scales every sensitivity column by (1 + factor).
  void set_sensitivity_corruption(double factor) { corruption_ = factor; }

  EstimationProblem at(const Eigen::VectorXd& theta) const;

  struct Evaluation {
    double loss = 0.0;
    EstimateResult solve;
  };
  /// Solves the estimator at theta (warm-started when warm is non-null). Throws kSolverDiverged
  /// when the estimator does not converge.
  Evaluation evaluate(const Eigen::VectorXd& theta,
                      const std::vector<ManifoldState>* warm = nullptr) const;

  struct Gradient {
    Evaluation eval;
    Eigen::VectorXd grad;
    Eigen::MatrixXd gauss_newton;  // J^T J of the upper residuals, when requested
  };
  /// Analytic gradient: Z^T dL/dx + dL/dtheta_base.
  Gradient gradient(const Eigen::VectorXd& theta, const std::vector<ManifoldState>* warm = nullptr,
                    bool want_gauss_newton = false) const;
  /// Same gradient from an already converged evaluation; optionally also the Gauss-Newton
  /// matrix of the upper loss, sum_k J_k^T J_k with J_k = d(e_k, dv_k)/dtheta.
  Eigen::VectorXd gradient_at(const Eigen::VectorXd& theta, const Evaluation& eval,
                              Eigen::MatrixXd* gauss_newton = nullptr) const;

 private:
  EstimationProblem base_;
  std::vector<MocapSample> gt_;
  SolverOptions solver_;
  SensitivityOptions sens_;
  double corruption_ = 0.0;
};

/// Central differences of the full pipeline (re-solving the estimator from warm) for the
/// listed components (all when empty).
Eigen::VectorXd finite_difference_gradient(const BilevelProblem& problem,
                                           const Eigen::VectorXd& theta, double eps,
                                           const std::vector<ManifoldState>& warm,
                                           std::vector<int> components = {},
                                           Exec exec = Exec::kParallel);

struct GradientCheck {
  std::vector<int> components;
  Eigen::VectorXd analytic;   // per listed component
  Eigen::VectorXd numeric;    // NaN where a probe failed
  Eigen::VectorXd rel_error;  // |a - fd| / max(|fd|, 1e-6 ||fd||_inf); +inf on failure
  std::vector<std::string> probe_errors;  // empty when the probe succeeded
  double max_rel_error = 0.0;
  EstimateResult solve;  // lower-level solution at theta
};

/// Analytic gradient against central differences of the full pipeline. Failing probes are
/// reported per component instead of thrown.
GradientCheck gradient_check(const BilevelProblem& problem, const Eigen::VectorXd& theta,
                             double eps, std::vector<int> components = {},
                             Exec exec = Exec::kParallel);

/// Exact minimizer of s^T grad over the box intersected with |s - theta|_j <= radius_j.
/// Zero gradient entries stay at theta.
Eigen::VectorXd lmo(const Eigen::VectorXd& grad, const Eigen::VectorXd& theta,
                    const FeasibleSet& fs, const Eigen::VectorXd& radius);
Eigen::VectorXd lmo(const Eigen::VectorXd& grad, const Eigen::VectorXd& theta,
                    const FeasibleSet& fs, double radius);

struct BoxQpOptions {
  int max_sweeps = 20000;
  double tol = 1e-13;      // on the largest coordinate change relative to its interval
  int newton_every = 25;   // sweeps between free-subspace Newton attempts
};

/// Minimizer of grad^T (s - theta) + 1/2 (s - theta)^T H (s - theta) over the same region as lmo,
/// by coordinate descent with free-subspace Newton steps. H must be symmetric PSD.
Eigen::VectorXd model_lmo(const Eigen::VectorXd& grad, const Eigen::MatrixXd& H,
                          const Eigen::VectorXd& theta, const FeasibleSet& fs,
                          const Eigen::VectorXd& radius, const BoxQpOptions& options = {});

struct ArmijoOptions {
  double rho = 1e-4;
  double beta = 0.5;
  int k_max = 30;
};

struct ArmijoResult {
  double gamma = 0.0;
  double loss = 0.0;      // loss at the accepted point (initial loss if none)
  int trials = 0;
  bool descent = true;    // false: g^T (s - theta) >= 0, nothing tried
  bool exhausted = false;
};

/// Largest gamma in {1, beta, ..., beta^k_max} with
/// L(theta + gamma d) <= L(theta) + rho gamma g^T d, d = s - theta. The evaluator may return
/// +inf for points where the lower level fails.
ArmijoResult armijo_search(const std::function<double(const Eigen::VectorXd&)>& loss,
                           const Eigen::VectorXd& theta, double loss0, const Eigen::VectorXd& s,
                           const Eigen::VectorXd& grad, const ArmijoOptions& options = {});

/// kLinear: the linear LMO vertex. kGaussNewtonModel: minimizer of the upper Gauss-Newton model
/// over the same trust region (model_lmo). The FW gap always comes from the linear LMO.
enum class Direction { kLinear, kGaussNewtonModel };

struct FrankWolfeOptions {
  ArmijoOptions armijo;
  double radius0 = 0.1;        // trust region as a fraction of the box width
  double radius_max = 0.1;
  double radius_min = 1e-10;   // stop once the region collapses
  double shrink = 0.5;
  double grow = 1.5;
  Direction direction = Direction::kGaussNewtonModel;
  BoxQpOptions qp;
  double model_damping = 1e-9;  // added to the model diagonal, relative to its largest entry
  int t_max = 100;
  double gap_tol = 1e-8;       // relative: gap <= gap_tol (1 + |L|)
  double grad_tol = 0.0;       // on ||grad L||_2
  std::vector<bool> frozen;    // per-coordinate; frozen entries keep their initial value
  bool check_convexity = false;  // spot-check 10 random combinations per iteration
};

struct TraceRecord {
  int iteration = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double gamma = 0.0;
  double gap = 0.0;
  double radius = 0.0;
  int line_search_trials = 0;
  int solver_iterations = 0;
  bool accepted = false;
  std::string event;  // "step", "shrink", "converged", ...
  Eigen::VectorXd theta;
};

struct CalibrationTrace {
  std::vector<TraceRecord> records;
};

struct CalibrationResult {
  Eigen::VectorXd theta;
  double loss = 0.0;
  double grad_norm = 0.0;
  std::vector<ManifoldState> trajectory;
  CalibrationTrace trace;
  bool converged = false;
  std::string stop_reason;
};

/// Trust-region Frank-Wolfe with Armijo steps. theta0 must lie in fs (kBoxViolation).
CalibrationResult calibrate(const BilevelProblem& problem, const Eigen::VectorXd& theta0,
                            const FeasibleSet& fs, const FrankWolfeOptions& options = {});

}  // namespace legcal
