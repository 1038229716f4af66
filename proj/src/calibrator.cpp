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

#include "legcal/calibrator.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <random>
#include <utility>

#include <Eigen/Dense>
#include <spdlog/spdlog.h>

#include "legcal/errors.hpp"
#include "legcal/lie.hpp"

namespace legcal {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

lie::Vec6<double> pose_error(const Pose& est, const Pose& gt) {
  const Matrix3 dR = est.rotation.matrix() * gt.rotation.matrix().transpose();
  return lie::log_se3<double>(dR, Vector3(est.translation - dR * gt.translation));
}

// Per-sample pieces of the upper loss and its derivatives.
struct StepLoss {
  lie::Vec6<double> e;
  Vector3 dv;
  Eigen::Matrix<double, 6, 6> de_dxi;    // log(exp(xi) T T_gt^-1) = e + J_l^-1(e) xi
  Eigen::Matrix<double, 6, 3> de_dbase;  // T_gt(b + d) = exp((0, -R_m d)) T_gt, e moves by J_r^-1(e) (0, R_m d)
};

StepLoss step_loss(const ManifoldState& x, const MocapSample& m, const Vector3& theta_base) {
  StepLoss out;
  out.e = pose_error(x.pose, corrected_ground_truth(m, theta_base));
  out.dv = x.velocity - m.velocity;
  out.de_dxi = lie::left_jacobian_se3_inv(out.e);
  out.de_dbase = lie::left_jacobian_se3_inv(-out.e).rightCols<3>() * m.pose.rotation.matrix();
  return out;
}

void check_lengths(const std::vector<ManifoldState>& X, const std::vector<MocapSample>& gt) {
  if (X.size() != gt.size()) throw Error(ErrorCode::kLengthMismatch, "trajectory vs ground truth");
}

void check_feasible(const Eigen::VectorXd& theta, const FeasibleSet& fs, const ParamLayout& layout,
                    const char* what) {
  if (fs.violations(theta) != 0 || count_non_pd_blocks(theta, layout) != 0) {
    throw Error(ErrorCode::kBoxViolation, what);
  }
}

}  // namespace

Pose corrected_ground_truth(const MocapSample& m, const Vector3& theta_base) {
  Pose p = m.pose;
  p.translation -= m.pose.rotation * theta_base;
  return p;
}

double upper_loss(const std::vector<ManifoldState>& X, const std::vector<MocapSample>& gt,
                  const Vector3& theta_base) {
  check_lengths(X, gt);
  double loss = 0.0;
  for (std::size_t k = 0; k < X.size(); ++k) {
    const lie::Vec6<double> e = pose_error(X[k].pose, corrected_ground_truth(gt[k], theta_base));
    loss += 0.5 * (e.squaredNorm() + (X[k].velocity - gt[k].velocity).squaredNorm());
  }
  return loss;
}

LossPartials loss_partials(const std::vector<ManifoldState>& X, const std::vector<MocapSample>& gt,
                           const Vector3& theta_base) {
  check_lengths(X, gt);
  LossPartials out;
  if (X.empty()) return out;
  const int n = X[0].tangent_dim();
  out.d_state = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(X.size()) * n);
  for (std::size_t k = 0; k < X.size(); ++k) {
    const StepLoss sl = step_loss(X[k], gt[k], theta_base);
    out.loss += 0.5 * (sl.e.squaredNorm() + sl.dv.squaredNorm());
    const Eigen::Index row = static_cast<Eigen::Index>(k) * n;
    out.d_state.segment<6>(row) = sl.de_dxi.transpose() * sl.e;
    out.d_state.segment<3>(row + TangentLayout::kVel) = sl.dv;
    out.d_base += sl.de_dbase.transpose() * sl.e;
  }
  return out;
}

BilevelProblem::BilevelProblem(EstimationProblem base, std::vector<MocapSample> ground_truth,
                               SolverOptions solver, SensitivityOptions sensitivity)
    : base_(std::move(base)),
      gt_(std::move(ground_truth)),
      solver_(solver),
      sens_(sensitivity) {
  base_.validate();
  if (gt_.size() != base_.log.size()) {
    throw Error(ErrorCode::kLengthMismatch, "ground truth vs log length");
  }
}

EstimationProblem BilevelProblem::at(const Eigen::VectorXd& theta) const {
  if (theta.size() != base_.layout.size()) throw Error(ErrorCode::kLengthMismatch, "theta size");
  EstimationProblem p = base_;
  p.theta = theta;
  return p;
}

BilevelProblem::Evaluation BilevelProblem::evaluate(const Eigen::VectorXd& theta,
                                                    const std::vector<ManifoldState>* warm) const {
  const EstimationProblem p = at(theta);
  Evaluation ev;
  ev.solve = warm != nullptr ? solve_fie(p, *warm, solver_) : solve_fie(p, solver_);
  if (!ev.solve.converged) {
    throw Error(ErrorCode::kSolverDiverged,
                "estimator did not converge (grad " + std::to_string(ev.solve.grad_norm) + ")");
  }
  ev.loss = upper_loss(ev.solve.trajectory, gt_, theta_base(theta, base_.layout));
  return ev;
}

Eigen::VectorXd BilevelProblem::gradient_at(const Eigen::VectorXd& theta, const Evaluation& eval,
                                            Eigen::MatrixXd* gauss_newton) const {
  const EstimationProblem p = at(theta);
  const std::vector<ManifoldState>& X = eval.solve.trajectory;
  const SensitivityMatrix S = compute_sensitivity(X, p, sens_);
  const Vector3 tb = theta_base(theta, base_.layout);
  const LossPartials lp = loss_partials(X, gt_, tb);
  Eigen::VectorXd g = S.Z.transpose() * lp.d_state;
  if (corruption_ != 0.0) g *= 1.0 + corruption_;
  const int base = base_.layout.base_offset();
  g.segment<3>(base) += lp.d_base;

  if (gauss_newton != nullptr) {
    const Eigen::Index m = theta.size();
    const int n = X.front().tangent_dim();
    gauss_newton->setZero(m, m);
    Eigen::MatrixXd Jk(9, m);
    for (std::size_t k = 0; k < X.size(); ++k) {
      const StepLoss sl = step_loss(X[k], gt_[k], tb);
      const auto Zk = S.Z.middleRows(static_cast<Eigen::Index>(k) * n, n);
      Jk.topRows<6>().noalias() = sl.de_dxi * Zk.topRows<6>();
      Jk.bottomRows<3>() = Zk.middleRows<3>(TangentLayout::kVel);
      Jk.block<6, 3>(0, base) += sl.de_dbase;
      gauss_newton->noalias() += Jk.transpose() * Jk;
    }
    *gauss_newton = (0.5 * (*gauss_newton + gauss_newton->transpose())).eval();
  }
  return g;
}

BilevelProblem::Gradient BilevelProblem::gradient(const Eigen::VectorXd& theta,
                                                  const std::vector<ManifoldState>* warm,
                                                  bool want_gauss_newton) const {
  Gradient out;
  out.eval = evaluate(theta, warm);
  out.grad = gradient_at(theta, out.eval, want_gauss_newton ? &out.gauss_newton : nullptr);
  return out;
}

Eigen::VectorXd finite_difference_gradient(const BilevelProblem& problem,
                                           const Eigen::VectorXd& theta, double eps,
                                           const std::vector<ManifoldState>& warm,
                                           std::vector<int> components, Exec exec) {
  if (components.empty()) {
    for (int j = 0; j < theta.size(); ++j) components.push_back(j);
  }
  Eigen::VectorXd fd = Eigen::VectorXd::Zero(theta.size());
  const int count = static_cast<int>(components.size());
  std::vector<std::exception_ptr> errors(count);
  auto probe = [&](int i) {
    try {
      const int j = components[i];
      Eigen::VectorXd tp = theta, tm = theta;
      tp[j] += eps;
      tm[j] -= eps;
      const double lp = problem.evaluate(tp, &warm).loss;
      const double lm = problem.evaluate(tm, &warm).loss;
      fd[j] = (lp - lm) / (2.0 * eps);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  if (exec == Exec::kSerial) {
    for (int i = 0; i < count; ++i) probe(i);
  } else {
#pragma omp parallel for schedule(dynamic, 1)
    for (int i = 0; i < count; ++i) probe(i);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return fd;
}

GradientCheck gradient_check(const BilevelProblem& problem, const Eigen::VectorXd& theta,
                             double eps, std::vector<int> components, Exec exec) {
  if (components.empty()) {
    for (int j = 0; j < theta.size(); ++j) components.push_back(j);
  }
  for (int j : components) {
    if (j < 0 || j >= theta.size()) throw Error(ErrorCode::kInvalidArgument, "component index");
  }
  const BilevelProblem::Gradient g = problem.gradient(theta);
  const int count = static_cast<int>(components.size());
  GradientCheck out;
  out.components = components;
  out.analytic.resize(count);
  out.numeric.resize(count);
  out.rel_error.resize(count);
  out.probe_errors.assign(count, "");
  const auto& warm = g.eval.solve.trajectory;
  auto probe = [&](int i) {
    const int j = components[i];
    out.analytic[i] = g.grad[j];
    try {
      Eigen::VectorXd tp = theta, tm = theta;
      tp[j] += eps;
      tm[j] -= eps;
      const double lp = problem.evaluate(tp, &warm).loss;
      const double lm = problem.evaluate(tm, &warm).loss;
      out.numeric[i] = (lp - lm) / (2.0 * eps);
    } catch (const std::exception& e) {
      out.numeric[i] = std::numeric_limits<double>::quiet_NaN();
      out.probe_errors[i] = e.what();
    }
  };
  if (exec == Exec::kSerial) {
    for (int i = 0; i < count; ++i) probe(i);
  } else {
#pragma omp parallel for schedule(dynamic, 1)
    for (int i = 0; i < count; ++i) probe(i);
  }
  double fd_max = 0.0;
  for (int i = 0; i < count; ++i) {
    if (std::isfinite(out.numeric[i])) fd_max = std::max(fd_max, std::abs(out.numeric[i]));
  }
  const double floor = std::max(1e-6 * fd_max, std::numeric_limits<double>::min());
  for (int i = 0; i < count; ++i) {
    out.rel_error[i] = std::isfinite(out.numeric[i])
                           ? std::abs(out.analytic[i] - out.numeric[i]) /
                                 std::max(std::abs(out.numeric[i]), floor)
                           : std::numeric_limits<double>::infinity();
    out.max_rel_error = std::max(out.max_rel_error, out.rel_error[i]);
  }
  out.solve = g.eval.solve;
  return out;
}

Eigen::VectorXd lmo(const Eigen::VectorXd& grad, const Eigen::VectorXd& theta,
                    const FeasibleSet& fs, const Eigen::VectorXd& radius) {
  const Eigen::Index m = theta.size();
  if (grad.size() != m || radius.size() != m || fs.lower.size() != m || fs.upper.size() != m) {
    throw Error(ErrorCode::kLengthMismatch, "lmo sizes");
  }
  Eigen::VectorXd s = theta;
  for (Eigen::Index j = 0; j < m; ++j) {
    if (grad[j] > 0.0) {
      s[j] = std::max(fs.lower[j], theta[j] - radius[j]);
    } else if (grad[j] < 0.0) {
      s[j] = std::min(fs.upper[j], theta[j] + radius[j]);
    }
  }
  return s;
}

Eigen::VectorXd lmo(const Eigen::VectorXd& grad, const Eigen::VectorXd& theta,
                    const FeasibleSet& fs, double radius) {
  return lmo(grad, theta, fs, Eigen::VectorXd::Constant(theta.size(), radius));
}

Eigen::VectorXd model_lmo(const Eigen::VectorXd& grad, const Eigen::MatrixXd& H,
                          const Eigen::VectorXd& theta, const FeasibleSet& fs,
                          const Eigen::VectorXd& radius, const BoxQpOptions& options) {
  const Eigen::Index m = theta.size();
  if (H.rows() != m || H.cols() != m) throw Error(ErrorCode::kLengthMismatch, "model size");
  const Eigen::VectorXd s_lin = lmo(grad, theta, fs, radius);  // validates the other sizes
  const Eigen::VectorXd lo = fs.lower.cwiseMax(theta - radius) - theta;
  const Eigen::VectorXd hi = fs.upper.cwiseMin(theta + radius) - theta;
  auto model = [&](const Eigen::VectorXd& d) { return grad.dot(d) + 0.5 * d.dot(H * d); };

  Eigen::VectorXd d = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd Hd = Eigen::VectorXd::Zero(m);
  auto set = [&](Eigen::Index j, double v) {
    const double delta = v - d[j];
    if (delta != 0.0) {
      Hd += H.col(j) * delta;
      d[j] = v;
    }
    return std::abs(delta) / std::max(hi[j] - lo[j], 1e-300);
  };
  for (int sweep = 1; sweep <= options.max_sweeps; ++sweep) {
    double change = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      if (hi[j] <= lo[j]) continue;
      const double c = grad[j] + Hd[j] - H(j, j) * d[j];
      double v = d[j];
      if (H(j, j) > 0.0) {
        v = std::clamp(-c / H(j, j), lo[j], hi[j]);
      } else if (c != 0.0) {
        v = c > 0.0 ? lo[j] : hi[j];
      }
      change = std::max(change, set(j, v));
    }
    if (change <= options.tol) break;
    if (sweep % options.newton_every != 0) continue;
    // Newton step on the coordinates strictly inside their intervals.
    std::vector<Eigen::Index> free;
    for (Eigen::Index j = 0; j < m; ++j) {
      if (d[j] > lo[j] && d[j] < hi[j]) free.push_back(j);
    }
    if (free.empty()) continue;
    const Eigen::Index f = static_cast<Eigen::Index>(free.size());
    Eigen::MatrixXd Hff(f, f);
    Eigen::VectorXd rhs(f);
    for (Eigen::Index a = 0; a < f; ++a) {
      rhs[a] = -(grad[free[a]] + Hd[free[a]]);
      for (Eigen::Index b = 0; b < f; ++b) Hff(a, b) = H(free[a], free[b]);
    }
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(Hff);
    if (ldlt.info() != Eigen::Success) continue;
    const Eigen::VectorXd step = ldlt.solve(rhs);
    Eigen::VectorXd trial = d;
    bool inside = step.allFinite();
    for (Eigen::Index a = 0; a < f && inside; ++a) {
      trial[free[a]] += step[a];
      inside = trial[free[a]] >= lo[free[a]] && trial[free[a]] <= hi[free[a]];
    }
    if (inside && model(trial) <= model(d)) {
      d = trial;
      Hd = H * d;
    }
  }
  // Never worse than the linear vertex under the model.
  const Eigen::VectorXd d_lin = s_lin - theta;
  if (model(d_lin) < model(d)) d = d_lin;
  return theta + d;
}

ArmijoResult armijo_search(const std::function<double(const Eigen::VectorXd&)>& loss,
                           const Eigen::VectorXd& theta, double loss0, const Eigen::VectorXd& s,
                           const Eigen::VectorXd& grad, const ArmijoOptions& options) {
  ArmijoResult res;
  res.loss = loss0;
  const Eigen::VectorXd d = s - theta;
  const double slope = grad.dot(d);
  if (!(slope < 0.0)) {
    res.descent = false;
    return res;
  }
  double gamma = 1.0;
  for (int k = 0; k <= options.k_max; ++k, gamma *= options.beta) {
    ++res.trials;
    const double l = loss(theta + gamma * d);
    if (std::isfinite(l) && l <= loss0 + options.rho * gamma * slope) {
      res.gamma = gamma;
      res.loss = l;
      return res;
    }
  }
  res.exhausted = true;
  return res;
}

CalibrationResult calibrate(const BilevelProblem& problem, const Eigen::VectorXd& theta0,
                            const FeasibleSet& fs, const FrankWolfeOptions& options) {
  const ParamLayout& layout = problem.layout();
  check_feasible(theta0, fs, layout, "initial theta outside the feasible set");
  const Eigen::VectorXd width = fs.upper - fs.lower;

  if (!options.frozen.empty() && options.frozen.size() != static_cast<std::size_t>(theta0.size())) {
    throw Error(ErrorCode::kLengthMismatch, "frozen mask size");
  }
  auto mask = [&](Eigen::VectorXd g) {
    for (std::size_t j = 0; j < options.frozen.size(); ++j) {
      if (options.frozen[j]) g[static_cast<Eigen::Index>(j)] = 0.0;
    }
    return g;
  };

  CalibrationResult out;
  out.theta = theta0;
  const bool use_model = options.direction == Direction::kGaussNewtonModel;
  BilevelProblem::Gradient cur = problem.gradient(theta0, nullptr, use_model);
  cur.grad = mask(std::move(cur.grad));
  // Frozen rows and columns of the model drop out through their zero-width region.
  double radius = options.radius0;  // fraction of each coordinate's box width
  std::mt19937_64 rng(0x5eed);

  for (int t = 0;; ++t) {
    TraceRecord rec;
    rec.iteration = t;
    rec.loss = cur.eval.loss;
    rec.grad_norm = cur.grad.norm();
    rec.radius = radius;
    rec.solver_iterations = cur.eval.solve.iterations;
    rec.theta = out.theta;

    Eigen::VectorXd region = radius * width;
    for (std::size_t j = 0; j < options.frozen.size(); ++j) {
      if (options.frozen[j]) region[static_cast<Eigen::Index>(j)] = 0.0;
    }
    const Eigen::VectorXd s_lin = lmo(cur.grad, out.theta, fs, region);
    rec.gap = cur.grad.dot(out.theta - s_lin);
    auto finish = [&](const char* reason, bool converged) {
      rec.event = reason;
      out.trace.records.push_back(rec);
      out.stop_reason = reason;
      out.converged = converged;
    };
    if (rec.gap <= options.gap_tol * (1.0 + std::abs(rec.loss))) {
      finish("converged", true);
      break;
    }
    if (rec.grad_norm <= options.grad_tol) {
      finish("gradient", true);
      break;
    }
    if (t >= options.t_max) {
      finish("t_max", false);
      break;
    }
    Eigen::VectorXd s = s_lin;
    if (use_model) {
      Eigen::MatrixXd H = cur.gauss_newton;
      const double damping = options.model_damping * std::max(H.diagonal().maxCoeff(), 1e-300);
      H.diagonal().array() += damping;
      s = model_lmo(cur.grad, H, out.theta, fs, region, options.qp);
    }
    if (options.check_convexity) {
      std::uniform_real_distribution<double> u(0.0, 1.0);
      for (int i = 0; i < 10; ++i) {
        const double lam = u(rng);
        check_feasible(Eigen::VectorXd((1.0 - lam) * out.theta + lam * s), fs, layout,
                       "convex combination left the feasible set");
      }
    }

    Eigen::VectorXd last_theta;
    BilevelProblem::Evaluation last_eval;
    auto loss_at = [&](const Eigen::VectorXd& th) {
      // Clamp rounding excursions so every evaluated point is exactly feasible.
      last_theta = th.cwiseMax(fs.lower).cwiseMin(fs.upper);
      try {
        last_eval = problem.evaluate(last_theta, &cur.eval.solve.trajectory);
        return last_eval.loss;
      } catch (const Error& e) {
        spdlog::debug("line-search probe failed: {}", e.what());
        return kInf;
      }
    };
    const ArmijoResult ls = armijo_search(loss_at, out.theta, cur.eval.loss, s, cur.grad,
                                          options.armijo);
    rec.line_search_trials = ls.trials;
    if (!ls.descent) {
      finish("no-descent", true);
      break;
    }
    if (ls.exhausted) {
      rec.event = "shrink";
      out.trace.records.push_back(rec);
      radius *= options.shrink;
      if (radius < options.radius_min) {
        out.stop_reason = "radius";
        break;
      }
      continue;
    }

    rec.gamma = ls.gamma;
    rec.accepted = true;
    rec.event = "step";
    out.trace.records.push_back(rec);
    check_feasible(last_theta, fs, layout, "iterate left the feasible set");
    out.theta = last_theta;
    cur.eval = std::move(last_eval);
    cur.grad = mask(
        problem.gradient_at(out.theta, cur.eval, use_model ? &cur.gauss_newton : nullptr));

    if (ls.gamma == 1.0) radius = std::min(options.radius_max, radius * options.grow);
    spdlog::info("fw t={} loss={:.9e} |grad|={:.3e} gamma={:.3g} radius={:.3g}", t + 1,
                 cur.eval.loss, cur.grad.norm(), ls.gamma, radius);
  }
  out.loss = cur.eval.loss;
  out.grad_norm = cur.grad.norm();
  out.trajectory = cur.eval.solve.trajectory;
  return out;
}

}  // namespace legcal
