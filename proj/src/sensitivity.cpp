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

#include "legcal/sensitivity.hpp"

#include <algorithm>
#include <array>
#include <memory>

#include "legcal/ad.hpp"
#include "legcal/errors.hpp"
#include "legcal/estimator.hpp"
#include "step_assembly.hpp"

namespace legcal {

namespace {

using detail::Slot;
using detail::StepBlock;

template <int N>
using D1 = ad::Dual<double, N>;
template <int N>
using D2 = ad::Dual<ad::Dual<double, N>, N>;

template <int N, int K>
Eigen::Matrix<D2<N>, K, 1> seeds(int first,
                                 const Eigen::Matrix<double, K, 1>& base =
                                     Eigen::Matrix<double, K, 1>::Zero()) {
  Eigen::Matrix<D2<N>, K, 1> v;
  for (int i = 0; i < K; ++i) v[i] = ad::variable2<N>(base[i], first + i);
  return v;
}

/// Value, Jacobian and per-component Hessians of a residual vector.
template <int N, int R>
struct Expansion {
  Eigen::Matrix<double, R, 1> r;
  Eigen::Matrix<double, R, N> J;
  std::array<Eigen::Matrix<double, N, N>, R> H;
};

template <int N, int R>
void expand(const Eigen::Matrix<D2<N>, R, 1>& x, Expansion<N, R>& e) {
  for (int i = 0; i < R; ++i) {
    e.r[i] = x[i].a.a;
    for (int j = 0; j < N; ++j) {
      e.J(i, j) = x[i].a.v[j];
      for (int l = 0; l < N; ++l) e.H[i](j, l) = x[i].v[j].v[l];
    }
  }
}

/// 2 sum_i (W r)_i d2 r_i, symmetrized.
template <int N, int R>
Eigen::Matrix<double, N, N> curvature(const Expansion<N, R>& e,
                                      const Eigen::Matrix<double, R, R>& W) {
  const Eigen::Matrix<double, R, 1> w = W * e.r;
  Eigen::Matrix<double, N, N> C = Eigen::Matrix<double, N, N>::Zero();
  for (int i = 0; i < R; ++i) C += (2.0 * w[i]) * e.H[i];
  return 0.5 * (C + C.transpose());
}

struct WeightDerivative {
  int column;
  Matrix3 dW;
};

/// d/dtheta of (scale * L L^T)^-1 for the entries of one covariance block.
std::vector<WeightDerivative> block_weight_derivatives(const Eigen::VectorXd& theta,
                                                       const ParamLayout& layout, CovBlock b,
                                                       double scale) {
  using D = D1<6>;
  const int pb = layout.per_block();
  const int off = layout.cov_offset(b);
  std::array<D, 6> e{};
  for (int i = 0; i < pb; ++i) e[i] = D(theta[off + i], i);
  const lie::Mat3<D> S = covariance_from_entries<D>(e.data(), layout.mode()) * scale;
  const lie::Mat3<D> W = inverse3<D>(S);
  std::vector<WeightDerivative> out(pb);
  for (int i = 0; i < pb; ++i) {
    out[i].column = off + i;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) out[i].dW(r, c) = W(r, c).v[i];
  }
  return out;
}

struct ProcessDerivatives {
  std::array<std::vector<WeightDerivative>, 3> proc;  // rot, trans, vel rows
  std::vector<WeightDerivative> foot, ba, bw;
};

ProcessDerivatives process_derivatives(const EstimationProblem& problem) {
  const auto& th = problem.theta;
  const auto& L = problem.layout;
  const double dt = problem.log.dt;
  ProcessDerivatives d;
  d.proc[0] = block_weight_derivatives(th, L, CovBlock::kQw, dt * dt);
  d.proc[1] = block_weight_derivatives(th, L, CovBlock::kQp, dt);
  d.proc[2] = block_weight_derivatives(th, L, CovBlock::kQa, dt * dt);
  d.foot = block_weight_derivatives(th, L, CovBlock::kQfoot, dt);
  d.ba = block_weight_derivatives(th, L, CovBlock::kQba, dt);
  d.bw = block_weight_derivatives(th, L, CovBlock::kQbw, dt);
  return d;
}

// Leg weights depend on R_alpha, R_alphadot, Q_w and the leg's foot offset.
constexpr int kLegTheta = 21;
using DW = D1<kLegTheta>;

struct LegWeightSeeds {
  lie::Mat3<DW> R_a, R_ad, Q_w;
  std::vector<lie::Vec3<DW>> th;
  int count = 0;                          // active slots
  std::vector<std::array<int, kLegTheta>> column;  // [leg][slot] -> theta index
};

LegWeightSeeds leg_weight_seeds(const EstimationProblem& problem) {
  const auto& layout = problem.layout;
  const auto& theta = problem.theta;
  const int pb = layout.per_block();
  LegWeightSeeds s;
  s.count = 3 * pb + 3;
  auto block = [&](CovBlock b, int first) {
    std::array<DW, 6> e{};
    for (int i = 0; i < pb; ++i) e[i] = DW(theta[layout.cov_offset(b) + i], first + i);
    return lie::Mat3<DW>(covariance_from_entries<DW>(e.data(), layout.mode()));
  };
  s.R_a = block(CovBlock::kRalpha, 0);
  s.R_ad = block(CovBlock::kRalphaDot, pb);
  s.Q_w = block(CovBlock::kQw, 2 * pb);
  const int n_legs = layout.n_legs();
  s.th.resize(n_legs);
  s.column.resize(n_legs);
  for (int j = 0; j < n_legs; ++j) {
    for (int i = 0; i < 3; ++i) s.th[j][i] = DW(theta[layout.foot_offset(j) + i], 3 * pb + i);
    for (int i = 0; i < pb; ++i) {
      s.column[j][i] = layout.cov_offset(CovBlock::kRalpha) + i;
      s.column[j][pb + i] = layout.cov_offset(CovBlock::kRalphaDot) + i;
      s.column[j][2 * pb + i] = layout.cov_offset(CovBlock::kQw) + i;
    }
    for (int i = 0; i < 3; ++i) s.column[j][3 * pb + i] = layout.foot_offset(j) + i;
  }
  return s;
}

struct StepTerms {
  StepBlock curv;            // curvature part of the Hessian
  Eigen::MatrixXd B0, B1;    // rows of states k and k+1

  void init(int n, int m) {
    curv.init(n);
    B0.setZero(n, m);
    B1.setZero(n, m);
  }
  template <int N>
  void add_rhs(const Eigen::Matrix<double, N, 1>& dg, int column, const std::array<Slot, N>& s) {
    for (int a = 0; a < N; ++a) (s[a].state == 0 ? B0 : B1)(s[a].index, column) -= dg[a];
  }
};

void process_terms(const std::vector<ManifoldState>& X, const EstimationProblem& problem,
                   const ResidualContext& ctx, const ProcessDerivatives& pd, int k, bool exact,
                   StepTerms& st) {
  constexpr int N = detail::kProcessVars;
  const ManifoldState& x0 = X[k];
  const ManifoldState& x1 = X[k + 1];
  const auto r = process_residual<D2<N>>(x0, x1, problem.log.imu[k], ctx.dt, problem.gravity,
                                         seeds<N, 6>(0), seeds<N, 3>(6), seeds<N, 3>(9),
                                         seeds<N, 3>(12), seeds<N, 6>(15), seeds<N, 3>(21));
  auto e = std::make_unique<Expansion<N, 9>>();
  expand<N, 9>(r, *e);
  const auto slots = detail::process_slots(ctx.n_legs);
  if (exact) st.curv.add_hessian(curvature<N, 9>(*e, ctx.W_proc), slots);

  for (int b = 0; b < 3; ++b) {
    const auto rb = e->r.segment<3>(3 * b);
    const Eigen::Matrix<double, 3, N> Jb = e->J.middleRows<3>(3 * b);
    for (const auto& d : pd.proc[b]) {
      const Eigen::Matrix<double, N, 1> dg = 2.0 * Jb.transpose() * (d.dW * rb);
      st.add_rhs<N>(dg, d.column, slots);
    }
  }

  auto walk = [&](int i, const std::vector<WeightDerivative>& ds, const Vector3& rw) {
    for (const auto& d : ds) {
      const Vector3 v = 2.0 * d.dW * rw;
      st.B0.block(i, d.column, 3, 1) += v;
      st.B1.block(i, d.column, 3, 1) -= v;
    }
  };
  const auto& c0 = problem.log.legs[k].contact;
  const auto& c1 = problem.log.legs[k + 1].contact;
  for (int j = 0; j < ctx.n_legs; ++j) {
    if (c0[j] && c1[j]) walk(TangentLayout::foot(j), pd.foot, x1.feet[j] - x0.feet[j]);
  }
  walk(TangentLayout::accel_bias(ctx.n_legs), pd.ba, x1.accel_bias - x0.accel_bias);
  walk(TangentLayout::gyro_bias(ctx.n_legs), pd.bw, x1.gyro_bias - x0.gyro_bias);
}

void measurement_terms(const std::vector<ManifoldState>& X, const EstimationProblem& problem,
                       const ResidualContext& ctx, const LegWeightSeeds& ws, int k, bool exact,
                       StepTerms& st) {
  constexpr int NX = detail::kLegVars;
  constexpr int N = NX + 3;  // state variables, then the foot offset
  const ManifoldState& x = X[k];
  const LegSample& legs = problem.log.legs[k];
  const Vector3& gyro = problem.log.imu[k].gyro;
  for (int j = 0; j < ctx.n_legs; ++j) {
    const bool contact = legs.contact[j] != 0;
    const LegTerms& terms = ctx.terms[k][j];
    lie::Vec3<D2<N>> rp, rv;
    measurement_residual<D2<N>>(x, j, terms, legs.alpha_dot[j], gyro, seeds<N, 6>(0),
                                seeds<N, 3>(6), seeds<N, 3>(9), seeds<N, 3>(12),
                                seeds<N, 3>(NX, ctx.theta_foot[j]), rp, rv);
    Eigen::Matrix<D2<N>, 6, 1> rr;
    rr << rp, rv;
    auto e = std::make_unique<Expansion<N, 6>>();
    expand<N, 6>(rr, *e);

    Eigen::Matrix<double, 6, 6> W = Eigen::Matrix<double, 6, 6>::Zero();
    W.topLeftCorner<3, 3>() = ctx.W_p[k][j];
    if (contact) W.bottomRightCorner<3, 3>() = ctx.W_v[k][j];
    const Eigen::Matrix<double, N, N> C = curvature<N, 6>(*e, W);
    const auto slots = detail::leg_slots(ctx.n_legs, j);
    if (exact) st.curv.add_hessian(Eigen::Matrix<double, NX, NX>(C.topLeftCorner<NX, NX>()), slots);

    // Residual path of the foot offset: d/dth of 2 J_x^T W r at fixed weights.
    const Eigen::Matrix<double, 6, NX> Jx = e->J.leftCols<NX>();
    const Eigen::Matrix<double, NX, 3> mixed =
        2.0 * Jx.transpose() * W * e->J.rightCols<3>() + C.topRightCorner<NX, 3>();
    for (int i = 0; i < 3; ++i) {
      st.add_rhs<NX>(Eigen::Matrix<double, NX, 1>(mixed.col(i)), problem.layout.foot_offset(j) + i,
                     slots);
    }

    // Weight path: 2 J_x^T dW r.
    lie::Mat3<DW> Wp, Wv;
    measurement_weights<DW>(terms, gyro, ws.R_a, ws.R_ad, ws.Q_w, ws.th[j], contact, Wp, Wv);
    for (int s = 0; s < ws.count; ++s) {
      Eigen::Matrix<double, 6, 6> dW = Eigen::Matrix<double, 6, 6>::Zero();
      for (int a = 0; a < 3; ++a) {
        for (int b = 0; b < 3; ++b) {
          dW(a, b) = Wp(a, b).v[s];
          if (contact) dW(3 + a, 3 + b) = Wv(a, b).v[s];
        }
      }
      const Eigen::Matrix<double, NX, 1> dg = 2.0 * Jx.transpose() * (dW * e->r);
      st.add_rhs<NX>(dg, ws.column[j][s], slots);
    }
  }
}

/// Curvature of the pose part of the prior residual.
Eigen::Matrix<double, 6, 6> prior_curvature(const std::vector<ManifoldState>& X,
                                            const EstimationProblem& problem,
                                            const ResidualContext& ctx) {
  constexpr int N = 6;
  const auto r = prior_pose_residual<D2<N>>(X[0].pose, problem.prior_mean.pose, seeds<N, 6>(0));
  Expansion<N, 6> e;
  expand<N, 6>(r, e);
  const Eigen::Matrix<double, 6, 6> W = ctx.W_prior.head<6>().asDiagonal();
  return curvature<N, 6>(e, W);
}

KktSystem assemble(const std::vector<ManifoldState>& X, const EstimationProblem& problem,
                   HessianKind kind, Exec exec, bool want_h) {
  const ResidualContext ctx = make_context(problem);
  const int N = problem.num_states();
  if (static_cast<int>(X.size()) != N) throw Error(ErrorCode::kLengthMismatch, "trajectory length");
  const int n = ctx.dim;
  const int m = problem.layout.size();
  const bool exact = want_h && kind == HessianKind::kExact;
  const ProcessDerivatives pd = process_derivatives(problem);
  const LegWeightSeeds ws = leg_weight_seeds(problem);

  std::vector<StepTerms> steps(N);
  auto step = [&](int k) {
    steps[k].init(n, m);
    if (k + 1 < N) process_terms(X, problem, ctx, pd, k, exact, steps[k]);
    measurement_terms(X, problem, ctx, ws, k, exact, steps[k]);
  };
  if (exec == Exec::kSerial) {
    for (int k = 0; k < N; ++k) step(k);
  } else {
#pragma omp parallel for schedule(dynamic, 4)
    for (int k = 0; k < N; ++k) step(k);
  }

  KktSystem sys;
  if (want_h) {
    sys.H = build_normal_equations(X, problem, ctx, exec).H;
    if (exact) {
      sys.H.diag[0].topLeftCorner<6, 6>() += prior_curvature(X, problem, ctx);
      for (int k = 0; k < N; ++k) {
        sys.H.diag[k] += steps[k].curv.D0;
        if (k + 1 < N) {
          sys.H.diag[k + 1] += steps[k].curv.D1;
          sys.H.lower[k] += steps[k].curv.E;
        }
      }
    }
    for (auto& D : sys.H.diag) D = (0.5 * (D + D.transpose())).eval();
  }
  sys.B = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(N) * n, m);
  for (int k = 0; k < N; ++k) {
    sys.B.middleRows(static_cast<Eigen::Index>(k) * n, n) += steps[k].B0;
    if (k + 1 < N) sys.B.middleRows(static_cast<Eigen::Index>(k + 1) * n, n) += steps[k].B1;
  }
  return sys;
}

}  // namespace

BlockTridiagonal assemble_kkt_jacobian(const std::vector<ManifoldState>& X,
                                       const EstimationProblem& problem, HessianKind kind,
                                       Exec exec) {
  if (kind == HessianKind::kGaussNewton) {
    const ResidualContext ctx = make_context(problem);
    BlockTridiagonal H = build_normal_equations(X, problem, ctx, exec).H;
    for (auto& D : H.diag) D = (0.5 * (D + D.transpose())).eval();
    return H;
  }
  return assemble(X, problem, kind, exec, true).H;
}

Eigen::MatrixXd assemble_rhs(const std::vector<ManifoldState>& X,
                             const EstimationProblem& problem, Exec exec) {
  return assemble(X, problem, HessianKind::kGaussNewton, exec, false).B;
}

KktSystem assemble_kkt_system(const std::vector<ManifoldState>& X,
                              const EstimationProblem& problem, HessianKind kind, Exec exec) {
  return assemble(X, problem, kind, exec, true);
}

SensitivityMatrix solve_sensitivity(const KktSystem& system, const SensitivityOptions& options) {
  if (system.B.rows() != system.H.dim()) {
    throw Error(ErrorCode::kLengthMismatch, "rhs rows do not match the kkt matrix");
  }
  SensitivityMatrix out;
  const std::int64_t before = BlockCholesky::factorization_count();
  const BlockCholesky chol =
      factorize_with_retry(system.H, options.initial_shift, options.max_retries, &out.shift);
  out.factorizations = BlockCholesky::factorization_count() - before;
  out.Z = chol.solve_many(system.B, options.exec);
  return out;
}

SensitivityMatrix compute_sensitivity(const std::vector<ManifoldState>& X,
                                      const EstimationProblem& problem,
                                      const SensitivityOptions& options) {
  return solve_sensitivity(assemble_kkt_system(X, problem, options.hessian, options.exec),
                           options);
}

HessianGap gauss_newton_gap(const std::vector<ManifoldState>& X,
                            const EstimationProblem& problem) {
  const Eigen::MatrixXd He = assemble_kkt_jacobian(X, problem, HessianKind::kExact).to_dense();
  const Eigen::MatrixXd Hg =
      assemble_kkt_jacobian(X, problem, HessianKind::kGaussNewton).to_dense();
  HessianGap gap;
  gap.max_abs = (He - Hg).cwiseAbs().maxCoeff();
  gap.relative = gap.max_abs / std::max(He.cwiseAbs().maxCoeff(), 1e-300);
  return gap;
}

}  // namespace legcal
