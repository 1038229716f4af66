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

#include "legcal/covariance.hpp"

#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "legcal/errors.hpp"
#include "legcal/hash.hpp"

namespace legcal {

const char* cov_block_name(CovBlock b) {
  static const char* kNames[kNumCovBlocks] = {"Q_p",  "Q_a",  "Q_w",     "Q_foot",
                                              "Q_ba", "Q_bw", "R_alpha", "R_alphadot"};
  return kNames[static_cast<int>(b)];
}

ParamLayout::ParamLayout(int n_legs, CovMode mode) : n_legs_(n_legs), mode_(mode) {}

bool ParamLayout::is_cholesky_diagonal(int i) const {
  if (i >= cov_size()) return false;
  const int k = i % per_block();
  return mode_ == CovMode::kDiagonal ? true : (k == 0 || k == 2 || k == 5);
}

std::vector<std::string> ParamLayout::names() const {
  static const char* kDiag[3] = {"L00", "L11", "L22"};
  static const char* kFull[6] = {"L00", "L10", "L11", "L20", "L21", "L22"};
  std::vector<std::string> out;
  for (int b = 0; b < kNumCovBlocks; ++b) {
    for (int k = 0; k < per_block(); ++k) {
      out.push_back(std::string(cov_block_name(static_cast<CovBlock>(b))) + "." +
                    (mode_ == CovMode::kDiagonal ? kDiag[k] : kFull[k]));
    }
  }
  for (int j = 0; j < n_legs_; ++j)
    for (const char* c : {"x", "y", "z"}) out.push_back("foot" + std::to_string(j) + "." + c);
  for (const char* c : {"x", "y", "z"}) out.push_back(std::string("base.") + c);
  return out;
}

std::uint64_t ParamLayout::schema_hash() const {
  std::string s = "theta-layout-v1;";
  for (const auto& n : names()) s += n + ";";
  return fnv1a(s);
}

Matrix3 covariance_block(const Eigen::VectorXd& theta, const ParamLayout& layout, CovBlock b) {
  return covariance_from_entries<double>(theta.data() + layout.cov_offset(b), layout.mode());
}

void set_covariance_block(Eigen::VectorXd& theta, const ParamLayout& layout, CovBlock b,
                          const Matrix3& sigma) {
  double* e = theta.data() + layout.cov_offset(b);
  if (layout.mode() == CovMode::kDiagonal) {
    for (int i = 0; i < 3; ++i) e[i] = std::sqrt(sigma(i, i));
    return;
  }
  Eigen::LLT<Matrix3> llt(sigma);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::kNotPD, cov_block_name(b));
  const Matrix3 L = llt.matrixL();
  e[0] = L(0, 0);
  e[1] = L(1, 0);
  e[2] = L(1, 1);
  e[3] = L(2, 0);
  e[4] = L(2, 1);
  e[5] = L(2, 2);
}

Vector3 theta_foot(const Eigen::VectorXd& theta, const ParamLayout& layout, int leg) {
  return theta.segment<3>(layout.foot_offset(leg));
}

std::vector<Vector3> theta_feet(const Eigen::VectorXd& theta, const ParamLayout& layout) {
  std::vector<Vector3> out(layout.n_legs());
  for (int j = 0; j < layout.n_legs(); ++j) out[j] = theta_foot(theta, layout, j);
  return out;
}

Vector3 theta_base(const Eigen::VectorXd& theta, const ParamLayout& layout) {
  return theta.segment<3>(layout.base_offset());
}

FeasibleSet FeasibleSet::uniform(const ParamLayout& layout, double cov_upper, double offset_bound) {
  FeasibleSet fs;
  fs.lower.resize(layout.size());
  fs.upper.resize(layout.size());
  for (int i = 0; i < layout.size(); ++i) {
    if (i < layout.cov_size()) {
      fs.lower[i] = layout.is_cholesky_diagonal(i) ? fs.pd_floor : -cov_upper;
      fs.upper[i] = cov_upper;
    } else {
      fs.lower[i] = -offset_bound;
      fs.upper[i] = offset_bound;
    }
  }
  return fs;
}

FeasibleSet FeasibleSet::per_block(const ParamLayout& layout,
                                   const std::array<double, kNumCovBlocks>& cov_upper,
                                   double offset_bound) {
  FeasibleSet fs = uniform(layout, 1.0, offset_bound);
  for (int b = 0; b < kNumCovBlocks; ++b) {
    const double u = cov_upper[b];
    if (!(u > fs.pd_floor)) throw Error(ErrorCode::kConfig, "covariance bound below the PD floor");
    for (int k = 0; k < layout.per_block(); ++k) {
      const int i = layout.cov_offset(static_cast<CovBlock>(b)) + k;
      fs.lower[i] = layout.is_cholesky_diagonal(i) ? fs.pd_floor : -u;
      fs.upper[i] = u;
    }
  }
  return fs;
}

int FeasibleSet::violations(const Eigen::VectorXd& theta) const {
  int n = 0;
  for (int i = 0; i < theta.size(); ++i) n += (theta[i] < lower[i] || theta[i] > upper[i]) ? 1 : 0;
  return n;
}

ProcessCov assemble_process_cov(const Eigen::VectorXd& theta, const ParamLayout& layout, double dt,
                                const FeasibleSet* fs) {
  if (theta.size() != layout.size()) throw Error(ErrorCode::kLengthMismatch, "theta size");
  if (fs != nullptr && fs->violations(theta) > 0) {
    throw Error(ErrorCode::kBoxViolation, "theta outside feasible box");
  }
  for (int i = 0; i < layout.cov_size(); ++i) {
    if (layout.is_cholesky_diagonal(i) && !(theta[i] > 0.0)) {
      throw Error(ErrorCode::kNotPD, "non-positive Cholesky diagonal");
    }
  }
  auto blk = [&](CovBlock b) { return covariance_block(theta, layout, b); };
  ProcessCov q;
  q.rot = dt * dt * blk(CovBlock::kQw);
  q.trans = dt * blk(CovBlock::kQp);
  q.vel = dt * dt * blk(CovBlock::kQa);
  q.foot = dt * blk(CovBlock::kQfoot);
  q.ba = dt * blk(CovBlock::kQba);
  q.bw = dt * blk(CovBlock::kQbw);
  return q;
}

PriorCov PriorCov::defaults(int n_legs) {
  PriorCov p;
  p.std_dev.resize(TangentLayout::dim(n_legs));
  p.std_dev.segment<3>(TangentLayout::kRot).setConstant(1e-3);
  p.std_dev.segment<3>(TangentLayout::kTrans).setConstant(1e-3);
  p.std_dev.segment<3>(TangentLayout::kVel).setConstant(1e-2);
  p.std_dev.segment(TangentLayout::kFeet, 3 * n_legs).setConstant(1e-2);
  p.std_dev.segment<3>(TangentLayout::accel_bias(n_legs)).setConstant(5e-2);
  p.std_dev.segment<3>(TangentLayout::gyro_bias(n_legs)).setConstant(1e-2);
  return p;
}

Eigen::VectorXd PriorCov::information_diagonal() const {
  return std_dev.array().square().inverse().matrix();
}

Eigen::MatrixXd assemble_prior_cov(const PriorCov& prior) {
  for (int i = 0; i < prior.std_dev.size(); ++i) {
    if (!(prior.std_dev[i] > 0.0)) throw Error(ErrorCode::kNotPD, "prior std must be positive");
  }
  return prior.std_dev.array().square().matrix().asDiagonal();
}

int count_non_pd_blocks(const Eigen::VectorXd& theta, const ParamLayout& layout) {
  int bad = 0;
  for (int b = 0; b < kNumCovBlocks; ++b) {
    const Matrix3 S = covariance_block(theta, layout, static_cast<CovBlock>(b));
    Eigen::LLT<Matrix3> llt(S);
    const bool ok = llt.info() == Eigen::Success &&
                    Eigen::SelfAdjointEigenSolver<Matrix3>(S).eigenvalues().minCoeff() > 0.0;
    bad += ok ? 0 : 1;
  }
  return bad;
}

}  // namespace legcal
