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

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "legcal/lie.hpp"
#include "legcal/manifold.hpp"

namespace legcal {

/// Covariance blocks in theta order: Q_w blocks, then R blocks.
enum class CovBlock : int { kQp = 0, kQa, kQw, kQfoot, kQba, kQbw, kRalpha, kRalphaDot };
inline constexpr int kNumCovBlocks = 8;
const char* cov_block_name(CovBlock b);

enum class CovMode { kDiagonal, kFull };

/// Flattened theta: [cov blocks | theta_foot leg-major | theta_base].
/// Diagonal mode stores (L00, L11, L22) per block, full mode (L00, L10, L11, L20, L21, L22).
class ParamLayout {
 public:
  explicit ParamLayout(int n_legs = 4, CovMode mode = CovMode::kDiagonal);

  int n_legs() const { return n_legs_; }
  CovMode mode() const { return mode_; }
  int per_block() const { return mode_ == CovMode::kDiagonal ? 3 : 6; }
  int cov_offset(CovBlock b) const { return static_cast<int>(b) * per_block(); }
  int cov_size() const { return kNumCovBlocks * per_block(); }
  int foot_offset(int leg) const { return cov_size() + 3 * leg; }
  int base_offset() const { return cov_size() + 3 * n_legs_; }
  int size() const { return base_offset() + 3; }

  /// True if entry i is a Cholesky diagonal.
  bool is_cholesky_diagonal(int i) const;
  std::vector<std::string> names() const;
  std::uint64_t schema_hash() const;

 private:
  int n_legs_;
  CovMode mode_;
};

/// Lower-triangular factor from a block's entries.
template <typename T>
lie::Mat3<T> cholesky_factor(const T* e, CovMode mode) {
  lie::Mat3<T> L = lie::Mat3<T>::Zero();
  if (mode == CovMode::kDiagonal) {
    L(0, 0) = e[0];
    L(1, 1) = e[1];
    L(2, 2) = e[2];
  } else {
    L(0, 0) = e[0];
    L(1, 0) = e[1];
    L(1, 1) = e[2];
    L(2, 0) = e[3];
    L(2, 1) = e[4];
    L(2, 2) = e[5];
  }
  return L;
}

template <typename T>
lie::Mat3<T> covariance_from_entries(const T* e, CovMode mode) {
  const lie::Mat3<T> L = cholesky_factor(e, mode);
  return L * L.transpose();
}

Matrix3 covariance_block(const Eigen::VectorXd& theta, const ParamLayout& layout, CovBlock b);
/// Inverse map for a PD matrix (off-diagonals dropped in diagonal mode).
void set_covariance_block(Eigen::VectorXd& theta, const ParamLayout& layout, CovBlock b,
                          const Matrix3& sigma);

Vector3 theta_foot(const Eigen::VectorXd& theta, const ParamLayout& layout, int leg);
std::vector<Vector3> theta_feet(const Eigen::VectorXd& theta, const ParamLayout& layout);
Vector3 theta_base(const Eigen::VectorXd& theta, const ParamLayout& layout);

/// Box bounds and PD floor on theta.
struct FeasibleSet {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  double pd_floor = 1e-6;  // keeps lambda_min(L L^T) >= 1e-12 in diagonal mode

  /// Diagonal entries in [pd_floor, cov_upper], off-diagonals in [-cov_upper, cov_upper],
  /// offsets in [-offset_bound, offset_bound].
  static FeasibleSet uniform(const ParamLayout& layout, double cov_upper, double offset_bound);
  /// Same with one Cholesky-entry bound per covariance block.
  static FeasibleSet per_block(const ParamLayout& layout,
                               const std::array<double, kNumCovBlocks>& cov_upper,
                               double offset_bound);
  /// Number of entries outside the box.
  int violations(const Eigen::VectorXd& theta) const;
};

/// Discrete process-noise blocks for one step of length dt.
struct ProcessCov {
  Matrix3 rot;    // dt^2 Q_w
  Matrix3 trans;  // dt Q_p
  Matrix3 vel;    // dt^2 Q_a
  Matrix3 foot;   // dt Q_foot
  Matrix3 ba;     // dt Q_ba
  Matrix3 bw;     // dt Q_bw
};

/// Throws kBoxViolation when fs is given and theta leaves it; kNotPD on a non-positive diagonal.
ProcessCov assemble_process_cov(const Eigen::VectorXd& theta, const ParamLayout& layout, double dt,
                                const FeasibleSet* fs = nullptr);

/// Fixed diagonal prior covariance on the tangent of x_0 (not part of theta).
struct PriorCov {
  Eigen::VectorXd std_dev;

  static PriorCov defaults(int n_legs);
  Eigen::VectorXd information_diagonal() const;
};

Eigen::MatrixXd assemble_prior_cov(const PriorCov& prior);

/// Cholesky (LLT) check of every assembled block; returns the number of failures.
int count_non_pd_blocks(const Eigen::VectorXd& theta, const ParamLayout& layout);

}  // namespace legcal
