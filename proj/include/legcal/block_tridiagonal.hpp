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

namespace legcal {

/// Execution path for kernels that have both a serial reference and an OpenMP version.
enum class Exec { kSerial, kParallel };

/// Symmetric block-tridiagonal matrix: diag[k] = H(k,k), lower[k] = H(k+1,k).
struct BlockTridiagonal {
  int block = 0;
  std::vector<Eigen::MatrixXd> diag;
  std::vector<Eigen::MatrixXd> lower;

  BlockTridiagonal() = default;
  BlockTridiagonal(int num_blocks, int block_size);

  int num_blocks() const { return static_cast<int>(diag.size()); }
  int dim() const { return block * num_blocks(); }
  void set_zero();
  void add_diagonal_shift(double shift);
  /// Adds lambda * diag(H) (Marquardt scaling).
  void scale_diagonal(double lambda);
  Eigen::VectorXd diagonal() const;
  Eigen::MatrixXd to_dense() const;
  Eigen::VectorXd multiply(const Eigen::VectorXd& x) const;
};

/// Block Cholesky (block Thomas) factorization H = L L^T with L lower block-bidiagonal.
class BlockCholesky {
 public:
  /// Throws kNotFactorizable if a pivot block is not positive definite.
  explicit BlockCholesky(const BlockTridiagonal& H);

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  /// Multi-RHS solve; the parallel path distributes columns over threads.
  Eigen::MatrixXd solve_many(const Eigen::MatrixXd& B, Exec exec = Exec::kParallel) const;
  /// log det H.
  double log_determinant() const;

  /// Successful factorizations since process start (or the last reset).
  static std::int64_t factorization_count();
  static void reset_factorization_count();

 private:
  void solve_in_place(Eigen::Ref<Eigen::MatrixXd> X) const;

  int block_ = 0;
  std::vector<Eigen::MatrixXd> L_;  // pivot factors
  std::vector<Eigen::MatrixXd> C_;  // C_[k] = H(k+1,k) L_k^{-T}
};

/// Factorizes H + shift*I, multiplying the shift by 10 after each failure (starting at
/// initial_shift if the unshifted matrix fails). Returns the shift used.
BlockCholesky factorize_with_retry(const BlockTridiagonal& H, double initial_shift,
                                   int max_retries, double* used_shift = nullptr);

/// Dense LLT reference solve.
Eigen::MatrixXd dense_solve(const BlockTridiagonal& H, const Eigen::MatrixXd& B);

}  // namespace legcal
