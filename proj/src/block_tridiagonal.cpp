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

#include "legcal/block_tridiagonal.hpp"

#include <atomic>
#include <cmath>

#include <Eigen/Cholesky>

#include "legcal/errors.hpp"

namespace legcal {

namespace {
std::atomic<std::int64_t> g_factorizations{0};
}  // namespace

BlockTridiagonal::BlockTridiagonal(int num_blocks, int block_size)
    : block(block_size),
      diag(num_blocks, Eigen::MatrixXd::Zero(block_size, block_size)),
      lower(num_blocks > 0 ? num_blocks - 1 : 0, Eigen::MatrixXd::Zero(block_size, block_size)) {}

void BlockTridiagonal::set_zero() {
  for (auto& d : diag) d.setZero();
  for (auto& l : lower) l.setZero();
}

void BlockTridiagonal::add_diagonal_shift(double shift) {
  for (auto& d : diag) d.diagonal().array() += shift;
}

void BlockTridiagonal::scale_diagonal(double lambda) {
  for (auto& d : diag) d.diagonal() *= (1.0 + lambda);
}

Eigen::VectorXd BlockTridiagonal::diagonal() const {
  Eigen::VectorXd out(dim());
  for (int k = 0; k < num_blocks(); ++k) out.segment(k * block, block) = diag[k].diagonal();
  return out;
}

Eigen::MatrixXd BlockTridiagonal::to_dense() const {
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(dim(), dim());
  for (int k = 0; k < num_blocks(); ++k) {
    H.block(k * block, k * block, block, block) = diag[k];
    if (k + 1 < num_blocks()) {
      H.block((k + 1) * block, k * block, block, block) = lower[k];
      H.block(k * block, (k + 1) * block, block, block) = lower[k].transpose();
    }
  }
  return H;
}

Eigen::VectorXd BlockTridiagonal::multiply(const Eigen::VectorXd& x) const {
  Eigen::VectorXd y(dim());
  const int b = block;
  for (int k = 0; k < num_blocks(); ++k) {
    Eigen::VectorXd acc = diag[k] * x.segment(k * b, b);
    if (k > 0) acc += lower[k - 1] * x.segment((k - 1) * b, b);
    if (k + 1 < num_blocks()) acc += lower[k].transpose() * x.segment((k + 1) * b, b);
    y.segment(k * b, b) = acc;
  }
  return y;
}

BlockCholesky::BlockCholesky(const BlockTridiagonal& H) : block_(H.block) {
  const int n = H.num_blocks();
  L_.resize(n);
  C_.resize(n > 0 ? n - 1 : 0);
  Eigen::MatrixXd S;
  for (int k = 0; k < n; ++k) {
    S = H.diag[k];
    if (k > 0) S.noalias() -= C_[k - 1] * C_[k - 1].transpose();
    Eigen::LLT<Eigen::MatrixXd> llt(S);
    if (llt.info() != Eigen::Success || !(llt.matrixLLT().diagonal().array() > 0.0).all()) {
      throw Error(ErrorCode::kNotFactorizable,
                  "pivot block " + std::to_string(k) + " is not positive definite");
    }
    L_[k] = llt.matrixL();
    if (k + 1 < n) {
      // C = H(k+1,k) L_k^{-T}  <=>  L_k C^T = H(k+1,k)^T
      C_[k] = L_[k].triangularView<Eigen::Lower>().solve(H.lower[k].transpose()).transpose();
    }
  }
  ++g_factorizations;
}

void BlockCholesky::solve_in_place(Eigen::Ref<Eigen::MatrixXd> X) const {
  const int n = static_cast<int>(L_.size());
  const int b = block_;
  for (int k = 0; k < n; ++k) {
    auto xk = X.middleRows(k * b, b);
    if (k > 0) xk.noalias() -= C_[k - 1] * X.middleRows((k - 1) * b, b);
    L_[k].triangularView<Eigen::Lower>().solveInPlace(xk);
  }
  for (int k = n - 1; k >= 0; --k) {
    auto xk = X.middleRows(k * b, b);
    if (k + 1 < n) xk.noalias() -= C_[k].transpose() * X.middleRows((k + 1) * b, b);
    L_[k].transpose().triangularView<Eigen::Upper>().solveInPlace(xk);
  }
}

Eigen::VectorXd BlockCholesky::solve(const Eigen::VectorXd& b) const {
  Eigen::MatrixXd X = b;
  solve_in_place(X);
  return X.col(0);
}

Eigen::MatrixXd BlockCholesky::solve_many(const Eigen::MatrixXd& B, Exec exec) const {
  Eigen::MatrixXd X = B;
  const int m = static_cast<int>(B.cols());
  if (exec == Exec::kSerial) {
    for (int c = 0; c < m; ++c) solve_in_place(X.col(c));
    return X;
  }
#pragma omp parallel for schedule(static)
  for (int c = 0; c < m; ++c) solve_in_place(X.col(c));
  return X;
}

double BlockCholesky::log_determinant() const {
  double s = 0.0;
  for (const auto& L : L_) s += 2.0 * L.diagonal().array().log().sum();
  return s;
}

std::int64_t BlockCholesky::factorization_count() { return g_factorizations.load(); }
void BlockCholesky::reset_factorization_count() { g_factorizations = 0; }

BlockCholesky factorize_with_retry(const BlockTridiagonal& H, double initial_shift,
                                   int max_retries, double* used_shift) {
  double shift = 0.0;
  for (int attempt = 0;; ++attempt) {
    try {
      if (shift == 0.0) {
        BlockCholesky f(H);
        if (used_shift != nullptr) *used_shift = 0.0;
        return f;
      }
      BlockTridiagonal Hs = H;
      Hs.add_diagonal_shift(shift);
      BlockCholesky f(Hs);
      if (used_shift != nullptr) *used_shift = shift;
      return f;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNotFactorizable || attempt >= max_retries) throw;
      shift = shift == 0.0 ? initial_shift : 10.0 * shift;
    }
  }
}

Eigen::MatrixXd dense_solve(const BlockTridiagonal& H, const Eigen::MatrixXd& B) {
  Eigen::LLT<Eigen::MatrixXd> llt(H.to_dense());
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::kNotFactorizable, "dense LLT failed");
  return llt.solve(B);
}

}  // namespace legcal
