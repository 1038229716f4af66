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

// Per-step normal-equation blocks shared by the estimator and the sensitivity module.

#include <array>
#include <vector>

#include <Eigen/Core>

#include "legcal/block_tridiagonal.hpp"
#include "legcal/manifold.hpp"

namespace legcal::detail {

/// Local variable -> (state offset 0/1, tangent index).
struct Slot {
  int state;
  int index;
};

inline constexpr int kProcessVars = 24;  // pose_k, v_k, ba_k, bw_k, pose_k1, v_k1
inline constexpr int kLegVars = 15;      // pose, v, foot_j, bw

inline std::array<Slot, kProcessVars> process_slots(int n_legs) {
  std::array<Slot, kProcessVars> s{};
  const int ba = TangentLayout::accel_bias(n_legs), bw = TangentLayout::gyro_bias(n_legs);
  for (int i = 0; i < 9; ++i) s[i] = {0, i};
  for (int i = 0; i < 3; ++i) {
    s[9 + i] = {0, ba + i};
    s[12 + i] = {0, bw + i};
  }
  for (int i = 0; i < 9; ++i) s[15 + i] = {1, i};
  return s;
}

inline std::array<Slot, kLegVars> leg_slots(int n_legs, int leg) {
  std::array<Slot, kLegVars> s{};
  const int bw = TangentLayout::gyro_bias(n_legs);
  for (int i = 0; i < 9; ++i) s[i] = {0, i};
  for (int i = 0; i < 3; ++i) {
    s[9 + i] = {0, TangentLayout::foot(leg) + i};
    s[12 + i] = {0, bw + i};
  }
  return s;
}

/// Contributions of step k: coupling to k+1 through the process term.
struct StepBlock {
  Eigen::MatrixXd D0, E, D1;  // (k,k), (k+1,k), (k+1,k+1)
  Eigen::VectorXd g0, g1;
  double cost = 0.0;

  void init(int n) {
    D0.setZero(n, n);
    E.setZero(n, n);
    D1.setZero(n, n);
    g0.setZero(n);
    g1.setZero(n);
    cost = 0.0;
  }

  template <typename Mat, std::size_t N>
  void add_hessian(const Mat& Hl, const std::array<Slot, N>& s) {
    for (std::size_t a = 0; a < N; ++a) {
      for (std::size_t b = 0; b < N; ++b) {
        const double v = Hl(a, b);
        if (s[a].state == 0 && s[b].state == 0) {
          D0(s[a].index, s[b].index) += v;
        } else if (s[a].state == 1 && s[b].state == 1) {
          D1(s[a].index, s[b].index) += v;
        } else if (s[a].state == 1) {
          E(s[a].index, s[b].index) += v;
        }
      }
    }
  }

  template <typename Vec, std::size_t N>
  void add_gradient(const Vec& gl, const std::array<Slot, N>& s) {
    for (std::size_t a = 0; a < N; ++a) (s[a].state == 0 ? g0 : g1)[s[a].index] += gl[a];
  }

  /// Linear random walk r = x_{k+1}[i..i+3) - x_k[i..i+3) with weight W.
  void add_random_walk(int i, const Eigen::Matrix3d& W, const Eigen::Vector3d& r) {
    const Eigen::Matrix3d W2 = 2.0 * W;
    D0.block<3, 3>(i, i) += W2;
    D1.block<3, 3>(i, i) += W2;
    E.block<3, 3>(i, i) -= W2;
    const Eigen::Vector3d w = W2 * r;
    g0.segment<3>(i) -= w;
    g1.segment<3>(i) += w;
    cost += r.dot(W * r);
  }
};

/// Serial reduction in step order so every execution path sums identically.
inline void reduce_steps(const std::vector<StepBlock>& blocks, BlockTridiagonal& H,
                         Eigen::VectorXd& g, double& cost) {
  const int n = H.block;
  const int N = H.num_blocks();
  for (int k = 0; k < N; ++k) {
    const StepBlock& b = blocks[k];
    H.diag[k] += b.D0;
    g.segment(k * n, n) += b.g0;
    if (k + 1 < N) {
      H.diag[k + 1] += b.D1;
      H.lower[k] += b.E;
      g.segment((k + 1) * n, n) += b.g1;
    }
    cost += b.cost;
  }
}

}  // namespace legcal::detail
