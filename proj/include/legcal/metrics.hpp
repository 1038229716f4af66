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

#include "legcal/manifold.hpp"

namespace legcal {

struct TrajectoryErrors {
  double rmse_velocity = 0.0;  // m/s
  double rmse_euler = 0.0;     // rad, norm of log(R_est R_true^T)
};

/// sqrt(mean ||v - v_true||^2) and sqrt(mean ||log(R R_true^T)||^2). Throws kLengthMismatch.
TrajectoryErrors trajectory_errors(const std::vector<ManifoldState>& estimate,
                                   const std::vector<ManifoldState>& truth);

/// 1 - after / before; 0 when before is zero.
double relative_improvement(double before, double after);

}  // namespace legcal
