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

#include "legcal/metrics.hpp"

#include <cmath>

#include "legcal/errors.hpp"

namespace legcal {

TrajectoryErrors trajectory_errors(const std::vector<ManifoldState>& estimate,
                                   const std::vector<ManifoldState>& truth) {
  if (estimate.size() != truth.size()) throw Error(ErrorCode::kLengthMismatch, "trajectories");
  TrajectoryErrors out;
  if (estimate.empty()) return out;
  double sv = 0.0, sr = 0.0;
  for (std::size_t k = 0; k < estimate.size(); ++k) {
    sv += (estimate[k].velocity - truth[k].velocity).squaredNorm();
    sr += so3_log(estimate[k].pose.rotation * truth[k].pose.rotation.inverse()).squaredNorm();
  }
  const double n = static_cast<double>(estimate.size());
  out.rmse_velocity = std::sqrt(sv / n);
  out.rmse_euler = std::sqrt(sr / n);
  return out;
}

double relative_improvement(double before, double after) {
  return before > 0.0 ? 1.0 - after / before : 0.0;
}

}  // namespace legcal
