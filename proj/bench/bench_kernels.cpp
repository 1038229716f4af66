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

// Serial reference vs OpenMP kernels on the standard T=50 problem.
// Arg 0 selects Exec::kSerial, 1 Exec::kParallel.

#include <benchmark/benchmark.h>

#include "legcal/calibrator.hpp"
#include "legcal/estimator.hpp"
#include "legcal/sensitivity.hpp"
#include "support/fixtures.hpp"

namespace {

using namespace legcal;

struct Fixture {
  std::unique_ptr<testing::Scenario> sc = testing::standard_fd_scenario();
  std::vector<ManifoldState> X = solve_fie(sc->problem).trajectory;
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

Exec exec_of(const benchmark::State& state) {
  return state.range(0) == 0 ? Exec::kSerial : Exec::kParallel;
}

void BM_NormalEquations(benchmark::State& state) {
  const auto& f = fixture();
  const ResidualContext ctx = make_context(f.sc->problem);
  for (auto _ : state) {
    benchmark::DoNotOptimize(build_normal_equations(f.X, f.sc->problem, ctx, exec_of(state)));
  }
}

void BM_KktSystem(benchmark::State& state) {
  const auto& f = fixture();
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        assemble_kkt_system(f.X, f.sc->problem, HessianKind::kExact, exec_of(state)));
  }
}

void BM_SensitivitySolve(benchmark::State& state) {
  const auto& f = fixture();
  const KktSystem sys = assemble_kkt_system(f.X, f.sc->problem);
  SensitivityOptions opt;
  opt.exec = exec_of(state);
  for (auto _ : state) benchmark::DoNotOptimize(solve_sensitivity(sys, opt));
}

void BM_FiniteDifferenceProbes(benchmark::State& state) {
  const auto& f = fixture();
  const BilevelProblem bp(f.sc->problem, f.sc->data.log.mocap, testing::tight_solver());
  const std::vector<int> comps = {0, 9, 21, 27, 36};
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        finite_difference_gradient(bp, f.sc->theta_true, 1e-5, f.X, comps, exec_of(state)));
  }
}

BENCHMARK(BM_NormalEquations)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_KktSystem)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SensitivitySolve)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FiniteDifferenceProbes)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
