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

// legcal command-line front end: generate, estimate, calibrate, gradcheck, evaluate.
//
// Exit codes: 0 success, 2 config/IO error, 3 solver non-convergence, 4 verification failure,
// 1 unexpected internal error.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <omp.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "legcal/calibrator.hpp"
#include "legcal/config.hpp"
#include "legcal/datagen.hpp"
#include "legcal/errors.hpp"
#include "legcal/hash.hpp"
#include "legcal/log_io.hpp"

namespace fs = std::filesystem;
using namespace legcal;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;
constexpr int kExitVerify = 4;

struct RunConfig {
  std::string subcommand;
  std::string config;
  std::string robot;
  std::string data;
  std::string theta;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  int jobs = 0;
  bool verbose = false;
  double corrupt_sensitivity = 0.0;
};

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw Error(ErrorCode::kConfig, std::string("--") + what + " is required");
  if (!fs::is_regular_file(path)) throw Error(ErrorCode::kIo, std::string(what) + " file not found: " + path);
}

RobotDescription robot_from(const RunConfig& rc) {
  if (rc.robot.empty()) return RobotDescription::default_quadruped();
  require_file(rc.robot, "robot");
  return load_robot(rc.robot);
}

std::string out_path(const RunConfig& rc, const std::string& name) {
  std::error_code ec;
  fs::create_directories(rc.out, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create output directory " + rc.out);
  return (fs::path(rc.out) / name).string();
}

void emit(const RunConfig& rc, const std::string& name, const std::string& text) {
  const std::string path = out_path(rc, name);
  write_text_file(path, text);
  std::printf("%s %016llx\n", path.c_str(), static_cast<unsigned long long>(fnv1a(text)));
}

/// Reference trajectory: the truth section when present, else mocap pose and velocity.
std::vector<ManifoldState> reference_states(const ImportedLog& data, const Segment& seg,
                                            std::size_t count) {
  std::vector<ManifoldState> ref(count, ManifoldState(data.log.n_legs));
  for (std::size_t k = 0; k < count; ++k) {
    if (data.truth) {
      ref[k] = data.truth->states[seg.begin + k];
    } else {
      ref[k].pose = data.log.mocap[seg.begin + k].pose;
      ref[k].velocity = data.log.mocap[seg.begin + k].velocity;
    }
  }
  return ref;
}

void theta_truth_error(const ImportedLog& data, const ParamLayout& layout,
                       const Eigen::VectorXd& theta, MetricsReport& report) {
  if (!data.truth || data.truth->theta.size() != theta.size()) return;
  report.theta_names = layout.names();
  report.theta_error.resize(theta.size());
  for (int i = 0; i < theta.size(); ++i) report.theta_error[i] = theta[i] - data.truth->theta[i];
}

struct Loaded {
  RobotKinematics robot;
  ImportedLog data;
  CalibrationConfig config;
  ParamLayout layout;
};

/// Parses every input named on the command line before any compute starts.
Loaded load_inputs(const RunConfig& rc, bool need_config) {
  RobotDescription desc = robot_from(rc);
  require_file(rc.data, "data");
  CalibrationConfig config;
  if (need_config || !rc.config.empty()) {
    require_file(rc.config, "config");
    config = load_calibration_config(rc.config);
  }
  if (!rc.theta.empty()) require_file(rc.theta, "theta");
  Loaded in{RobotKinematics(std::move(desc)), import_log(rc.data), config, ParamLayout()};
  in.layout = ParamLayout(in.robot.num_legs(), config.mode);
  return in;
}

Eigen::VectorXd theta_from(const RunConfig& rc, const Loaded& in) {
  return rc.theta.empty() ? initial_theta(in.config, in.layout) : load_theta(rc.theta, in.layout);
}

int cmd_generate(const RunConfig& rc) {
  require_file(rc.config, "config");
  const RobotDescription desc = robot_from(rc);
  GenerateConfig gc = load_generate_config(rc.config);
  if (rc.seed) gc.seed = *rc.seed;

  const RobotKinematics robot(desc);
  const ParamLayout layout(robot.num_legs(), gc.mode);
  const Eigen::VectorXd theta = theta_from_stds(layout, gc.noise_std, gc.foot_offsets, gc.base_offset);
  for (int j = 0; j < layout.n_legs() * 3 + 3; ++j) {
    if (std::abs(theta[layout.cov_size() + j]) > desc.offset_bound) {
      throw Error(ErrorCode::kConfig, rc.config + ": offsets exceed the robot's offset_bound");
    }
  }
  const TruthTrajectory truth = generate_trajectory(gc.script, robot, theta_feet(theta, layout));
  SynthesisOptions syn;
  syn.accel_bias0 = gc.accel_bias0;
  syn.gyro_bias0 = gc.gyro_bias0;
  SynthesisResult data = synthesize_sensors(truth, theta, layout, robot, gc.seed, syn);
  data.truth.theta = theta;

  std::ostringstream log;
  write_log(log, data.log, &data.truth);
  emit(rc, "log.txt", log.str());
  emit(rc, "theta_true.json", theta_to_json(theta, layout));
  spdlog::info("generated {} samples (seed {})", data.log.size(), gc.seed);
  return kExitOk;
}

int cmd_estimate(const RunConfig& rc, bool evaluate) {
  const Loaded in = load_inputs(rc, false);
  if (evaluate && rc.theta.empty()) throw Error(ErrorCode::kConfig, "--theta is required");
  const Segment seg = evaluate ? in.config.evaluation_segment : in.config.segment;
  const Eigen::VectorXd theta = theta_from(rc, in);
  const TruthBundle* truth = in.data.truth ? &*in.data.truth : nullptr;

  Timer timer;
  MetricsReport report;
  report.command = evaluate ? "evaluate" : "estimate";
  auto run = [&](const Eigen::VectorXd& th) {
    const EstimationProblem p = make_problem(in.robot, in.data.log, in.layout, th, seg, truth,
                                             in.config.prior_std);
    EstimateResult r = solve_fie(p, in.config.solver);
    report.solver_iterations += r.iterations;
    return std::make_pair(p.num_states(), std::move(r));
  };
  const auto [n, result] = run(theta);
  report.converged = result.converged;
  report.iterations = result.iterations;
  report.errors = trajectory_errors(result.trajectory, reference_states(in.data, seg, n));
  if (evaluate) {
    // Baseline at the configured initial theta on the same segment.
    const auto [n0, base] = run(initial_theta(in.config, in.layout));
    report.errors_before = trajectory_errors(base.trajectory, reference_states(in.data, seg, n0));
    report.converged = report.converged && base.converged;
  }
  theta_truth_error(in.data, in.layout, theta, report);
  report.wall_clock_s = timer.seconds();

  emit(rc, "trajectory.csv", trajectory_to_csv(result.trajectory, in.data.log.dt));
  emit(rc, "report.json", report_to_json(report));
  if (!report.converged) {
    spdlog::error("estimator did not converge");
    return kExitSolver;
  }
  return kExitOk;
}

int cmd_calibrate(const RunConfig& rc) {
  const Loaded in = load_inputs(rc, true);
  const Eigen::VectorXd theta0 = theta_from(rc, in);
  const FeasibleSet box = feasible_set(in.config, in.layout);
  if (box.violations(theta0) > 0) {
    throw Error(ErrorCode::kConfig, "initial theta lies outside the feasible set");
  }
  const TruthBundle* truth = in.data.truth ? &*in.data.truth : nullptr;
  const EstimationProblem p = make_problem(in.robot, in.data.log, in.layout, theta0,
                                           in.config.segment, truth, in.config.prior_std);
  const BilevelProblem bilevel(p, p.log.mocap, in.config.solver);

  Timer timer;
  MetricsReport report;
  report.command = "calibrate";
  CalibrationResult result;
  try {
    result = calibrate(bilevel, theta0, box, in.config.frank_wolfe);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kSolverDiverged) throw;
    report.converged = false;
    report.stop_reason = e.what();
    report.wall_clock_s = timer.seconds();
    emit(rc, "report.json", report_to_json(report));
    spdlog::error("{}", e.what());
    return kExitSolver;
  }
  report.converged = result.converged;
  report.stop_reason = result.stop_reason;
  report.loss = result.loss;
  report.grad_norm = result.grad_norm;
  int steps = 0;
  for (const auto& r : result.trace.records) {
    report.solver_iterations += r.solver_iterations;
    steps = std::max(steps, r.iteration);
  }
  report.iterations = steps;
  const auto ref = reference_states(in.data, in.config.segment, result.trajectory.size());
  report.errors = trajectory_errors(result.trajectory, ref);
  report.errors_before = trajectory_errors(bilevel.evaluate(theta0).solve.trajectory, ref);
  theta_truth_error(in.data, in.layout, result.theta, report);
  report.wall_clock_s = timer.seconds();

  emit(rc, "theta.json", theta_to_json(result.theta, in.layout));
  emit(rc, "trace.csv", trace_to_csv(result.trace, in.layout));
  emit(rc, "report.json", report_to_json(report));
  spdlog::info("calibration stopped: {} (loss {:.6g}, |grad| {:.3g})", result.stop_reason,
               result.loss, result.grad_norm);
  return kExitOk;
}

int cmd_gradcheck(const RunConfig& rc) {
  const Loaded in = load_inputs(rc, true);
  const Eigen::VectorXd theta = theta_from(rc, in);
  const TruthBundle* truth = in.data.truth ? &*in.data.truth : nullptr;
  const EstimationProblem p = make_problem(in.robot, in.data.log, in.layout, theta,
                                           in.config.segment, truth, in.config.prior_std);
  BilevelProblem bilevel(p, p.log.mocap, in.config.solver);
  if (rc.corrupt_sensitivity != 0.0) {
    spdlog::warn("sensitivity corrupted by factor {}", rc.corrupt_sensitivity);
    bilevel.set_sensitivity_corruption(rc.corrupt_sensitivity);
  }
  const GradientCheck check =
      gradient_check(bilevel, theta, in.config.gradcheck_eps, in.config.gradcheck_components);

  const auto names = in.layout.names();
  std::ostringstream csv;
  csv << "index,name,analytic,finite_difference,rel_error,status\n";
  int failures = 0;
  for (std::size_t i = 0; i < check.components.size(); ++i) {
    const int j = check.components[i];
    const bool ok = check.rel_error[i] <= in.config.gradcheck_tol;
    failures += ok ? 0 : 1;
    char row[256];
    std::snprintf(row, sizeof(row), "%d,%s,%.17g,%.17g,%.17g,%s", j, names[j].c_str(),
                  check.analytic[i], check.numeric[i], check.rel_error[i], ok ? "PASS" : "FAIL");
    csv << row << '\n';
    if (!check.probe_errors[i].empty()) {
      spdlog::error("probe {} ({}) failed: {}", j, names[j], check.probe_errors[i]);
    }
    std::printf("%4d %-14s analytic %+.6e  fd %+.6e  rel %.2e  %s\n", j, names[j].c_str(),
                check.analytic[i], check.numeric[i], check.rel_error[i], ok ? "PASS" : "FAIL");
  }
  emit(rc, "gradcheck.csv", csv.str());
  std::printf("max relative error %.3e over %zu components, %d above %.1e\n", check.max_rel_error,
              check.components.size(), failures, in.config.gradcheck_tol);
  return failures == 0 ? kExitOk : kExitVerify;
}

void configure_logging(const RunConfig& rc) {
  auto logger = spdlog::stderr_color_mt("legcal");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("CALIB_LOG_LEVEL")) {
    const auto level = spdlog::level::from_str(env);
    // from_str maps unknown names to off; only accept the literal "off".
    if (level != spdlog::level::off || std::string(env) == "off") spdlog::set_level(level);
  }
  if (rc.verbose) spdlog::set_level(spdlog::level::debug);
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kSolverDiverged:
      return kExitSolver;
    case ErrorCode::kConfig:
    case ErrorCode::kIo:
    case ErrorCode::kSchemaVersionMismatch:
    case ErrorCode::kMalformedRecord:
    case ErrorCode::kLengthMismatch:
    case ErrorCode::kBoxViolation:
    case ErrorCode::kIkOutOfRange:
    case ErrorCode::kInvalidArgument:
      return kExitConfig;
    default:
      return kExitInternal;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Noise covariance and kinematic offset calibration for legged state estimation"};
  app.require_subcommand(1, 1);
  RunConfig rc;
  app.add_option("--config", rc.config, "JSON config (generate or calibration config)");
  app.add_option("--robot", rc.robot, "Robot description JSON (default: built-in quadruped)");
  app.add_option("--data", rc.data, "Sensor log");
  app.add_option("--theta", rc.theta, "Theta file (initial or calibrated)");
  app.add_option("--out", rc.out, "Output directory")->capture_default_str();
  app.add_option("--seed", rc.seed, "Override the generation seed");
  app.add_option("--jobs", rc.jobs, "OpenMP threads (0: runtime default)")->check(CLI::NonNegativeNumber);
  app.add_flag("-v,--verbose", rc.verbose, "Debug logging");

  app.add_subcommand("generate", "Synthesize a sensor log with ground truth")->fallthrough();
  app.add_subcommand("estimate", "Solve the estimator on a log at a given theta")->fallthrough();
  app.add_subcommand("calibrate", "Calibrate theta on a log")->fallthrough();
  auto* gradcheck = app.add_subcommand("gradcheck", "Compare the analytic gradient with finite differences");
  gradcheck->fallthrough();
  gradcheck->add_option("--corrupt-sensitivity", rc.corrupt_sensitivity,
                        "Debug: scale the sensitivity by (1 + factor)");
  app.add_subcommand("evaluate", "Estimate on a held-out segment at theta and at the initial theta")
      ->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }
  rc.subcommand = app.get_subcommands().front()->get_name();
  configure_logging(rc);
  if (rc.jobs > 0) omp_set_num_threads(rc.jobs);

  try {
    if (rc.subcommand == "generate") return cmd_generate(rc);
    if (rc.subcommand == "estimate") return cmd_estimate(rc, false);
    if (rc.subcommand == "evaluate") return cmd_estimate(rc, true);
    if (rc.subcommand == "calibrate") return cmd_calibrate(rc);
    if (rc.subcommand == "gradcheck") return cmd_gradcheck(rc);
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    spdlog::error("internal error: {}", e.what());
    return kExitInternal;
  }
  return kExitInternal;
}
