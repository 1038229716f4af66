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

#include "legcal/config.hpp"

#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include <json.hpp>

#include "legcal/errors.hpp"

namespace legcal {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

json parse_json(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, origin + ": " + e.what());
  }
}

[[noreturn]] void bad(const std::string& origin, const std::string& what) {
  throw Error(ErrorCode::kConfig, origin + ": " + what);
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) bad(where, "expected an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) bad(where, "unknown key '" + key + "'");
  }
}

double get_number(const json& v, const std::string& where) {
  if (!v.is_number()) bad(where, "expected a number");
  return v.get<double>();
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  const std::string here = where + "." + key;
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) bad(here, "expected a boolean");
    out = v.get<bool>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) bad(here, "expected a string");
    out = v.get<std::string>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) bad(here, "expected an integer");
    if (v.is_number_unsigned()) {
      out = static_cast<T>(v.get<std::uint64_t>());
    } else {
      const auto i = v.get<std::int64_t>();
      if (std::is_unsigned_v<T> && i < 0) bad(here, "expected a non-negative integer");
      out = static_cast<T>(i);
    }
  } else {
    out = get_number(v, here);
  }
}

Vector3 to_vec3(const json& v, const std::string& where) {
  if (!v.is_array() || v.size() != 3) bad(where, "expected an array of 3 numbers");
  return Vector3(get_number(v[0], where), get_number(v[1], where), get_number(v[2], where));
}

void read_vec3(const json& j, const char* key, Vector3& out, const std::string& where) {
  if (j.contains(key)) out = to_vec3(j.at(key), where + "." + key);
}

ordered_json from_vec3(const Vector3& v) { return ordered_json::array({v.x(), v.y(), v.z()}); }

void read_block_values(const json& j, const char* key, std::array<double, kNumCovBlocks>& out,
                       const std::string& where) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  const std::string here = where + "." + key;
  if (!v.is_object()) bad(here, "expected an object keyed by block name");
  for (const auto& [name, value] : v.items()) {
    int found = -1;
    for (int b = 0; b < kNumCovBlocks; ++b) {
      if (name == cov_block_name(static_cast<CovBlock>(b))) found = b;
    }
    if (found < 0) bad(here, "unknown covariance block '" + name + "'");
    const double x = get_number(value, here + "." + name);
    if (!(x > 0.0)) bad(here + "." + name, "must be positive");
    out[found] = x;
  }
}

CovMode parse_mode(const json& j, const std::string& where) {
  std::string m = "diagonal";
  read(j, "covariance_mode", m, where);
  if (m == "diagonal") return CovMode::kDiagonal;
  if (m == "full") return CovMode::kFull;
  bad(where + ".covariance_mode", "expected 'diagonal' or 'full'");
}

Segment parse_segment(const json& j, const std::string& where) {
  check_keys(j, {"begin", "count"}, where);
  Segment s;
  read(j, "begin", s.begin, where);
  read(j, "count", s.count, where);
  return s;
}

GaitScript parse_gait(const json& j, const std::string& where) {
  check_keys(j,
             {"type", "duration", "dt", "stride_length", "step_height", "speed", "lateral_speed",
              "yaw_rate", "ramp_time", "body_height", "roll_amplitude", "roll_frequency",
              "pitch_amplitude", "pitch_frequency", "height_amplitude", "height_frequency"},
             where);
  GaitScript s;
  std::string type = "trot";
  read(j, "type", type, where);
  if (type == "trot") {
    s.type = GaitType::kTrot;
  } else if (type == "stand") {
    s.type = GaitType::kStand;
  } else {
    bad(where + ".type", "expected 'trot' or 'stand'");
  }
  read(j, "duration", s.duration, where);
  read(j, "dt", s.dt, where);
  read(j, "stride_length", s.stride_length, where);
  read(j, "step_height", s.step_height, where);
  read(j, "speed", s.speed, where);
  read(j, "lateral_speed", s.lateral_speed, where);
  read(j, "yaw_rate", s.yaw_rate, where);
  read(j, "ramp_time", s.ramp_time, where);
  read(j, "body_height", s.body_height, where);
  read(j, "roll_amplitude", s.roll_amplitude, where);
  read(j, "roll_frequency", s.roll_frequency, where);
  read(j, "pitch_amplitude", s.pitch_amplitude, where);
  read(j, "pitch_frequency", s.pitch_frequency, where);
  read(j, "height_amplitude", s.height_amplitude, where);
  read(j, "height_frequency", s.height_frequency, where);
  try {
    s.validate();
  } catch (const Error& e) {
    bad(where, e.what());
  }
  return s;
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string hash_hex(std::uint64_t h) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

Eigen::VectorXd theta_from_stds(const ParamLayout& layout, const BlockStds& stds,
                                const std::vector<Vector3>& foot_offsets,
                                const Vector3& base_offset) {
  const int n = layout.n_legs();
  if (!foot_offsets.empty() && foot_offsets.size() != 1 && static_cast<int>(foot_offsets.size()) != n) {
    throw Error(ErrorCode::kLengthMismatch, "foot offsets: expected 1 or n_legs entries");
  }
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(layout.size());
  for (int b = 0; b < kNumCovBlocks; ++b) {
    set_covariance_block(theta, layout, static_cast<CovBlock>(b),
                         stds[b] * stds[b] * Matrix3::Identity());
  }
  for (int j = 0; j < n && !foot_offsets.empty(); ++j) {
    theta.segment<3>(layout.foot_offset(j)) = foot_offsets[foot_offsets.size() == 1 ? 0 : j];
  }
  theta.segment<3>(layout.base_offset()) = base_offset;
  return theta;
}

RobotDescription parse_robot(const std::string& json_text, const std::string& origin) {
  const json j = parse_json(json_text, origin);
  check_keys(j, {"schema_version", "name", "hip_length", "thigh_length", "calf_length",
                 "offset_bound", "legs"},
             origin);
  if (!j.contains("schema_version")) bad(origin, "missing schema_version");
  int version = 0;
  read(j, "schema_version", version, origin);
  if (version != RobotDescription::kSchemaVersion) {
    throw Error(ErrorCode::kSchemaVersionMismatch,
                origin + ": robot schema_version " + std::to_string(version) + ", expected " +
                    std::to_string(RobotDescription::kSchemaVersion));
  }
  RobotDescription d;
  read(j, "name", d.name, origin);
  read(j, "hip_length", d.hip_length, origin);
  read(j, "thigh_length", d.thigh_length, origin);
  read(j, "calf_length", d.calf_length, origin);
  read(j, "offset_bound", d.offset_bound, origin);
  if (!(d.hip_length >= 0.0 && d.thigh_length > 0.0 && d.calf_length > 0.0)) {
    bad(origin, "link lengths must be positive");
  }
  if (!(d.offset_bound > 0.0)) bad(origin, "offset_bound must be positive");
  if (!j.contains("legs") || !j.at("legs").is_array() || j.at("legs").empty()) {
    bad(origin, "legs must be a non-empty array");
  }
  for (std::size_t i = 0; i < j.at("legs").size(); ++i) {
    const json& l = j.at("legs")[i];
    const std::string where = origin + ".legs[" + std::to_string(i) + "]";
    check_keys(l, {"name", "hip_position", "side", "axes"}, where);
    LegDescription leg;
    read(l, "name", leg.name, where);
    read_vec3(l, "hip_position", leg.hip_position, where);
    read(l, "side", leg.side, where);
    if (leg.side != 1.0 && leg.side != -1.0) bad(where + ".side", "expected 1 or -1");
    if (l.contains("axes")) {
      const json& ax = l.at("axes");
      if (!ax.is_array() || ax.size() != 3) bad(where + ".axes", "expected 3 joint axes");
      for (int k = 0; k < 3; ++k) {
        leg.axes[k] = to_vec3(ax[k], where + ".axes");
        const double nrm = leg.axes[k].norm();
        if (std::abs(nrm - 1.0) > 1e-9) bad(where + ".axes", "joint axes must be unit vectors");
      }
    }
    d.legs.push_back(leg);
  }
  return d;
}

std::string robot_to_json(const RobotDescription& d) {
  ordered_json j;
  j["schema_version"] = RobotDescription::kSchemaVersion;
  j["name"] = d.name;
  j["hip_length"] = d.hip_length;
  j["thigh_length"] = d.thigh_length;
  j["calf_length"] = d.calf_length;
  j["offset_bound"] = d.offset_bound;
  j["legs"] = ordered_json::array();
  for (const auto& L : d.legs) {
    ordered_json l;
    l["name"] = L.name;
    l["hip_position"] = from_vec3(L.hip_position);
    l["side"] = L.side;
    l["axes"] = ordered_json::array();
    for (const auto& a : L.axes) l["axes"].push_back(from_vec3(a));
    j["legs"].push_back(l);
  }
  return j.dump(2) + "\n";
}

RobotDescription load_robot(const std::string& path) {
  return parse_robot(read_text_file(path), path);
}

void save_robot(const std::string& path, const RobotDescription& robot) {
  write_text_file(path, robot_to_json(robot));
}

GenerateConfig parse_generate_config(const std::string& json_text, const std::string& origin) {
  const json j = parse_json(json_text, origin);
  check_keys(j, {"gait", "noise_std", "foot_offset", "foot_offsets", "base_offset",
                 "accel_bias0", "gyro_bias0", "seed", "covariance_mode"},
             origin);
  GenerateConfig c;
  if (j.contains("gait")) c.script = parse_gait(j.at("gait"), origin + ".gait");
  read_block_values(j, "noise_std", c.noise_std, origin);
  if (j.contains("foot_offset") && j.contains("foot_offsets")) {
    bad(origin, "give either foot_offset or foot_offsets");
  }
  if (j.contains("foot_offset")) c.foot_offsets = {to_vec3(j.at("foot_offset"), origin + ".foot_offset")};
  if (j.contains("foot_offsets")) {
    const json& f = j.at("foot_offsets");
    if (!f.is_array()) bad(origin + ".foot_offsets", "expected an array");
    for (const auto& e : f) c.foot_offsets.push_back(to_vec3(e, origin + ".foot_offsets"));
  }
  read_vec3(j, "base_offset", c.base_offset, origin);
  read_vec3(j, "accel_bias0", c.accel_bias0, origin);
  read_vec3(j, "gyro_bias0", c.gyro_bias0, origin);
  read(j, "seed", c.seed, origin);
  c.mode = parse_mode(j, origin);
  return c;
}

GenerateConfig load_generate_config(const std::string& path) {
  return parse_generate_config(read_text_file(path), path);
}

CalibrationConfig parse_calibration_config(const std::string& json_text, const std::string& origin) {
  const json j = parse_json(json_text, origin);
  check_keys(j, {"covariance_mode", "initial", "bounds", "prior_std", "solver", "frank_wolfe",
                 "segment", "evaluation_segment", "gradcheck"},
             origin);
  CalibrationConfig c;
  c.mode = parse_mode(j, origin);

  if (j.contains("initial")) {
    const json& i = j.at("initial");
    const std::string w = origin + ".initial";
    check_keys(i, {"noise_std", "foot_offset", "base_offset"}, w);
    read_block_values(i, "noise_std", c.initial_std, w);
    read_vec3(i, "foot_offset", c.initial_foot_offset, w);
    read_vec3(i, "base_offset", c.initial_base_offset, w);
  }
  if (j.contains("bounds")) {
    const json& b = j.at("bounds");
    const std::string w = origin + ".bounds";
    check_keys(b, {"cholesky_upper", "offset", "pd_floor"}, w);
    read_block_values(b, "cholesky_upper", c.cov_upper, w);
    read(b, "offset", c.offset_bound, w);
    read(b, "pd_floor", c.pd_floor, w);
    if (!(c.offset_bound > 0.0)) bad(w + ".offset", "must be positive");
    if (!(c.pd_floor > 0.0)) bad(w + ".pd_floor", "must be positive");
  }
  if (j.contains("prior_std")) {
    const json& p = j.at("prior_std");
    if (!p.is_array()) bad(origin + ".prior_std", "expected an array");
    std::vector<double> v;
    for (const auto& e : p) {
      const double x = get_number(e, origin + ".prior_std");
      if (!(x > 0.0)) bad(origin + ".prior_std", "entries must be positive");
      v.push_back(x);
    }
    c.prior_std = v;
  }
  if (j.contains("solver")) {
    const json& s = j.at("solver");
    const std::string w = origin + ".solver";
    check_keys(s, {"grad_tol", "scaled_grad_tol", "rel_cost_tol", "step_tol", "polish_steps",
                   "max_iterations", "lambda_init", "lambda_min", "lambda_max"},
               w);
    read(s, "grad_tol", c.solver.grad_tol, w);
    read(s, "scaled_grad_tol", c.solver.scaled_grad_tol, w);
    read(s, "rel_cost_tol", c.solver.rel_cost_tol, w);
    read(s, "step_tol", c.solver.step_tol, w);
    read(s, "polish_steps", c.solver.polish_steps, w);
    read(s, "max_iterations", c.solver.max_iterations, w);
    read(s, "lambda_init", c.solver.lambda_init, w);
    read(s, "lambda_min", c.solver.lambda_min, w);
    read(s, "lambda_max", c.solver.lambda_max, w);
    if (c.solver.max_iterations < 1) bad(w + ".max_iterations", "must be >= 1");
  }
  if (j.contains("frank_wolfe")) {
    const json& f = j.at("frank_wolfe");
    const std::string w = origin + ".frank_wolfe";
    check_keys(f, {"direction", "rho", "beta", "k_max", "radius0", "radius_max", "radius_min",
                   "shrink", "grow", "t_max", "gap_tol", "grad_tol", "check_convexity",
                   "model_damping"},
               w);
    FrankWolfeOptions& o = c.frank_wolfe;
    std::string dir = "model";
    read(f, "direction", dir, w);
    if (dir == "model") {
      o.direction = Direction::kGaussNewtonModel;
    } else if (dir == "linear") {
      o.direction = Direction::kLinear;
    } else {
      bad(w + ".direction", "expected 'model' or 'linear'");
    }
    read(f, "rho", o.armijo.rho, w);
    read(f, "beta", o.armijo.beta, w);
    read(f, "k_max", o.armijo.k_max, w);
    read(f, "radius0", o.radius0, w);
    read(f, "radius_max", o.radius_max, w);
    read(f, "radius_min", o.radius_min, w);
    read(f, "shrink", o.shrink, w);
    read(f, "grow", o.grow, w);
    read(f, "t_max", o.t_max, w);
    read(f, "gap_tol", o.gap_tol, w);
    read(f, "grad_tol", o.grad_tol, w);
    read(f, "check_convexity", o.check_convexity, w);
    read(f, "model_damping", o.model_damping, w);
    if (!(o.armijo.rho > 0.0 && o.armijo.rho < 1.0)) bad(w + ".rho", "must lie in (0, 1)");
    if (!(o.armijo.beta > 0.0 && o.armijo.beta < 1.0)) bad(w + ".beta", "must lie in (0, 1)");
    if (o.armijo.k_max < 0) bad(w + ".k_max", "must be >= 0");
    if (o.t_max < 0) bad(w + ".t_max", "must be >= 0");
    if (!(o.radius0 > 0.0 && o.radius0 <= o.radius_max)) {
      bad(w + ".radius0", "must lie in (0, radius_max]");
    }
  }
  if (j.contains("segment")) c.segment = parse_segment(j.at("segment"), origin + ".segment");
  if (j.contains("evaluation_segment")) {
    c.evaluation_segment = parse_segment(j.at("evaluation_segment"), origin + ".evaluation_segment");
  }
  if (j.contains("gradcheck")) {
    const json& g = j.at("gradcheck");
    const std::string w = origin + ".gradcheck";
    check_keys(g, {"eps", "tol", "components"}, w);
    read(g, "eps", c.gradcheck_eps, w);
    read(g, "tol", c.gradcheck_tol, w);
    if (g.contains("components")) {
      const json& comp = g.at("components");
      if (!comp.is_array()) bad(w + ".components", "expected an array of indices");
      for (const auto& e : comp) {
        if (!e.is_number_integer()) bad(w + ".components", "expected integer indices");
        c.gradcheck_components.push_back(e.get<int>());
      }
    }
    if (!(c.gradcheck_eps > 0.0)) bad(w + ".eps", "must be positive");
  }
  return c;
}

CalibrationConfig load_calibration_config(const std::string& path) {
  return parse_calibration_config(read_text_file(path), path);
}

Eigen::VectorXd initial_theta(const CalibrationConfig& config, const ParamLayout& layout) {
  return theta_from_stds(layout, config.initial_std, {config.initial_foot_offset},
                         config.initial_base_offset);
}

FeasibleSet feasible_set(const CalibrationConfig& config, const ParamLayout& layout) {
  FeasibleSet fs = FeasibleSet::per_block(layout, config.cov_upper, config.offset_bound);
  fs.pd_floor = config.pd_floor;
  for (int i = 0; i < layout.size(); ++i) {
    if (layout.is_cholesky_diagonal(i)) fs.lower[i] = config.pd_floor;
  }
  return fs;
}

std::string theta_to_json(const Eigen::VectorXd& theta, const ParamLayout& layout) {
  if (theta.size() != layout.size()) throw Error(ErrorCode::kLengthMismatch, "theta size");
  ordered_json j;
  j["schema_hash"] = hash_hex(layout.schema_hash());
  j["covariance_mode"] = layout.mode() == CovMode::kDiagonal ? "diagonal" : "full";
  j["n_legs"] = layout.n_legs();
  j["names"] = layout.names();
  j["values"] = ordered_json::array();
  for (int i = 0; i < theta.size(); ++i) j["values"].push_back(theta[i]);
  return j.dump(2) + "\n";
}

Eigen::VectorXd parse_theta(const std::string& json_text, const ParamLayout& layout,
                            const std::string& origin) {
  const json j = parse_json(json_text, origin);
  check_keys(j, {"schema_hash", "covariance_mode", "n_legs", "names", "values"}, origin);
  std::string hash;
  read(j, "schema_hash", hash, origin);
  if (hash != hash_hex(layout.schema_hash())) {
    throw Error(ErrorCode::kSchemaVersionMismatch,
                origin + ": theta schema hash " + hash + " does not match the layout (" +
                    hash_hex(layout.schema_hash()) + ")");
  }
  if (!j.contains("values") || !j.at("values").is_array()) bad(origin, "missing values array");
  const json& v = j.at("values");
  if (static_cast<int>(v.size()) != layout.size()) {
    throw Error(ErrorCode::kLengthMismatch, origin + ": theta has " + std::to_string(v.size()) +
                                                " values, layout needs " +
                                                std::to_string(layout.size()));
  }
  Eigen::VectorXd theta(layout.size());
  for (int i = 0; i < layout.size(); ++i) theta[i] = get_number(v[i], origin + ".values");
  return theta;
}

void save_theta(const std::string& path, const Eigen::VectorXd& theta, const ParamLayout& layout) {
  write_text_file(path, theta_to_json(theta, layout));
}

Eigen::VectorXd load_theta(const std::string& path, const ParamLayout& layout) {
  return parse_theta(read_text_file(path), layout, path);
}

std::string trace_to_csv(const CalibrationTrace& trace, const ParamLayout& layout) {
  std::ostringstream os;
  os << "iteration,event,accepted,loss,grad_norm,gamma,gap,radius,line_search_trials,"
        "solver_iterations";
  for (const auto& n : layout.names()) os << ',' << n;
  os << '\n';
  for (const auto& r : trace.records) {
    os << r.iteration << ',' << r.event << ',' << (r.accepted ? 1 : 0) << ',' << fmt17(r.loss)
       << ',' << fmt17(r.grad_norm) << ',' << fmt17(r.gamma) << ',' << fmt17(r.gap) << ','
       << fmt17(r.radius) << ',' << r.line_search_trials << ',' << r.solver_iterations;
    for (int i = 0; i < r.theta.size(); ++i) os << ',' << fmt17(r.theta[i]);
    os << '\n';
  }
  return os.str();
}

std::string trajectory_to_csv(const std::vector<ManifoldState>& X, double dt) {
  std::ostringstream os;
  const int n_legs = X.empty() ? 0 : X.front().num_legs();
  os << "k,t,rx,ry,rz,px,py,pz,vx,vy,vz,bax,bay,baz,bwx,bwy,bwz";
  for (int j = 0; j < n_legs; ++j) os << ",f" << j << "x,f" << j << "y,f" << j << "z";
  os << '\n';
  auto v3 = [&](const Vector3& v) {
    os << ',' << fmt17(v.x()) << ',' << fmt17(v.y()) << ',' << fmt17(v.z());
  };
  for (std::size_t k = 0; k < X.size(); ++k) {
    os << k << ',' << fmt17(static_cast<double>(k) * dt);
    v3(so3_log(X[k].pose.rotation));
    v3(X[k].pose.translation);
    v3(X[k].velocity);
    v3(X[k].accel_bias);
    v3(X[k].gyro_bias);
    for (const auto& f : X[k].feet) v3(f);
    os << '\n';
  }
  return os.str();
}

std::string report_to_json(const MetricsReport& r) {
  ordered_json j;
  j["command"] = r.command;
  j["converged"] = r.converged;
  if (!r.stop_reason.empty()) j["stop_reason"] = r.stop_reason;
  auto errs = [](const TrajectoryErrors& e) {
    ordered_json o;
    o["rmse_velocity"] = e.rmse_velocity;
    o["rmse_euler"] = e.rmse_euler;
    return o;
  };
  if (r.errors) j["errors"] = errs(*r.errors);
  if (r.errors_before) {
    j["errors_initial"] = errs(*r.errors_before);
    if (r.errors) {
      j["improvement_velocity"] =
          relative_improvement(r.errors_before->rmse_velocity, r.errors->rmse_velocity);
      j["improvement_euler"] =
          relative_improvement(r.errors_before->rmse_euler, r.errors->rmse_euler);
    }
  }
  if (r.loss) j["loss"] = *r.loss;
  if (r.grad_norm) j["grad_norm"] = *r.grad_norm;
  j["iterations"] = r.iterations;
  j["solver_iterations"] = r.solver_iterations;
  if (!r.theta_error.empty()) {
    ordered_json e;
    for (std::size_t i = 0; i < r.theta_error.size(); ++i) {
      e[i < r.theta_names.size() ? r.theta_names[i] : std::to_string(i)] = r.theta_error[i];
    }
    j["theta_error"] = e;
  }
  j["wall_clock_s"] = r.wall_clock_s;
  return j.dump(2) + "\n";
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::kIo, "cannot write " + path);
  os << text;
  if (!os) throw Error(ErrorCode::kIo, "write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::kIo, "cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

EstimationProblem make_problem(const RobotKinematics& robot, const SensorLog& log,
                               const ParamLayout& layout, const Eigen::VectorXd& theta,
                               const Segment& segment, const TruthBundle* truth,
                               const std::optional<std::vector<double>>& prior_std) {
  if (segment.begin >= log.size()) {
    throw Error(ErrorCode::kConfig, "segment begins after the end of the log");
  }
  const std::size_t count = segment.count == 0 ? log.size() - segment.begin : segment.count;
  if (segment.begin + count > log.size() || count < 2) {
    throw Error(ErrorCode::kConfig, "segment does not fit the log");
  }
  if (log.mocap.size() != log.size()) {
    throw Error(ErrorCode::kLengthMismatch, "the log has no ground-truth samples");
  }
  if (log.n_legs != robot.num_legs() || layout.n_legs() != robot.num_legs()) {
    throw Error(ErrorCode::kLengthMismatch, "leg count differs between log and robot");
  }
  if (log.robot_hash != 0 && log.robot_hash != robot.hash()) {
    throw Error(ErrorCode::kSchemaVersionMismatch, "log was recorded with a different robot");
  }
  EstimationProblem p;
  p.robot = &robot;
  p.log = (segment.begin == 0 && count == log.size()) ? log : log.segment(segment.begin, count);
  p.layout = layout;
  p.theta = theta;
  p.prior = PriorCov::defaults(robot.num_legs());
  if (prior_std) {
    if (static_cast<int>(prior_std->size()) != p.prior.std_dev.size()) {
      throw Error(ErrorCode::kConfig, "prior_std needs " + std::to_string(p.prior.std_dev.size()) +
                                          " entries");
    }
    for (std::size_t i = 0; i < prior_std->size(); ++i) p.prior.std_dev[i] = (*prior_std)[i];
  }
  if (truth) {
    if (truth->states.size() != log.size()) {
      throw Error(ErrorCode::kLengthMismatch, "truth states do not match the log");
    }
    p.prior_mean = truth->states[segment.begin];
    p.validate();
    return p;
  }
  const Pose gt = corrected_ground_truth(p.log.mocap.front(), theta_base(theta, layout));
  ManifoldState x0(robot.num_legs());
  x0.pose = gt;
  x0.velocity = p.log.mocap.front().velocity;
  const Matrix3 R = gt.rotation.matrix();
  for (int j = 0; j < robot.num_legs(); ++j) {
    x0.feet[j] = gt.translation + R * robot.forward_kinematics(p.log.legs.front().alpha[j], j,
                                                               theta_foot(theta, layout, j));
  }
  p.prior_mean = x0;
  p.validate();
  return p;
}

}  // namespace legcal
