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

#include "legcal/log_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string_view>
#include <vector>

#include "legcal/errors.hpp"

namespace legcal {

namespace {

constexpr const char* kMagic = "legcal-log";

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}

  Writer& num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), " %.17g", v);
    os_ << buf;
    return *this;
  }
  Writer& vec(const Vector3& v) { return num(v.x()).num(v.y()).num(v.z()); }
  Writer& pose(const Pose& p) {
    num(p.rotation.w()).num(p.rotation.x()).num(p.rotation.y()).num(p.rotation.z());
    return vec(p.translation);
  }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}

  long line_number() const { return line_no_; }

  /// Next non-empty, non-comment line split on whitespace; false at EOF.
  bool next(std::vector<std::string_view>& fields) {
    while (std::getline(is_, line_)) {
      ++line_no_;
      if (line_.empty() || line_[0] == '#') continue;
      fields.clear();
      std::string_view s(line_);
      std::size_t i = 0;
      while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
        std::size_t j = i;
        while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != '\r') ++j;
        if (j > i) fields.push_back(s.substr(i, j - i));
        i = j;
      }
      if (!fields.empty()) return true;
    }
    ++line_no_;
    return false;
  }

  std::vector<std::string_view> expect(std::string_view tag, std::size_t n_values) {
    std::vector<std::string_view> f;
    if (!next(f)) fail("unexpected end of file, expected '" + std::string(tag) + "'");
    if (f[0] != tag) fail("expected '" + std::string(tag) + "', got '" + std::string(f[0]) + "'");
    if (n_values != kAny && f.size() != n_values + 1) {
      fail("record '" + std::string(tag) + "' has " + std::to_string(f.size() - 1) +
           " fields, expected " + std::to_string(n_values));
    }
    return f;
  }

  double to_double(std::string_view s) const {
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
      // from_chars rejects "inf"/"nan" spellings on some libraries; fall back to strtod.
      const std::string tmp(s);
      char* end = nullptr;
      v = std::strtod(tmp.c_str(), &end);
      if (end != tmp.c_str() + tmp.size()) fail("bad number '" + tmp + "'");
    }
    return v;
  }

  std::uint64_t to_u64(std::string_view s, int base = 10) const {
    std::uint64_t v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v, base);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
      fail("bad integer '" + std::string(s) + "'");
    }
    return v;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw Error(ErrorCode::kMalformedRecord, msg + " (line " + std::to_string(line_no_) + ")",
                line_no_);
  }

  static constexpr std::size_t kAny = static_cast<std::size_t>(-1);

 private:
  std::istream& is_;
  std::string line_;
  long line_no_ = 0;
};

Vector3 read_vec(const Reader& r, const std::vector<std::string_view>& f, std::size_t& i) {
  Vector3 v;
  for (int k = 0; k < 3; ++k) v[k] = r.to_double(f[i++]);
  return v;
}

Pose read_pose(const Reader& r, const std::vector<std::string_view>& f, std::size_t& i) {
  double q[4];
  for (double& c : q) c = r.to_double(f[i++]);
  const double nq = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
  if (!(std::abs(nq - 1.0) < 1e-6)) r.fail("quaternion is not unit norm");
  Pose p;
  p.rotation = Rotation::from_quaternion(q[0], q[1], q[2], q[3], false);
  p.translation = read_vec(r, f, i);
  return p;
}

std::size_t record_width(int n_legs) { return 2 + 6 + 7 * n_legs + 7 + 3; }
std::size_t state_width(int n_legs) { return 1 + 7 + 3 + 3 * n_legs + 6; }

}  // namespace

void write_log(std::ostream& os, const SensorLog& log, const TruthBundle* truth) {
  const std::size_t n = log.size();
  if (log.legs.size() != n || log.mocap.size() != n) {
    throw Error(ErrorCode::kLengthMismatch, "log streams differ in length");
  }
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx", static_cast<unsigned long long>(log.robot_hash));
  os << kMagic << ' ' << kLogFormatVersion << '\n';
  os << "robot_hash " << hash << '\n';
  Writer w(os);
  os << "dt";
  w.num(log.dt);
  os << "\nlegs " << log.n_legs << "\nsteps " << n << '\n';
  os << "# r t accel[3] gyro[3] {alpha[3] alpha_dot[3] contact}xlegs quat[wxyz] pos[3] vel[3]\n";
  for (std::size_t k = 0; k < n; ++k) {
    const auto& u = log.imu[k];
    const auto& l = log.legs[k];
    os << 'r';
    w.num(u.t).vec(u.accel).vec(u.gyro);
    for (int j = 0; j < log.n_legs; ++j) {
      w.vec(l.alpha[j]).vec(l.alpha_dot[j]);
      os << ' ' << static_cast<int>(l.contact[j]);
    }
    w.pose(log.mocap[k].pose).vec(log.mocap[k].velocity);
    os << '\n';
  }
  if (truth != nullptr) {
    os << "truth\nseed " << truth->seed << "\ntheta " << truth->theta.size();
    for (int i = 0; i < truth->theta.size(); ++i) w.num(truth->theta[i]);
    os << "\nstates " << truth->states.size() << '\n';
    for (const auto& x : truth->states) {
      os << 's';
      w.pose(x.pose).vec(x.velocity);
      for (const auto& f : x.feet) w.vec(f);
      w.vec(x.accel_bias).vec(x.gyro_bias);
      os << '\n';
    }
  }
  os << "end\n";
  if (!os) throw Error(ErrorCode::kIo, "write failed");
}

ImportedLog read_log(std::istream& is) {
  Reader r(is);
  ImportedLog out;
  SensorLog& log = out.log;

  std::vector<std::string_view> f;
  if (!r.next(f) || f[0] != kMagic || f.size() != 2) r.fail("missing legcal-log header");
  if (r.to_u64(f[1]) != kLogFormatVersion) {
    throw Error(ErrorCode::kSchemaVersionMismatch,
                "log format version " + std::string(f[1]) + ", expected " +
                    std::to_string(kLogFormatVersion));
  }
  log.robot_hash = r.to_u64(r.expect("robot_hash", 1)[1], 16);
  log.dt = r.to_double(r.expect("dt", 1)[1]);
  if (!(log.dt > 0.0)) r.fail("dt must be positive");
  log.n_legs = static_cast<int>(r.to_u64(r.expect("legs", 1)[1]));
  if (log.n_legs < 1) r.fail("legs must be positive");
  const std::size_t steps = r.to_u64(r.expect("steps", 1)[1]);

  const std::size_t width = record_width(log.n_legs);
  log.imu.reserve(steps);
  log.legs.reserve(steps);
  log.mocap.reserve(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    const auto rec = r.expect("r", width - 1);
    std::size_t i = 1;
    ImuSample u;
    u.t = r.to_double(rec[i++]);
    u.accel = read_vec(r, rec, i);
    u.gyro = read_vec(r, rec, i);
    LegSample l(log.n_legs);
    for (int j = 0; j < log.n_legs; ++j) {
      l.alpha[j] = read_vec(r, rec, i);
      l.alpha_dot[j] = read_vec(r, rec, i);
      const std::uint64_t c = r.to_u64(rec[i++]);
      if (c > 1) r.fail("contact flag must be 0 or 1");
      l.contact[j] = static_cast<std::uint8_t>(c);
    }
    MocapSample m;
    m.pose = read_pose(r, rec, i);
    m.velocity = read_vec(r, rec, i);
    log.imu.push_back(u);
    log.legs.push_back(std::move(l));
    log.mocap.push_back(m);
  }

  if (!r.next(f)) r.fail("unexpected end of file, expected 'end'");
  if (f[0] == "truth") {
    TruthBundle t;
    t.seed = r.to_u64(r.expect("seed", 1)[1]);
    const auto th = r.expect("theta", Reader::kAny);
    if (th.size() < 2) r.fail("theta record without size");
    const std::size_t m = r.to_u64(th[1]);
    if (th.size() != m + 2) r.fail("theta record length mismatch");
    t.theta.resize(static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < m; ++i) t.theta[static_cast<Eigen::Index>(i)] = r.to_double(th[i + 2]);
    const std::size_t ns = r.to_u64(r.expect("states", 1)[1]);
    for (std::size_t k = 0; k < ns; ++k) {
      const auto s = r.expect("s", state_width(log.n_legs) - 1);
      std::size_t i = 1;
      ManifoldState x(log.n_legs);
      x.pose = read_pose(r, s, i);
      x.velocity = read_vec(r, s, i);
      for (auto& foot : x.feet) foot = read_vec(r, s, i);
      x.accel_bias = read_vec(r, s, i);
      x.gyro_bias = read_vec(r, s, i);
      t.states.push_back(std::move(x));
    }
    out.truth = std::move(t);
    if (!r.next(f)) r.fail("unexpected end of file, expected 'end'");
  }
  if (f[0] != "end" || f.size() != 1) r.fail("expected 'end'");
  return out;
}

void export_log(const std::string& path, const SensorLog& log, const TruthBundle* truth) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::kIo, "cannot open " + path + " for writing");
  write_log(os, log, truth);
}

ImportedLog import_log(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::kIo, "cannot open " + path);
  return read_log(is);
}

}  // namespace legcal
