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

// Forward-mode dual numbers. Dual<double, N> carries a value and an
// N-vector of first derivatives; Dual<Dual<double, N>, N> carries second
// derivatives as well. Branches in generic code must compare values via
// ad::value(), never the derivative parts.

#include <array>
#include <cmath>
#include <type_traits>

#include <Eigen/Core>

namespace legcal::ad {

template <typename T, int N>
struct Dual {
  T a{};
  std::array<T, N> v{};

  Dual() = default;

  template <typename S, std::enable_if_t<std::is_arithmetic_v<S>, int> = 0>
  Dual(S x) : a(static_cast<T>(x)) {}  // NOLINT(google-explicit-constructor)

  template <typename U = T, std::enable_if_t<!std::is_arithmetic_v<U>, int> = 0>
  explicit Dual(const U& x) : a(x) {}

  /// Seeds the k-th derivative slot with one.
  Dual(const T& x, int k) : a(x) { v[k] = T(1); }

  Dual& operator+=(const Dual& o) {
    a += o.a;
    for (int i = 0; i < N; ++i) v[i] += o.v[i];
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    a -= o.a;
    for (int i = 0; i < N; ++i) v[i] -= o.v[i];
    return *this;
  }
  Dual& operator*=(const Dual& o) { return *this = *this * o; }
  Dual& operator/=(const Dual& o) { return *this = *this / o; }

  friend Dual operator+(const Dual& x) { return x; }
  friend Dual operator-(const Dual& x) {
    Dual r;
    r.a = -x.a;
    for (int i = 0; i < N; ++i) r.v[i] = -x.v[i];
    return r;
  }
  friend Dual operator+(const Dual& x, const Dual& y) {
    Dual r;
    r.a = x.a + y.a;
    for (int i = 0; i < N; ++i) r.v[i] = x.v[i] + y.v[i];
    return r;
  }
  friend Dual operator-(const Dual& x, const Dual& y) {
    Dual r;
    r.a = x.a - y.a;
    for (int i = 0; i < N; ++i) r.v[i] = x.v[i] - y.v[i];
    return r;
  }
  friend Dual operator*(const Dual& x, const Dual& y) {
    Dual r;
    r.a = x.a * y.a;
    for (int i = 0; i < N; ++i) r.v[i] = x.a * y.v[i] + x.v[i] * y.a;
    return r;
  }
  friend Dual operator/(const Dual& x, const Dual& y) {
    Dual r;
    const T inv = T(1) / y.a;
    r.a = x.a * inv;
    for (int i = 0; i < N; ++i) r.v[i] = (x.v[i] - r.a * y.v[i]) * inv;
    return r;
  }

  template <typename S, std::enable_if_t<std::is_arithmetic_v<S>, int> = 0>
  friend Dual operator*(const Dual& x, S s) {
    Dual r;
    r.a = x.a * s;
    for (int i = 0; i < N; ++i) r.v[i] = x.v[i] * s;
    return r;
  }
  template <typename S, std::enable_if_t<std::is_arithmetic_v<S>, int> = 0>
  friend Dual operator*(S s, const Dual& x) {
    return x * s;
  }
  template <typename S, std::enable_if_t<std::is_arithmetic_v<S>, int> = 0>
  friend Dual operator/(const Dual& x, S s) {
    return x * (1.0 / static_cast<double>(s));
  }
  template <typename S, std::enable_if_t<std::is_arithmetic_v<S>, int> = 0>
  friend Dual operator+(const Dual& x, S s) {
    Dual r = x;
    r.a += s;
    return r;
  }
  template <typename S, std::enable_if_t<std::is_arithmetic_v<S>, int> = 0>
  friend Dual operator+(S s, const Dual& x) {
    return x + s;
  }
  template <typename S, std::enable_if_t<std::is_arithmetic_v<S>, int> = 0>
  friend Dual operator-(const Dual& x, S s) {
    Dual r = x;
    r.a -= s;
    return r;
  }
  template <typename S, std::enable_if_t<std::is_arithmetic_v<S>, int> = 0>
  friend Dual operator-(S s, const Dual& x) {
    return -x + s;
  }
  template <typename S, std::enable_if_t<std::is_arithmetic_v<S>, int> = 0>
  friend Dual operator/(S s, const Dual& x) {
    return Dual(s) / x;
  }
};

inline double value(double x) { return x; }
template <typename T, int N>
double value(const Dual<T, N>& x) {
  return value(x.a);
}

template <typename T, int N>
bool operator<(const Dual<T, N>& x, const Dual<T, N>& y) {
  return value(x) < value(y);
}
template <typename T, int N>
bool operator>(const Dual<T, N>& x, const Dual<T, N>& y) {
  return value(x) > value(y);
}
template <typename T, int N>
bool operator<=(const Dual<T, N>& x, const Dual<T, N>& y) {
  return value(x) <= value(y);
}
template <typename T, int N>
bool operator>=(const Dual<T, N>& x, const Dual<T, N>& y) {
  return value(x) >= value(y);
}
template <typename T, int N>
bool operator==(const Dual<T, N>& x, const Dual<T, N>& y) {
  return value(x) == value(y);
}
template <typename T, int N>
bool operator!=(const Dual<T, N>& x, const Dual<T, N>& y) {
  return value(x) != value(y);
}

// Chain rule helper: f(x) with f'(x) = d.
template <typename T, int N>
Dual<T, N> chain(const Dual<T, N>& x, const T& f, const T& d) {
  Dual<T, N> r;
  r.a = f;
  for (int i = 0; i < N; ++i) r.v[i] = d * x.v[i];
  return r;
}

template <typename T, int N>
Dual<T, N> sqrt(const Dual<T, N>& x) {
  using std::sqrt;
  const T s = sqrt(x.a);
  return chain(x, s, T(0.5) / s);
}
template <typename T, int N>
Dual<T, N> sin(const Dual<T, N>& x) {
  using std::cos;
  using std::sin;
  return chain(x, T(sin(x.a)), T(cos(x.a)));
}
template <typename T, int N>
Dual<T, N> cos(const Dual<T, N>& x) {
  using std::cos;
  using std::sin;
  return chain(x, T(cos(x.a)), T(-sin(x.a)));
}
template <typename T, int N>
Dual<T, N> exp(const Dual<T, N>& x) {
  using std::exp;
  const T e = exp(x.a);
  return chain(x, e, e);
}
template <typename T, int N>
Dual<T, N> log(const Dual<T, N>& x) {
  using std::log;
  return chain(x, T(log(x.a)), T(1) / x.a);
}
template <typename T, int N>
Dual<T, N> abs(const Dual<T, N>& x) {
  return value(x) < 0.0 ? -x : x;
}
template <typename T, int N>
Dual<T, N> atan2(const Dual<T, N>& y, const Dual<T, N>& x) {
  using std::atan2;
  Dual<T, N> r;
  r.a = atan2(y.a, x.a);
  const T inv = T(1) / (x.a * x.a + y.a * y.a);
  for (int i = 0; i < N; ++i) r.v[i] = (x.a * y.v[i] - y.a * x.v[i]) * inv;
  return r;
}

/// Makes an N-slot dual with derivative slot k active (k < 0: constant).
template <int N>
Dual<double, N> variable(double x, int k) {
  return k < 0 ? Dual<double, N>(x) : Dual<double, N>(x, k);
}

/// Second-order variable: the same slot is seeded in both nesting levels.
template <int N>
Dual<Dual<double, N>, N> variable2(double x, int k) {
  using Inner = Dual<double, N>;
  if (k < 0) return Dual<Dual<double, N>, N>(x);
  Dual<Dual<double, N>, N> r{Inner(x, k)};
  r.v[k] = Inner(1.0);
  return r;
}

}  // namespace legcal::ad

namespace Eigen {

template <typename T, int N>
struct NumTraits<legcal::ad::Dual<T, N>> : GenericNumTraits<legcal::ad::Dual<T, N>> {
  using Real = legcal::ad::Dual<T, N>;
  using NonInteger = Real;
  using Nested = Real;
  using Literal = Real;
  enum {
    IsComplex = 0,
    IsInteger = 0,
    IsSigned = 1,
    RequireInitialization = 1,
    ReadCost = 1,
    AddCost = 1,
    MulCost = 1
  };
  static Real epsilon() { return Real(std::numeric_limits<double>::epsilon()); }
  static Real dummy_precision() { return Real(1e-12); }
  static Real highest() { return Real(std::numeric_limits<double>::max()); }
  static Real lowest() { return Real(std::numeric_limits<double>::lowest()); }
  static int digits10() { return std::numeric_limits<double>::digits10; }
};

template <typename T, int N, typename BinaryOp>
struct ScalarBinaryOpTraits<legcal::ad::Dual<T, N>, double, BinaryOp> {
  using ReturnType = legcal::ad::Dual<T, N>;
};
template <typename T, int N, typename BinaryOp>
struct ScalarBinaryOpTraits<double, legcal::ad::Dual<T, N>, BinaryOp> {
  using ReturnType = legcal::ad::Dual<T, N>;
};

}  // namespace Eigen
