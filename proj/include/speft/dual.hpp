// Copyright 2026 The SPEFT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <limits>
#include <ostream>

#include <Eigen/Core>

namespace speft {

/// First-order dual number v + d*eps with eps^2 = 0.
///
/// Running the reverse-mode tape with Dual<double> scalars, seeded with a
/// direction in the tangent part of the parameters, gives the directional
/// derivative of the gradient in the tangent part of every gradient: H*v.
template <typename T>
struct Dual {
  T v{};
  T d{};

  constexpr Dual() = default;
  constexpr Dual(T value) : v(value) {}  // NOLINT: implicit from scalar constants
  constexpr Dual(T value, T tangent) : v(value), d(tangent) {}

  Dual& operator+=(const Dual& o) { v += o.v; d += o.d; return *this; }
  Dual& operator-=(const Dual& o) { v -= o.v; d -= o.d; return *this; }
  Dual& operator*=(const Dual& o) { d = d * o.v + v * o.d; v *= o.v; return *this; }
  Dual& operator/=(const Dual& o) {
    d = (d * o.v - v * o.d) / (o.v * o.v);
    v /= o.v;
    return *this;
  }
};

template <typename T> Dual<T> operator+(Dual<T> a, const Dual<T>& b) { return a += b; }
template <typename T> Dual<T> operator-(Dual<T> a, const Dual<T>& b) { return a -= b; }
template <typename T> Dual<T> operator*(Dual<T> a, const Dual<T>& b) { return a *= b; }
template <typename T> Dual<T> operator/(Dual<T> a, const Dual<T>& b) { return a /= b; }
template <typename T> Dual<T> operator-(const Dual<T>& a) { return {-a.v, -a.d}; }
template <typename T> Dual<T> operator+(const Dual<T>& a) { return a; }

template <typename T> bool operator<(const Dual<T>& a, const Dual<T>& b) { return a.v < b.v; }
template <typename T> bool operator>(const Dual<T>& a, const Dual<T>& b) { return a.v > b.v; }
template <typename T> bool operator<=(const Dual<T>& a, const Dual<T>& b) { return a.v <= b.v; }
template <typename T> bool operator>=(const Dual<T>& a, const Dual<T>& b) { return a.v >= b.v; }
template <typename T> bool operator==(const Dual<T>& a, const Dual<T>& b) { return a.v == b.v && a.d == b.d; }
template <typename T> bool operator!=(const Dual<T>& a, const Dual<T>& b) { return !(a == b); }

template <typename T> Dual<T> exp(const Dual<T>& a) {
  const T e = std::exp(a.v);
  return {e, e * a.d};
}
template <typename T> Dual<T> log(const Dual<T>& a) { return {std::log(a.v), a.d / a.v}; }
template <typename T> Dual<T> sqrt(const Dual<T>& a) {
  const T s = std::sqrt(a.v);
  return {s, a.d / (T(2) * s)};
}
template <typename T> Dual<T> tanh(const Dual<T>& a) {
  const T t = std::tanh(a.v);
  return {t, (T(1) - t * t) * a.d};
}
template <typename T> Dual<T> abs(const Dual<T>& a) { return a.v < T(0) ? -a : a; }
template <typename T> bool isfinite(const Dual<T>& a) { return std::isfinite(a.v) && std::isfinite(a.d); }

template <typename T>
std::ostream& operator<<(std::ostream& os, const Dual<T>& a) {
  return os << a.v << "+" << a.d << "e";
}

/// Primal part of a scalar; identity for plain floating point.
inline double primal(double x) { return x; }
inline float primal(float x) { return x; }
template <typename T> T primal(const Dual<T>& x) { return x.v; }

inline bool finite(double x) { return std::isfinite(x); }
inline bool finite(float x) { return std::isfinite(x); }
template <typename T> bool finite(const Dual<T>& x) { return isfinite(x); }

}  // namespace speft

namespace Eigen {

template <typename T>
struct NumTraits<speft::Dual<T>> : GenericNumTraits<speft::Dual<T>> {
  using Real = speft::Dual<T>;
  using NonInteger = speft::Dual<T>;
  using Nested = speft::Dual<T>;
  using Literal = speft::Dual<T>;
  enum {
    IsComplex = 0,
    IsInteger = 0,
    IsSigned = 1,
    RequireInitialization = 1,
    ReadCost = 2,
    AddCost = 2,
    MulCost = 4
  };
  static inline Real epsilon() { return Real(std::numeric_limits<T>::epsilon()); }
  static inline Real dummy_precision() { return Real(NumTraits<T>::dummy_precision()); }
  static inline Real highest() { return Real(std::numeric_limits<T>::max()); }
  static inline Real lowest() { return Real(std::numeric_limits<T>::lowest()); }
  static inline int digits10() { return NumTraits<T>::digits10(); }
};

}  // namespace Eigen
