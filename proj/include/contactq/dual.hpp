#pragma once

// Forward-mode dual numbers, nestable for higher derivatives.
//
// Dual<double> carries one directional derivative; Dual<Dual<double>> carries
// second-order information and so on. All elementary functions used by the
// expression grammar (and atan, needed by a compiled system family) are
// provided. Mixed partials are obtained by seeding different directions at
// different nesting levels.

#include <cmath>
#include <ostream>
#include <type_traits>

namespace cq {

template <class T>
struct Dual {
  T v{};  // value
  T d{};  // derivative along the seeded direction

  constexpr Dual() = default;
  constexpr Dual(T value) : v(value) {}
  constexpr Dual(T value, T deriv) : v(value), d(deriv) {}

  // promote a plain double through any nesting depth
  constexpr Dual(double value) requires(!std::is_same_v<T, double>) : v(value) {}
};

using D1 = Dual<double>;
using D2 = Dual<D1>;
using D3 = Dual<D2>;

// Innermost (plain double) value of an arbitrarily nested dual.
inline double scalar_value(double x) { return x; }
template <class T>
double scalar_value(const Dual<T>& x) { return scalar_value(x.v); }

// Largest absolute value over all derivative slots; used for quadrature
// error control so that derivative components converge along with the value.
inline double abs_max(double x) { return std::abs(x); }
template <class T>
double abs_max(const Dual<T>& x) { return std::max(abs_max(x.v), abs_max(x.d)); }

template <class T>
Dual<T> operator+(const Dual<T>& a, const Dual<T>& b) { return {a.v + b.v, a.d + b.d}; }
template <class T>
Dual<T> operator-(const Dual<T>& a, const Dual<T>& b) { return {a.v - b.v, a.d - b.d}; }
template <class T>
Dual<T> operator-(const Dual<T>& a) { return {-a.v, -a.d}; }
template <class T>
Dual<T> operator+(const Dual<T>& a) { return a; }
template <class T>
Dual<T> operator*(const Dual<T>& a, const Dual<T>& b) {
  return {a.v * b.v, a.d * b.v + a.v * b.d};
}
template <class T>
Dual<T> operator/(const Dual<T>& a, const Dual<T>& b) {
  T q = a.v / b.v;
  return {q, (a.d - q * b.d) / b.v};
}

// Mixed arithmetic with plain doubles (promoted as constants).
template <class T>
Dual<T> operator+(const Dual<T>& a, double b) { return {a.v + T(b), a.d}; }
template <class T>
Dual<T> operator+(double a, const Dual<T>& b) { return {T(a) + b.v, b.d}; }
template <class T>
Dual<T> operator-(const Dual<T>& a, double b) { return {a.v - T(b), a.d}; }
template <class T>
Dual<T> operator-(double a, const Dual<T>& b) { return {T(a) - b.v, -b.d}; }
template <class T>
Dual<T> operator*(const Dual<T>& a, double b) { return {a.v * T(b), a.d * T(b)}; }
template <class T>
Dual<T> operator*(double a, const Dual<T>& b) { return {T(a) * b.v, T(a) * b.d}; }
template <class T>
Dual<T> operator/(const Dual<T>& a, double b) { return {a.v / T(b), a.d / T(b)}; }
template <class T>
Dual<T> operator/(double a, const Dual<T>& b) { return Dual<T>(T(a)) / b; }

template <class T>
Dual<T>& operator+=(Dual<T>& a, const Dual<T>& b) { return a = a + b; }
template <class T>
Dual<T>& operator-=(Dual<T>& a, const Dual<T>& b) { return a = a - b; }
template <class T>
Dual<T>& operator*=(Dual<T>& a, const Dual<T>& b) { return a = a * b; }
template <class T>
Dual<T>& operator/=(Dual<T>& a, const Dual<T>& b) { return a = a / b; }

using std::abs;
using std::atan;
using std::cos;
using std::exp;
using std::log;
using std::sin;
using std::sqrt;

template <class T>
Dual<T> exp(const Dual<T>& x) {
  T e = exp(x.v);
  return {e, e * x.d};
}
template <class T>
Dual<T> log(const Dual<T>& x) { return {log(x.v), x.d / x.v}; }
template <class T>
Dual<T> sin(const Dual<T>& x) { return {sin(x.v), cos(x.v) * x.d}; }
template <class T>
Dual<T> cos(const Dual<T>& x) { return {cos(x.v), -sin(x.v) * x.d}; }
template <class T>
Dual<T> sqrt(const Dual<T>& x) {
  T r = sqrt(x.v);
  return {r, x.d / (2.0 * r)};
}
template <class T>
Dual<T> atan(const Dual<T>& x) { return {atan(x.v), x.d / (1.0 + x.v * x.v)}; }

// abs is smooth away from zero, which is the only place it is used
// (fixed-sign branch components).
template <class T>
Dual<T> abs(const Dual<T>& x) {
  return scalar_value(x.v) < 0.0 ? -x : x;
}

// Integer power by repeated multiplication; valid for negative bases.
inline double powi(double x, long n) {
  if (n < 0) return 1.0 / powi(x, -n);
  double r = 1.0, b = x;
  for (long k = n; k > 0; k >>= 1) {
    if (k & 1) r = r * b;
    b = b * b;
  }
  return r;
}
template <class T>
Dual<T> powi(const Dual<T>& x, long n) {
  if (n == 0) return Dual<T>(T(1.0));
  if (n < 0) return 1.0 / powi(x, -n);
  Dual<T> r{T(1.0)}, b = x;
  for (long k = n; k > 0; k >>= 1) {
    if (k & 1) r = r * b;
    b = b * b;
  }
  return r;
}

template <class T>
std::ostream& operator<<(std::ostream& os, const Dual<T>& x) {
  return os << "(" << x.v << " + eps*" << x.d << ")";
}

}  // namespace cq
