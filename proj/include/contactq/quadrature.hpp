#pragma once

// Adaptive Simpson quadrature, templated on the value type so an integrand
// may carry dual numbers. Derivatives of an integral with respect to
// parameters (or with respect to its endpoints, after reparametrizing the
// path to a fixed [0,1] interval) are then obtained by seeding the integrand
// and integrating once; the acceptance test bounds the error of every dual
// slot, not just the value.

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

#include "contactq/dual.hpp"

namespace cq {

class QuadratureError : public std::runtime_error {
 public:
  explicit QuadratureError(const std::string& what) : std::runtime_error(what) {}
};

struct QuadratureOptions {
  double tol = 1e-10;
  int max_depth = 24;  // up to 2^24 subintervals before giving up
};

namespace detail {

template <class T, class F>
T simpson_refine(F& f, double a, double m, double b, const T& fa, const T& fm, const T& fb,
                 const T& whole, double tol, int depth, const QuadratureOptions& opt,
                 long& evaluations) {
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const T fl = f(lm);
  const T fr = f(rm);
  evaluations += 2;
  const T left = ((m - a) / 6.0) * (fa + 4.0 * fl + fm);
  const T right = ((b - m) / 6.0) * (fm + 4.0 * fr + fb);
  const T delta = left + right - whole;
  if (abs_max(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  if (depth >= opt.max_depth)
    throw QuadratureError("adaptive quadrature failed to reach tolerance " +
                          std::to_string(opt.tol) + " on [" + std::to_string(a) + ", " +
                          std::to_string(b) + "]");
  return simpson_refine(f, a, lm, m, fa, fl, fm, left, 0.5 * tol, depth + 1, opt, evaluations) +
         simpson_refine(f, m, rm, b, fm, fr, fb, right, 0.5 * tol, depth + 1, opt, evaluations);
}

}  // namespace detail

// Integrates f over [a, b]; the result type is whatever f returns (double or
// a dual type). Orientation follows the endpoints: a > b gives the negative.
template <class F>
auto integrate_adaptive(F&& f, double a, double b, const QuadratureOptions& opt = {},
                        long* evaluation_count = nullptr)
    -> decltype(f(double(0))) {
  using T = decltype(f(double(0)));
  if (a == b) return T{};
  long evaluations = 3;
  const double m = 0.5 * (a + b);
  const T fa = f(a);
  const T fm = f(m);
  const T fb = f(b);
  const T whole = ((b - a) / 6.0) * (fa + 4.0 * fm + fb);
  const T result =
      detail::simpson_refine(f, a, m, b, fa, fm, fb, whole, opt.tol, 0, opt, evaluations);
  if (evaluation_count) *evaluation_count = evaluations;
  return result;
}

}  // namespace cq
