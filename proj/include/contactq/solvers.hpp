#pragma once

// Root finders used throughout the toolkit: a damped scalar Newton, its
// dual-number continuation (for implicitly defined fields), a damped vector
// Newton for square systems, and a damped Gauss-Newton for the small
// nonlinear least-squares problems in trajectory reconstruction.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>

#include "contactq/dual.hpp"
#include "contactq/linalg.hpp"

namespace cq {

class ConvergenceError : public std::runtime_error {
 public:
  explicit ConvergenceError(const std::string& what) : std::runtime_error(what) {}
};

struct NewtonOptions {
  int max_iterations = 60;
  int max_halvings = 40;
  double step_tol = 1e-13;
  double residual_tol = 1e-12;
};

// Damped Newton for a scalar root. The callable must be evaluatable at D1
// (derivative by seeding) and at double (damping line search).
template <class F>
double newton_scalar(F&& f, double x0, const NewtonOptions& opt = {},
                     const std::string& context = "newton_scalar") {
  double x = x0;
  double r = f(x);
  for (int it = 0; it < opt.max_iterations; ++it) {
    if (std::abs(r) <= opt.residual_tol) return x;
    const D1 jet = f(D1(x, 1.0));
    if (jet.d == 0.0) throw ConvergenceError(context + ": derivative vanished at iterate");
    double step = -jet.v / jet.d;
    double x_new = x + step;
    double r_new = f(x_new);
    int halvings = 0;
    while (!(std::abs(r_new) < std::abs(r)) && halvings < opt.max_halvings) {
      step *= 0.5;
      x_new = x + step;
      r_new = f(x_new);
      ++halvings;
    }
    if (!(std::abs(r_new) < std::abs(r)))
      throw ConvergenceError(context + ": damping failed to reduce the residual");
    const bool small_step = std::abs(step) <= opt.step_tol * (1.0 + std::abs(x));
    x = x_new;
    r = r_new;
    if (small_step && std::abs(r) <= std::sqrt(opt.residual_tol)) return x;
  }
  if (std::abs(r) <= opt.residual_tol) return x;
  throw ConvergenceError(context + ": no convergence after " +
                         std::to_string(opt.max_iterations) + " iterations (residual " +
                         std::to_string(r) + ")");
}

// Propagates dual components through an implicit scalar root. Given a
// converged double root x* of f and the derivative f'(x*), the fixed-point
// sweep x <- x - f(x)/f'(x*) in dual arithmetic is a contraction whose factor
// at the root is O(residual), so a few sweeps reproduce every dual slot of
// the exact root to machine precision without needing f one level deeper.
template <class T, class F>
T implicit_dual_root(F&& f, double x_star, double dfdx_star, int sweeps = 4) {
  if (dfdx_star == 0.0)
    throw ConvergenceError("implicit_dual_root: vanishing derivative at the root");
  T x = T(x_star);
  for (int k = 0; k < sweeps; ++k) x = x - f(x) / dfdx_star;
  return x;
}

struct VectorNewtonResult {
  Eigen::VectorXd x;
  double residual_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Damped Newton for square systems; residual and Jacobian are supplied as
// callables (the Jacobian typically via forward-mode seeding of a field).
inline VectorNewtonResult newton_vector(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& residual,
    const std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>& jacobian,
    const Eigen::VectorXd& x0, const NewtonOptions& opt = {},
    const std::string& context = "newton_vector") {
  VectorNewtonResult out;
  out.x = x0;
  Eigen::VectorXd r = residual(out.x);
  for (int it = 0; it < opt.max_iterations; ++it) {
    out.iterations = it;
    out.residual_norm = r.norm();
    if (out.residual_norm <= opt.residual_tol) {
      out.converged = true;
      return out;
    }
    const Eigen::MatrixXd J = jacobian(out.x);
    Eigen::VectorXd step = solve_linear(J, -r, context);
    double scale = 1.0;
    Eigen::VectorXd x_new = out.x + step;
    Eigen::VectorXd r_new = residual(x_new);
    int halvings = 0;
    while (!(r_new.norm() < r.norm()) && halvings < opt.max_halvings) {
      scale *= 0.5;
      x_new = out.x + scale * step;
      r_new = residual(x_new);
      ++halvings;
    }
    if (!(r_new.norm() < r.norm())) break;
    const bool small_step = (scale * step).norm() <= opt.step_tol * (1.0 + out.x.norm());
    out.x = x_new;
    r = r_new;
    if (small_step && r.norm() <= std::sqrt(opt.residual_tol)) {
      out.iterations = it + 1;
      out.residual_norm = r.norm();
      out.converged = true;
      return out;
    }
  }
  out.residual_norm = r.norm();
  out.converged = out.residual_norm <= opt.residual_tol;
  return out;
}

struct GaussNewtonOptions {
  int max_iterations = 80;
  int max_halvings = 30;
  double step_tol = 1e-14;
  double residual_accept = 1e-9;
};

struct GaussNewtonResult {
  Eigen::VectorXd x;
  double residual_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Damped Gauss-Newton for small dense least-squares problems. Steps solve
// the linearized normal equations through an SVD, halving until the residual
// norm decreases.
inline GaussNewtonResult gauss_newton(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& residual,
    const std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>& jacobian,
    const Eigen::VectorXd& x0, const GaussNewtonOptions& opt = {}) {
  GaussNewtonResult out;
  out.x = x0;
  Eigen::VectorXd r = residual(out.x);
  for (int it = 0; it < opt.max_iterations; ++it) {
    out.iterations = it;
    out.residual_norm = r.norm();
    if (out.residual_norm <= opt.residual_accept) {
      out.converged = true;
      return out;
    }
    const Eigen::MatrixXd J = jacobian(out.x);
    const Eigen::VectorXd step = solve_least_squares(J, -r);
    if (step.norm() <= opt.step_tol * (1.0 + out.x.norm())) break;
    double scale = 1.0;
    Eigen::VectorXd x_new = out.x + step;
    Eigen::VectorXd r_new = residual(x_new);
    int halvings = 0;
    while (!(r_new.norm() < r.norm()) && halvings < opt.max_halvings) {
      scale *= 0.5;
      x_new = out.x + scale * step;
      r_new = residual(x_new);
      ++halvings;
    }
    if (!(r_new.norm() < r.norm())) break;
    out.x = x_new;
    r = r_new;
  }
  out.residual_norm = r.norm();
  out.converged = out.residual_norm <= opt.residual_accept;
  return out;
}

}  // namespace cq
