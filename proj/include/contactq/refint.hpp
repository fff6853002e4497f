#pragma once

// Reference integration and trajectory comparison. The fixed-step RK4 driver
// together with the coordinate formula for the contact flow serves as the
// independent check for trajectories produced by quadrature methods: it never
// touches the linear-solve or quadrature paths used elsewhere, so agreement
// between the two is meaningful evidence rather than a tautology.

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "contactq/fields.hpp"
#include "contactq/geometry.hpp"

namespace cq {

struct Trajectory {
  std::vector<double> times;
  std::vector<Eigen::VectorXd> states;
  std::string method;  // provenance tag: "rk4", "quadrature", "level-set", ...

  int size() const { return static_cast<int>(times.size()); }
};

using VectorFieldFn = std::function<Eigen::VectorXd(double t, const Eigen::VectorXd&)>;

struct Rk4Options {
  double step = 1e-3;
};

// Classical fourth-order Runge-Kutta with a fixed step; integrates backward
// when t1 < t0. Every accepted step is recorded.
Trajectory integrate_rk4(const VectorFieldFn& rhs, const Eigen::VectorXd& y0, double t0, double t1,
                         const Rk4Options& opt = {});

// RK4 applied to the contact Hamiltonian flow of the system. The right-hand
// side is the coordinate formula in terms of the reference Hamiltonian, which
// by conformal covariance is the contact field for every presentation.
Trajectory integrate_contact_rk4(const ContactSystem& sys, const Eigen::VectorXd& start, double t0,
                                 double t1, const Rk4Options& opt = {});

// Right-hand side of the contact flow in the reference chart, assembled
// directly from partial derivatives of the Hamiltonian:
//   x_i' = dH/dy_i,   y_i' = y_i dH/dz - dH/dx_i,   z' = H - sum_i y_i dH/dy_i.
VectorFieldFn reference_contact_rhs(int n, FieldPtr hamiltonian);

struct TrajectoryComparison {
  double max_abs = 0.0;    // sup-norm mismatch over the shared time range
  double at_time = 0.0;    // where the worst mismatch occurs
  double compared_span = 0.0;
  int samples = 0;
  bool resampled = false;  // true when cubic interpolation was needed
};

// Pointwise comparison on identical grids; otherwise both trajectories are
// resampled onto shared times in the overlap of their ranges (cubic
// interpolation in time, flagged in the result). Throws when the time ranges
// are disjoint.
TrajectoryComparison compare_trajectories(const Trajectory& a, const Trajectory& b,
                                          int samples = 201);

// State of a trajectory at time t by cubic interpolation of recorded samples.
Eigen::VectorXd interpolate_state(const Trajectory& traj, double t);

// Largest drift |f(state_t) - f(state_0)| along a trajectory; zero for a
// conserved quantity of the flow that produced it.
double max_deviation_along(const ScalarField& f, const Trajectory& traj);

}  // namespace cq
