#include "contactq/refint.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "contactq/linalg.hpp"

namespace cq {

Trajectory integrate_rk4(const VectorFieldFn& rhs, const Eigen::VectorXd& y0, double t0, double t1,
                         const Rk4Options& opt) {
  if (!(opt.step > 0.0)) throw std::invalid_argument("integrate_rk4: step must be positive");
  const double span = t1 - t0;
  const long steps = std::max(1L, static_cast<long>(std::ceil(std::abs(span) / opt.step)));
  const double h = span / static_cast<double>(steps);

  Trajectory traj;
  traj.method = "rk4";
  traj.times.reserve(static_cast<std::size_t>(steps) + 1);
  traj.states.reserve(static_cast<std::size_t>(steps) + 1);
  double t = t0;
  Eigen::VectorXd y = y0;
  traj.times.push_back(t);
  traj.states.push_back(y);
  for (long k = 0; k < steps; ++k) {
    const Eigen::VectorXd k1 = rhs(t, y);
    const Eigen::VectorXd k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1);
    const Eigen::VectorXd k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2);
    const Eigen::VectorXd k4 = rhs(t + h, y + h * k3);
    y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    t = t0 + static_cast<double>(k + 1) * h;
    traj.times.push_back(t);
    traj.states.push_back(y);
  }
  return traj;
}

VectorFieldFn reference_contact_rhs(int n, FieldPtr hamiltonian) {
  if (hamiltonian->arity() != 2 * n + 1)
    throw std::invalid_argument("reference_contact_rhs: Hamiltonian arity must be 2n+1");
  return [n, H = std::move(hamiltonian)](double, const Eigen::VectorXd& p) {
    const auto grad = field_gradient(*H, as_span(p));
    const double value = H->value(as_span(p));
    Eigen::VectorXd rhs(2 * n + 1);
    double pairing = 0.0;
    for (int i = 0; i < n; ++i) {
      const double dHdy = grad[static_cast<std::size_t>(n + i)];
      rhs[i] = dHdy;
      rhs[n + i] = p[n + i] * grad[static_cast<std::size_t>(2 * n)] - grad[static_cast<std::size_t>(i)];
      pairing += p[n + i] * dHdy;
    }
    rhs[2 * n] = value - pairing;
    return rhs;
  };
}

Trajectory integrate_contact_rk4(const ContactSystem& sys, const Eigen::VectorXd& start, double t0,
                                 double t1, const Rk4Options& opt) {
  return integrate_rk4(reference_contact_rhs(sys.n, sys.hamiltonian), start, t0, t1, opt);
}

Eigen::VectorXd interpolate_state(const Trajectory& traj, double t) {
  const int m = traj.size();
  if (m == 0) throw std::invalid_argument("interpolate_state: empty trajectory");
  if (m == 1) return traj.states[0];

  const bool increasing = traj.times.front() <= traj.times.back();
  // locate the interval [i, i+1] containing t in trajectory ordering
  int lo = 0, hi = m - 1;
  while (hi - lo > 1) {
    const int mid = (lo + hi) / 2;
    const bool left = increasing ? (t < traj.times[static_cast<std::size_t>(mid)])
                                 : (t > traj.times[static_cast<std::size_t>(mid)]);
    (left ? hi : lo) = mid;
  }

  // cubic Lagrange interpolation on up to four surrounding samples
  const int first = std::clamp(lo - 1, 0, std::max(0, m - 4));
  const int count = std::min(4, m);
  Eigen::VectorXd result = Eigen::VectorXd::Zero(traj.states[0].size());
  for (int i = 0; i < count; ++i) {
    double weight = 1.0;
    const double ti = traj.times[static_cast<std::size_t>(first + i)];
    for (int j = 0; j < count; ++j) {
      if (j == i) continue;
      const double tj = traj.times[static_cast<std::size_t>(first + j)];
      weight *= (t - tj) / (ti - tj);
    }
    result += weight * traj.states[static_cast<std::size_t>(first + i)];
  }
  return result;
}

TrajectoryComparison compare_trajectories(const Trajectory& a, const Trajectory& b, int samples) {
  TrajectoryComparison out;
  if (a.size() == 0 || b.size() == 0 || samples < 2)
    throw std::invalid_argument("compare_trajectories: need nonempty trajectories");

  if (a.times == b.times) {
    out.samples = a.size();
    out.compared_span = std::abs(a.times.back() - a.times.front());
    for (int k = 0; k < a.size(); ++k) {
      const double err = (a.states[static_cast<std::size_t>(k)] -
                          b.states[static_cast<std::size_t>(k)]).lpNorm<Eigen::Infinity>();
      if (err > out.max_abs) {
        out.max_abs = err;
        out.at_time = a.times[static_cast<std::size_t>(k)];
      }
    }
    return out;
  }

  const auto range = [](const Trajectory& tr) {
    return std::pair<double, double>(std::min(tr.times.front(), tr.times.back()),
                                     std::max(tr.times.front(), tr.times.back()));
  };
  const auto [a_lo, a_hi] = range(a);
  const auto [b_lo, b_hi] = range(b);
  const double lo = std::max(a_lo, b_lo);
  const double hi = std::min(a_hi, b_hi);
  if (!(hi >= lo)) throw std::invalid_argument("compare_trajectories: disjoint time ranges");

  out.resampled = true;
  out.compared_span = hi - lo;
  out.samples = samples;
  out.at_time = lo;
  for (int k = 0; k < samples; ++k) {
    const double t = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(samples - 1);
    const Eigen::VectorXd pa = interpolate_state(a, t);
    const Eigen::VectorXd pb = interpolate_state(b, t);
    const double err = (pa - pb).lpNorm<Eigen::Infinity>();
    if (err > out.max_abs) {
      out.max_abs = err;
      out.at_time = t;
    }
  }
  return out;
}

double max_deviation_along(const ScalarField& f, const Trajectory& traj) {
  if (traj.size() == 0) return 0.0;
  const double base = f.value(as_span(traj.states[0]));
  double worst = 0.0;
  for (const auto& state : traj.states)
    worst = std::max(worst, std::abs(f.value(as_span(state)) - base));
  return worst;
}

}  // namespace cq
