#pragma once

// Axis-aligned boxes used as sampling domains for the statistical checks.
// All randomized verification draws points through sample() from a caller-
// provided engine, so a fixed seed reproduces every reported residual.

#include <Eigen/Dense>
#include <random>
#include <stdexcept>

namespace cq {

struct Box {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;

  Box() = default;
  Box(Eigen::VectorXd lo_, Eigen::VectorXd hi_) : lo(std::move(lo_)), hi(std::move(hi_)) {
    if (lo.size() != hi.size()) throw std::invalid_argument("Box: bound dimensions differ");
    for (Eigen::Index i = 0; i < lo.size(); ++i)
      if (!(lo[i] <= hi[i])) throw std::invalid_argument("Box: lower bound exceeds upper bound");
  }

  int dim() const { return static_cast<int>(lo.size()); }

  Eigen::VectorXd midpoint() const { return 0.5 * (lo + hi); }

  bool contains(const Eigen::VectorXd& p, double slack = 0.0) const {
    if (p.size() != lo.size()) return false;
    for (Eigen::Index i = 0; i < lo.size(); ++i)
      if (p[i] < lo[i] - slack || p[i] > hi[i] + slack) return false;
    return true;
  }

  Eigen::VectorXd sample(std::mt19937_64& rng) const {
    Eigen::VectorXd p(lo.size());
    for (Eigen::Index i = 0; i < lo.size(); ++i) {
      std::uniform_real_distribution<double> dist(lo[i], hi[i]);
      p[i] = dist(rng);
    }
    return p;
  }
};

}  // namespace cq
