#pragma once

// Integration on and around the zero level of the Hamiltonian. Where the
// Reeb rate xi(H) does not vanish, the zero level is a flow-invariant
// symplectic submanifold, charted over (x, y) by solving H = 0 for z. A
// complete solution that restricts isotropically to the zero level yields
// parameter momenta phi_hat whose components all scale by the common
// logarithmic rate varsigma along the flow; picking a chart-sized subset psi
// of the components reduces the dynamics to one scalar quadrature
//   t = integral of d psi / F(psi),   F(x) = varsigma(psi^-1(x c)) x,
// inverted monotonically in time. Start points off the zero level run the
// quadrature pipeline against the reciprocal pair (eta/H, 1), and points
// deep inside the frozen-rate region xi(H) = 0 run it against the plain
// pair; the dispatcher classifies and routes accordingly.

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "contactq/box.hpp"
#include "contactq/fields.hpp"
#include "contactq/geometry.hpp"
#include "contactq/hje.hpp"
#include "contactq/reconstruct.hpp"
#include "contactq/refint.hpp"

namespace cq {

struct LevelChartConfig {
  double initial_z = 0.0;   // Newton start for the implicit solve
  int samples = 64;         // precondition scan over the chart box
  double rate_floor = 1e-6; // |dH/dz| must stay above this on the box
  std::uint64_t seed = 42;
};

// Chart (x, y) -> (x, y, zeta(x, y)) of the zero level, with zeta the scalar
// Newton root of H(x, y, .) = 0. Well defined because dH/dz is bounded away
// from zero on the box, which also makes the level set transversal to the
// Reeb direction.
class LevelSetChart {
 public:
  LevelSetChart(ContactSystem system, Box base_box, LevelChartConfig config = {});

  const ContactSystem& system() const { return system_; }
  const Box& base_box() const { return box_; }
  const LevelChartConfig& config() const { return config_; }

  // Root of H(x, y, .) = 0 for a 2n-dimensional (x, y) argument.
  double zeta(std::span<const double> xy) const;

  // Full phase point (x, y, zeta(x, y)).
  Eigen::VectorXd lift(std::span<const double> xy) const;

  // Exact gradient of zeta from the implicit function theorem.
  Eigen::VectorXd zeta_gradient(std::span<const double> xy) const;

  // Columns span the tangent of the level set: (2n + 1) x 2n.
  Eigen::MatrixXd tangent_basis(std::span<const double> xy) const;

  // Pullback of the reference form's differential to the chart, 2n x 2n;
  // full rank exactly where the level set is symplectic.
  Eigen::MatrixXd restricted_differential(std::span<const double> xy) const;

 private:
  ContactSystem system_;
  Box box_;
  LevelChartConfig config_;
};

LevelSetChart build_level_chart(const ContactSystem& system, const Box& box,
                                const LevelChartConfig& config = {});

struct RestrictionConfig {
  int samples = 60;
  double membership_tolerance = 1e-10;
  double isotropy_tolerance = 1e-10;
  std::uint64_t seed = 42;
};

struct RestrictionReport {
  double max_membership = 0.0;  // worst |H o Sigma| over the sampled sub-boxes
  double max_one_form = 0.0;    // worst |(sigma_lambda)* eta| component
  double max_symplectic = 0.0;  // worst |(sigma_lambda)* d eta| entry
};

// A complete solution together with sub-boxes of its base and parameter
// boxes on which the family lands in the zero level isotropically. Pinned
// axes (zero-width) of the sub-boxes are frozen; the free axes are the
// coordinates of the restricted base and parameter space.
class RestrictedSolution {
 public:
  RestrictedSolution(CompleteSolution parent, LevelSetChart chart, Box base_sub, Box param_sub,
                     RestrictionConfig config = {});

  const CompleteSolution& parent() const { return parent_; }
  const LevelSetChart& chart() const { return chart_; }
  const ContactSystem& system() const { return chart_.system(); }
  const Box& base_box() const { return base_sub_; }
  const Box& param_box() const { return param_sub_; }
  const RestrictionReport& report() const { return report_; }
  const RestrictionConfig& config() const { return config_; }
  const std::vector<int>& free_base_axes() const { return free_base_; }
  const std::vector<int>& free_param_axes() const { return free_param_; }

  // Momenta over the free parameter directions:
  //   <phi_hat(p, lambda), w> = -(Sigma* eta)((0, w)),
  // paired against the reference form.
  Eigen::VectorXd phi_hat(std::span<const double> base, std::span<const double> lambda) const;

  // Jacobian of phi_hat over the free base directions (rows: components,
  // columns: free base axes), by forward differentiation.
  Eigen::MatrixXd phi_hat_jacobian(std::span<const double> base,
                                   std::span<const double> lambda) const;

 private:
  CompleteSolution parent_;
  LevelSetChart chart_;
  Box base_sub_;
  Box param_sub_;
  RestrictionConfig config_;
  RestrictionReport report_;
  std::vector<int> free_base_;
  std::vector<int> free_param_;
};

RestrictedSolution restrict_solution(const CompleteSolution& solution, const LevelSetChart& chart,
                                     const Box& base_sub, const Box& param_sub,
                                     const RestrictionConfig& config = {});

using PhiHatMap =
    std::function<Eigen::VectorXd(std::span<const double>, std::span<const double>)>;

// Verifies at sampled points that phi_hat immerses the restricted base and
// packages it as a callable; throws on rank deficiency.
PhiHatMap build_phi_hat(const RestrictedSolution& restricted);

// xi(H) at Sigma(p, lambda): the common logarithmic rate of the momenta.
double varsigma(const RestrictedSolution& restricted, std::span<const double> base,
                std::span<const double> lambda);

struct ZeroLevelOptions {
  double quadrature_tolerance = 1e-12;
  int quadrature_max_depth = 24;
  int max_iterations = 60;
  double time_tolerance = 1e-11;   // |t(psi) - t| acceptance for the inversion
  double stationary_floor = 1e-13; // |F| below which the start is an equilibrium
};

// Integrates the restricted flow by the scalar quadrature described above.
// The chart psi is chosen greedily from the phi_hat components (largest
// start value whose gradient grows the rank); a start with phi_hat = 0 is a
// fixed point and returns the constant trajectory. Throws when F changes
// sign or vanishes inside the inversion range.
Trajectory integrate_on_zero_level(const RestrictedSolution& restricted,
                                   std::span<const double> lambda,
                                   std::span<const double> start_base,
                                   const std::vector<double>& times,
                                   const ZeroLevelOptions& opt = {});

enum class FlowRegion {
  ZeroLevel,     // |H| below tolerance, xi(H) clearly nonzero
  NonzeroLevel,  // |H| clearly nonzero
  FrozenRate,    // |H| below tolerance, xi(H) = 0 on a whole neighborhood
};

struct RegionOptions {
  double level_tolerance = 1e-9;
  double rate_tolerance = 1e-9;
  double ambiguity_factor = 10.0;  // the band [tol, factor*tol) is reported, not guessed
  double neighborhood_radius = 1e-3;
  int neighborhood_samples = 32;
  std::uint64_t seed = 42;
};

// Classifies a start point by |H| and |xi(H)|; values inside the ambiguity
// band throw, and a vanishing rate whose neighborhood still carries nonzero
// rates is a region boundary, rejected with a diagnostic.
FlowRegion classify_start(const ContactSystem& system, std::span<const double> state,
                          const RegionOptions& opt = {});

struct SplitOptions {
  RegionOptions region;
  TablesConfig tables;         // reconstruct branches
  ReconstructOptions solve;
  ZeroLevelOptions zero_level; // zero-level branch
  InversionOptions inversion;  // locating (base, lambda) from the phase point
};

struct SplitResult {
  FlowRegion region = FlowRegion::NonzeroLevel;
  Trajectory trajectory;
};

// Routes a start point to the matching integrator: the zero level runs the
// scalar quadrature against the declared restriction (which the caller must
// supply), the nonzero region runs the reciprocal-Hamiltonian pipeline, and
// the frozen-rate region runs the plain quadrature pipeline. The base and
// parameter values are recovered from the phase point by inverting the
// family.
SplitResult split_and_integrate(const ContactSystem& system, const CompleteSolution& solution,
                                const std::optional<RestrictedSolution>& restriction,
                                std::span<const double> start_state,
                                const std::vector<double>& times, const SplitOptions& opt = {});

}  // namespace cq
