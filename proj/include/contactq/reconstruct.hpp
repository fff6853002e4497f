#pragma once

// Integration by quadratures. For a pseudo-isotropic family Sigma the pulled
// back form sigma_lambda* eta' is closed, so a potential W can be built as a
// line integral from a fixed base point; the pair (phi, W) with
//   phi_j = dW/dlambda_j - (Sigma* eta')((0, e_j)),   h = H' o sigma_lambda
// then turns the flow into the algebraic system
//   phi_lambda(p(t)) = t dh + phi_lambda(p(0)),  W_lambda(p(t)) = t h + W_0,
// which is solved pointwise in time by damped least squares. The rescaled
// variant runs the same pipeline against (g eta, g H) for a factor g that
// freezes the Reeb rate of the pair.

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "contactq/box.hpp"
#include "contactq/fields.hpp"
#include "contactq/geometry.hpp"
#include "contactq/hje.hpp"
#include "contactq/refint.hpp"

namespace cq {

struct TablesConfig {
  std::optional<Eigen::VectorXd> base_point;  // defaults to the base-box midpoint
  double quadrature_tolerance = 1e-10;
  int quadrature_max_depth = 20;       // subdivision cap 2^20 intervals
  int precondition_samples = 25;       // grid for closedness/rate/constancy checks
  double isotropy_tolerance = 1e-8;
  double constancy_tolerance = 1e-8;
  double path_check_tolerance = 5e-8;  // two-path quadrature guard
  std::uint64_t seed = 42;
};

// Quadrature-built data of one family against one (effective) contact pair.
// Built in stages: the potential W first (with the closedness precondition
// and the two-path guard), then the momentum map phi, then the frequency h.
class ReconstructionTables {
 public:
  ReconstructionTables(CompleteSolution solution, ContactSystem system, TablesConfig config);

  const CompleteSolution& solution() const { return solution_; }
  const ContactSystem& system() const { return system_; }
  const Eigen::VectorXd& base_point() const { return p0_; }
  double quadrature_tolerance() const { return config_.quadrature_tolerance; }
  const TablesConfig& config() const { return config_; }

  bool w_ready() const { return w_ready_; }
  bool phi_ready() const { return phi_ready_; }
  bool h_ready() const { return h_ready_; }

  // Line-integral potential of sigma_lambda* eta' from the base point.
  double W(std::span<const double> base, std::span<const double> lambda) const;

  // Directional derivative of W along a (base, lambda) direction, computed by
  // differentiating the integrand under the integral sign.
  double W_directional(std::span<const double> base, std::span<const double> lambda,
                       std::span<const double> direction) const;

  // |W via straight segment - W via the axis-by-axis staircase path|; a
  // nonzero value beyond quadrature error witnesses a non-closed pull-back.
  double two_path_defect(std::span<const double> base, std::span<const double> lambda) const;

  // Covector of parameter momenta at (p, lambda).
  Eigen::VectorXd phi(std::span<const double> base, std::span<const double> lambda) const;

  // Common value of H' o sigma_lambda, and its exact lambda-gradient.
  double h(std::span<const double> lambda) const;
  Eigen::VectorXd dh(std::span<const double> lambda) const;

 private:
  friend ReconstructionTables build_W(const CompleteSolution&, const ContactSystem&,
                                      const TablesConfig&);
  friend void build_phi(ReconstructionTables&);
  friend void build_h(ReconstructionTables&);

  void require(bool ready, const char* what) const;

  CompleteSolution solution_;
  ContactSystem system_;
  TablesConfig config_;
  Eigen::VectorXd p0_;
  bool w_ready_ = false;
  bool phi_ready_ = false;
  bool h_ready_ = false;
};

// Stage one: verifies that the family pulls the effective form back to a
// closed one-form on the sampled boxes (pseudo-isotropy for the effective
// pair) and that the two-path quadratures agree, then enables W.
ReconstructionTables build_W(const CompleteSolution& solution, const ContactSystem& system,
                             const TablesConfig& config = {});

// Stage two: enables the parameter momenta phi (requires W).
void build_phi(ReconstructionTables& tables);

// Stage three: verifies that the effective Reeb rate vanishes and that
// H' o sigma_lambda is constant on the base grid, then enables h and dh.
void build_h(ReconstructionTables& tables);

// Jacobian of (phi_lambda, W_lambda): k+1 rows over the base directions,
// every entry from quadrature differentiation; its rank equals dim N for a
// pseudo-isotropic family.
Eigen::MatrixXd immersion_jacobian(const ReconstructionTables& tables,
                                   std::span<const double> lambda,
                                   std::span<const double> base);

int immersion_rank(const ReconstructionTables& tables, std::span<const double> lambda,
                   std::span<const double> base);

// |< (phi, W)* eta_contact + Sigma* eta', v >| at (base, lambda) for a
// (base, lambda) tangent v, where eta_contact is the canonical contact form
// on T*Lambda x R. Zero identically: (phi, W) reverses the contact pairings.
double antimorphism_residual(const ReconstructionTables& tables, std::span<const double> base,
                             std::span<const double> lambda, std::span<const double> tangent);

struct ReconstructOptions {
  double residual_accept = 1e-9;
  int max_iterations = 80;
  int substeps_on_failure = 8;
};

// Solves the algebraic system on the supplied time grid (time zero at the
// start point), warm-starting each instant from the previous one and
// subdividing the time step on non-convergence. Output states are the phase
// points Sigma(p(t), lambda).
Trajectory reconstruct_trajectory(const ReconstructionTables& tables,
                                  std::span<const double> lambda,
                                  std::span<const double> start_base,
                                  const std::vector<double>& times,
                                  const ReconstructOptions& opt = {});

enum class RescaleKind {
  ExplicitFactor,         // supplied g, checked against the rate equation
  ReciprocalHamiltonian,  // g = 1/H, defined where H does not vanish
};

struct RescaleMode {
  RescaleKind kind = RescaleKind::ExplicitFactor;
  FieldPtr factor;

  static RescaleMode explicit_factor(FieldPtr g);
  static RescaleMode reciprocal();
};

// Full pipeline against the effective pair (g eta, g H): validates the mode
// precondition on sampled points, builds the tables, and reconstructs. The
// result is a trajectory of the original contact field.
Trajectory reconstruct_rescaled(const ContactSystem& system, const CompleteSolution& solution,
                                const RescaleMode& mode, std::span<const double> lambda,
                                std::span<const double> start_base,
                                const std::vector<double>& times, const TablesConfig& config = {},
                                const ReconstructOptions& opt = {});

}  // namespace cq
