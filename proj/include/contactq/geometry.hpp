#pragma once

// Contact structures on R^(2n+1) in a single global chart with coordinates
// ordered (x_1..x_n, y_1..y_n, z). The reference contact form is
//
//   eta = sum_i y_i dx^i + dz,
//
// whose Reeb field is the unit z-direction. A system consists of a reference
// Hamiltonian H together with an optional conformal factor g > 0; the system
// then represents the effective pair (eta' = g*eta, H' = g*H), which has the
// same contact Hamiltonian field as (eta, H). In the reference presentation
// (g identically 1) the field is evaluated by the coordinate formula; for a
// general factor everything is assembled pointwise from the coefficient
// fields by forward-mode differentiation and small dense solves.

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "contactq/fields.hpp"

namespace cq {

struct ContactSystem {
  int n = 0;                    // dim M = 2n + 1
  FieldPtr hamiltonian;         // reference Hamiltonian H, arity 2n + 1
  FieldPtr conformal_factor;    // g; the represented pair is (g*eta, g*H)
  FieldPtr effective_hamiltonian;           // g*H (aliases H in the reference case)
  std::vector<FieldPtr> form_coefficients;  // covector components of g*eta
  bool reference_presentation = true;       // g is the constant 1

  int dim() const { return 2 * n + 1; }

  // Reference presentation: form eta, Hamiltonian H (g = 1).
  static ContactSystem darboux(int n, FieldPtr hamiltonian);

  // Rescaled presentation (g*eta, g*H) of the same dynamics.
  static ContactSystem scaled(int n, FieldPtr hamiltonian, FieldPtr factor);

  // The presentation with g = 1/H, i.e. (eta/H, 1); defined away from the
  // zero level of H. Its contact Hamiltonian field is the Reeb field of
  // eta/H, which is one of the rescalings the quadrature pipeline relies on.
  static ContactSystem reciprocal_rescaling(int n, FieldPtr hamiltonian);
};

// Covector of the reference form at p: (y_1..y_n, 0..0, 1).
Eigen::VectorXd reference_form_at(int n, std::span<const double> p);

// Constant skew matrix A0 of the reference form's exterior derivative, in the
// convention (d eta)(u, v) = u^T A0 v shared by every routine below.
Eigen::MatrixXd reference_form_differential(int n);

// Covector of the effective form at p: eta'_p = sum_i c_i d(coord^i).
Eigen::VectorXd form_at(const ContactSystem& sys, std::span<const double> p);

// Skew matrix A of its exterior derivative at p: (d eta')_p(u, v) = u^T A v.
Eigen::MatrixXd form_differential_at(const ContactSystem& sys, std::span<const double> p);

// Coefficient of (d alpha)^n ^ alpha against the coordinate volume form for
// an arbitrary 1-form alpha given by its 2n+1 coefficient fields, normalized
// so the reference contact form yields exactly 1. Nonzero iff alpha satisfies
// the contact condition at p.
double contact_condition_coefficient(const std::vector<FieldPtr>& coefficients, int n,
                                     std::span<const double> p);

// The same coefficient for the system's effective form; for a factor g it
// equals g^(n+1) at the point.
double volume_coefficient(const ContactSystem& sys, std::span<const double> p);

// Unique vector field with i_xi d(eta') = 0 and eta'(xi) = 1, from one
// bordered (2n+1)x(2n+1) solve. Throws SingularSystemError where the contact
// condition fails.
Eigen::VectorXd reeb_field_at(const ContactSystem& sys, std::span<const double> p);

// Derivative of the effective Hamiltonian along the effective Reeb field. In
// the reference presentation this is dH/dz; otherwise it is evaluated through
// the rescaling identity xi'(H') = (X_H(g) + g xi(H)) / g.
double xi_of_H(const ContactSystem& sys, std::span<const double> p);

// Contact Hamiltonian field. Reference presentation: the coordinate formula
//   x_i' = dH/dy_i,  y_i' = y_i dH/dz - dH/dx_i,  z' = H - sum_i y_i dH/dy_i.
// General factor: the defining equations of (eta', H') as one bordered solve.
Eigen::VectorXd contact_field_at(const ContactSystem& sys, std::span<const double> p);

struct ContactFieldResidual {
  double covector_equation = 0.0;  // sup norm of i_X d(eta') + dH' - xi'(H') eta'
  double pairing_equation = 0.0;   // |eta'(X) - H'|
};

// Defect of a candidate field X against the defining pair at p.
ContactFieldResidual contact_field_residual_at(const ContactSystem& sys,
                                               std::span<const double> p,
                                               const Eigen::VectorXd& X);

struct ReebResidual {
  double differential_equation = 0.0;  // sup norm of i_xi d(eta')
  double pairing_equation = 0.0;       // |eta'(xi) - 1|
};

ReebResidual reeb_residual_at(const ContactSystem& sys, std::span<const double> p,
                              const Eigen::VectorXd& xi);

// |X_H(H) - H dH/dz| at p, in terms of the reference Hamiltonian; the
// Hamiltonian evolves along its own flow with logarithmic rate xi(H).
double energy_rate_residual_at(const ContactSystem& sys, std::span<const double> p);

struct ConformalResidual {
  double field_mismatch = 0.0;  // sup norm of X_{g eta, g H} - X_{eta, H}
  double rate_relation = 0.0;   // solve-based xi'(H') vs the rescaling identity
};

// Invariance of the contact Hamiltonian field under rescaling by a further
// factor g, plus a two-path consistency check of the transformed Reeb rate.
ConformalResidual conformal_covariance_residual(const ContactSystem& sys, const FieldPtr& factor,
                                                std::span<const double> p);

}  // namespace cq
