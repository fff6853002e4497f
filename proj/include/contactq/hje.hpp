#pragma once

// Fibrations over coordinate bases, sections, and parameterized families of
// sections (complete solutions), together with every residual that decides
// whether a section solves the Hamilton-Jacobi problem for a contact system:
// the strong sigma-relatedness condition, the weak pulled-back-form pair, the
// pointwise pre/co-isotropy conditions on subspaces, pseudo-isotropy of a
// family, and the inversion of a family into first integrals.

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "contactq/box.hpp"
#include "contactq/fields.hpp"
#include "contactq/geometry.hpp"

namespace cq {

enum class FibrationKind {
  XProjection,   // (x, y, z) -> x, base dimension n
  XZProjection,  // (x, y, z) -> (x, z), base dimension n + 1
  YZProjection,  // (x, y, z) -> (y, z), base dimension n + 1
};

// A coordinate projection used as Pi: M -> N. Base coordinates keep their
// chart order (x before y before z).
struct Fibration {
  FibrationKind kind = FibrationKind::XProjection;
  int n = 0;

  static Fibration x_projection(int n);
  static Fibration xz_projection(int n);
  static Fibration yz_projection(int n);

  int dim_total() const { return 2 * n + 1; }
  int dim_base() const { return kind == FibrationKind::XProjection ? n : n + 1; }
  int dim_fiber() const { return dim_total() - dim_base(); }

  // Chart indices of the base (respectively fiber) coordinates inside M.
  std::vector<int> base_indices() const;
  std::vector<int> fiber_indices() const;

  Eigen::VectorXd project(std::span<const double> point) const;

  // Columns are the coordinate directions spanning Ker Pi_*.
  Eigen::MatrixXd vertical_basis() const;
};

// A section sigma: N -> M of the fibration, given by one expression field per
// fiber coordinate, each over the base coordinates. Pi o sigma = id holds by
// construction.
struct Section {
  Fibration fibration;
  std::vector<FieldPtr> fiber_components;

  Section(Fibration fib, std::vector<FieldPtr> components);

  // Image point in chart order (x, y, z).
  Eigen::VectorXd value(std::span<const double> base) const;

  // Tangent map sigma_*: dim M x dim N, exact derivatives.
  Eigen::MatrixXd jacobian(std::span<const double> base) const;
};

// Family Sigma: N x Lambda -> M of sections, one expression field per fiber
// coordinate over (base coords, lambda coords). The boxes delimit the region
// where the family is certified; k = dim Lambda equals the fiber dimension so
// the full Jacobian is square.
struct CompleteSolution {
  Fibration fibration;
  Box base_box;
  Box param_box;
  std::vector<FieldPtr> fiber_components;

  CompleteSolution(Fibration fib, Box base, Box params, std::vector<FieldPtr> components);

  int dim_params() const { return fibration.dim_fiber(); }

  // The member section sigma_lambda = Sigma(., lambda).
  Section at_params(const Eigen::VectorXd& lambda) const;

  Eigen::VectorXd value(std::span<const double> base, std::span<const double> lambda) const;

  // Square Jacobian over (base, lambda), columns in that order.
  Eigen::MatrixXd jacobian_full(std::span<const double> base,
                                std::span<const double> lambda) const;
};

// sigma_*(X^sigma(p)) - X(sigma(p)) with X^sigma = Pi_* o X o sigma; the zero
// vector exactly when sigma solves the Hamilton-Jacobi problem at p.
Eigen::VectorXd hje_residual(const Section& section, const ContactSystem& sys,
                             std::span<const double> base);

struct WeakHjeResidual {
  // i_{X^sigma} sigma*(d eta') - sigma*(rate eta' - dH') on the base basis
  Eigen::VectorXd one_form;
  // (sigma* eta')(X^sigma) - H' o sigma
  double pairing = 0.0;

  double max_abs() const;
};

// The pulled-back pair of conditions implied by the strong one; both entries
// vanish whenever hje_residual vanishes, but not conversely in general.
WeakHjeResidual weak_hje_residual(const Section& section, const ContactSystem& sys,
                                  std::span<const double> base);

struct FibrationConditionReport {
  // Ker Pi_* . Ker eta' inside the d(eta')-orthogonal complement of Ker Pi_*
  bool preisotropy = false;
  int vertical_kernel_dim = 0;  // dim(Ker Pi_* . Ker eta')
  int vertical_perp_dim = 0;    // dim (Ker Pi_*)^perp

  // (Im sigma_*)^perp . Ker eta' inside Im sigma_*; only when a section is given
  bool section_checked = false;
  bool coisotropy_of_section = false;
  int section_perp_kernel_dim = 0;  // dim ((Im sigma_*)^perp . Ker eta')
};

// Pointwise subspace conditions at a chart point of M, decided by rank tests.
FibrationConditionReport fibration_condition(const Fibration& fib, const ContactSystem& sys,
                                             std::span<const double> point);

// Same, plus the co-isotropy condition for the section, all evaluated at
// sigma(base).
FibrationConditionReport fibration_condition(const Fibration& fib, const ContactSystem& sys,
                                             const Section& section,
                                             std::span<const double> base);

// Max-norm of the pullback of the reference form's differential through
// sigma_lambda on the base basis; zero for every lambda and base point
// exactly when the family is pseudo-isotropic.
double pseudo_isotropy_residual(const CompleteSolution& solution, std::span<const double> lambda,
                                std::span<const double> base);

struct GPseudoIsotropyResidual {
  double form = 0.0;  // max-norm of sigma_lambda* d(g eta) on the base basis
  double rate = 0.0;  // X_H(g) + g dH/dz at sigma_lambda(p)
};

// The rescaled-form variant: the family is g-pseudo-isotropic for H when the
// form residual vanishes identically and g satisfies the rate equation.
GPseudoIsotropyResidual g_pseudo_isotropy_residual(const CompleteSolution& solution,
                                                   const ContactSystem& sys, const FieldPtr& g,
                                                   std::span<const double> lambda,
                                                   std::span<const double> base);

struct SolutionCheckOptions {
  int base_samples = 40;
  int param_samples = 8;
  std::uint64_t seed = 42;
  double det_threshold = 1e-8;
  double tolerance = 1e-9;
};

struct SolutionCheckReport {
  bool passed = false;
  double min_abs_det = 0.0;       // of the full Jacobian over the grid
  double max_hje = 0.0;           // worst member-section residual
  double max_one_form = 0.0;      // worst pulled-back one-form defect on N x Lambda
  double max_pairing = 0.0;       // worst pulled-back pairing defect
  int evaluations = 0;
  std::string failure;            // empty when passed; else what failed and where
};

// Certifies the family on a random grid over base_box x param_box: the full
// Jacobian stays nonsingular, every member section solves the Hamilton-Jacobi
// problem, and the projected field X^Sigma = (J Sigma)^-1 X o Sigma satisfies
// the pulled-back defining pair on N x Lambda.
SolutionCheckReport complete_solution_check(const CompleteSolution& solution,
                                            const ContactSystem& sys,
                                            const SolutionCheckOptions& opt = {});

struct InversionOptions {
  int grid_per_axis = 4;                        // coarse search for the start point
  std::optional<Eigen::VectorXd> initial;       // (base, lambda) warm start
  int max_iterations = 50;
  double step_tol = 1e-12;
};

struct SolutionInverse {
  Eigen::VectorXd base;
  Eigen::VectorXd lambda;
  double residual = 0.0;
  int iterations = 0;
};

// Inverts Sigma(u, lambda) = m by damped Newton over the configured boxes.
// Throws ConvergenceError (with the final residual) when Newton fails.
SolutionInverse invert_solution(const CompleteSolution& solution, std::span<const double> point,
                                const InversionOptions& opt = {});

// The lambda-component of the inverse: the values of the first integrals
// F = p_Lambda o Sigma^-1 at the phase point.
Eigen::VectorXd first_integrals_from_solution(const CompleteSolution& solution,
                                              std::span<const double> point,
                                              const InversionOptions& opt = {});

// Jacobian of F at Sigma(base, lambda): the lambda-rows of the inverse of the
// full Jacobian. Its kernel contains Im (sigma_lambda)_*, which is the
// differential form of the duality between families and first integrals.
Eigen::MatrixXd first_integral_jacobian(const CompleteSolution& solution,
                                        std::span<const double> base,
                                        std::span<const double> lambda);

}  // namespace cq
