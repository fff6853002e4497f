#include "contactq/geometry.hpp"

#include <cmath>
#include <stdexcept>

#include "contactq/linalg.hpp"

namespace cq {

namespace {

// Coefficients of g * eta in the (x, y, z) ordering: g*y_i, 0, g.
std::vector<FieldPtr> scaled_coefficients(int n, const FieldPtr& factor) {
  const int dim = 2 * n + 1;
  std::vector<FieldPtr> coeffs;
  coeffs.reserve(static_cast<std::size_t>(dim));
  for (int i = 0; i < n; ++i)
    coeffs.push_back(
        std::make_shared<ProductField>(factor, std::make_shared<CoordinateField>(n + i, dim)));
  for (int i = 0; i < n; ++i) coeffs.push_back(make_constant_field(0.0, dim));
  coeffs.push_back(factor);
  return coeffs;
}

bool is_constant_one(const FieldPtr& f) {
  const auto* c = dynamic_cast<const ConstantField*>(f.get());
  return c != nullptr && c->constant() == 1.0;
}

Eigen::VectorXd gradient_of(const FieldPtr& f, std::span<const double> p) {
  return to_vector(field_gradient(*f, p));
}

// Reference-chart contact field from partial derivatives of H.
Eigen::VectorXd reference_contact_field(int n, const FieldPtr& H, std::span<const double> p) {
  const Eigen::VectorXd dH = gradient_of(H, p);
  const double value = H->value(p);
  Eigen::VectorXd X(2 * n + 1);
  double pairing = 0.0;
  for (int i = 0; i < n; ++i) {
    X[i] = dH[n + i];
    X[n + i] = p[static_cast<std::size_t>(n + i)] * dH[2 * n] - dH[i];
    pairing += p[static_cast<std::size_t>(n + i)] * dH[n + i];
  }
  X[2 * n] = value - pairing;
  return X;
}

}  // namespace

ContactSystem ContactSystem::darboux(int n, FieldPtr hamiltonian) {
  return scaled(n, std::move(hamiltonian), make_constant_field(1.0, 2 * n + 1));
}

ContactSystem ContactSystem::scaled(int n, FieldPtr hamiltonian, FieldPtr factor) {
  if (n < 1) throw std::invalid_argument("ContactSystem: need n >= 1");
  if (hamiltonian->arity() != 2 * n + 1 || factor->arity() != 2 * n + 1)
    throw std::invalid_argument("ContactSystem: field arity must equal 2n+1");
  ContactSystem sys;
  sys.n = n;
  sys.hamiltonian = std::move(hamiltonian);
  sys.conformal_factor = factor;
  sys.reference_presentation = is_constant_one(factor);
  sys.effective_hamiltonian =
      sys.reference_presentation
          ? sys.hamiltonian
          : std::make_shared<ProductField>(factor, sys.hamiltonian);
  sys.form_coefficients = scaled_coefficients(n, factor);
  return sys;
}

ContactSystem ContactSystem::reciprocal_rescaling(int n, FieldPtr hamiltonian) {
  auto factor = std::make_shared<ReciprocalField>(hamiltonian);
  return scaled(n, std::move(hamiltonian), std::move(factor));
}

Eigen::VectorXd reference_form_at(int n, std::span<const double> p) {
  const int dim = 2 * n + 1;
  Eigen::VectorXd c = Eigen::VectorXd::Zero(dim);
  for (int i = 0; i < n; ++i) c[i] = p[static_cast<std::size_t>(n + i)];
  c[dim - 1] = 1.0;
  return c;
}

Eigen::MatrixXd reference_form_differential(int n) {
  const int dim = 2 * n + 1;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(dim, dim);
  for (int i = 0; i < n; ++i) {
    A(n + i, i) = 1.0;
    A(i, n + i) = -1.0;
  }
  return A;
}

Eigen::VectorXd form_at(const ContactSystem& sys, std::span<const double> p) {
  const int dim = sys.dim();
  Eigen::VectorXd c(dim);
  for (int i = 0; i < dim; ++i) c[i] = sys.form_coefficients[static_cast<std::size_t>(i)]->value(p);
  return c;
}

Eigen::MatrixXd form_differential_at(const ContactSystem& sys, std::span<const double> p) {
  const int dim = sys.dim();
  Eigen::MatrixXd grad(dim, dim);  // grad(i, j) = d c_j / d coord_i
  for (int j = 0; j < dim; ++j) {
    const auto g = field_gradient(*sys.form_coefficients[static_cast<std::size_t>(j)], p);
    for (int i = 0; i < dim; ++i) grad(i, j) = g[static_cast<std::size_t>(i)];
  }
  return grad - grad.transpose();
}

double contact_condition_coefficient(const std::vector<FieldPtr>& coefficients, int n,
                                     std::span<const double> p) {
  const int dim = 2 * n + 1;
  if (static_cast<int>(coefficients.size()) != dim)
    throw std::invalid_argument("contact_condition_coefficient: expected 2n+1 coefficients");
  Eigen::VectorXd c(dim);
  Eigen::MatrixXd grad(dim, dim);
  for (int j = 0; j < dim; ++j) {
    const auto& field = coefficients[static_cast<std::size_t>(j)];
    c[j] = field->value(p);
    const auto g = field_gradient(*field, p);
    for (int i = 0; i < dim; ++i) grad(i, j) = g[static_cast<std::size_t>(i)];
  }
  const Eigen::MatrixXd A = grad - grad.transpose();

  Eigen::MatrixXd bordered = Eigen::MatrixXd::Zero(dim + 1, dim + 1);
  bordered.topLeftCorner(dim, dim) = A;
  bordered.topRightCorner(dim, 1) = c;
  bordered.bottomLeftCorner(1, dim) = -c.transpose();
  // Pf(bordered) is the coefficient of (d alpha)^n ^ alpha divided by n!;
  // the reference form has Pf = (-1)^{n(n+1)/2}, which fixes the sign so the
  // normalized coefficient is 1 in the reference chart.
  const double sign = ((n * (n + 1) / 2) % 2 == 0) ? 1.0 : -1.0;
  return sign * pfaffian(bordered);
}

double volume_coefficient(const ContactSystem& sys, std::span<const double> p) {
  return contact_condition_coefficient(sys.form_coefficients, sys.n, p);
}

Eigen::VectorXd reeb_field_at(const ContactSystem& sys, std::span<const double> p) {
  const Eigen::VectorXd c = form_at(sys, p);
  const Eigen::MatrixXd A = form_differential_at(sys, p);
  // At contact points, A + c c^T is invertible and its solution against c is
  // exactly the vector annihilating A with unit pairing against c.
  return solve_linear(A + c * c.transpose(), c, "reeb_field");
}

double xi_of_H(const ContactSystem& sys, std::span<const double> p) {
  const Eigen::VectorXd dH = gradient_of(sys.hamiltonian, p);
  const double xi_H = dH[sys.dim() - 1];  // reference Reeb field is d/dz
  if (sys.reference_presentation) return xi_H;
  const double g = sys.conformal_factor->value(p);
  if (g == 0.0) throw EvalError("xi_of_H: conformal factor vanishes at the point");
  const Eigen::VectorXd X = reference_contact_field(sys.n, sys.hamiltonian, p);
  const double Xg = gradient_of(sys.conformal_factor, p).dot(X);
  return (Xg + g * xi_H) / g;
}

Eigen::VectorXd contact_field_at(const ContactSystem& sys, std::span<const double> p) {
  if (sys.reference_presentation) return reference_contact_field(sys.n, sys.hamiltonian, p);
  const Eigen::VectorXd c = form_at(sys, p);
  const Eigen::MatrixXd A = form_differential_at(sys, p);
  const Eigen::VectorXd dHp = gradient_of(sys.effective_hamiltonian, p);
  const double Hp = sys.effective_hamiltonian->value(p);
  const Eigen::MatrixXd bordered = A + c * c.transpose();
  const Eigen::VectorXd xi = solve_linear(bordered, c, "reeb_field");
  const double rate = dHp.dot(xi);
  // The defining pair collapses to one bordered system: A X = dH' - xi'(H') c
  // in this sign convention, plus c . X = H' through the rank-one border.
  return solve_linear(bordered, dHp + (Hp - rate) * c, "contact_field");
}

ContactFieldResidual contact_field_residual_at(const ContactSystem& sys,
                                               std::span<const double> p,
                                               const Eigen::VectorXd& X) {
  const Eigen::VectorXd c = form_at(sys, p);
  const Eigen::MatrixXd A = form_differential_at(sys, p);
  const Eigen::VectorXd dHp = gradient_of(sys.effective_hamiltonian, p);
  const double Hp = sys.effective_hamiltonian->value(p);
  const double rate = xi_of_H(sys, p);
  ContactFieldResidual res;
  // i_X d(eta') as a covector is -A X for skew A with d(eta')(u,v) = u^T A v.
  res.covector_equation = (-(A * X) + dHp - rate * c).lpNorm<Eigen::Infinity>();
  res.pairing_equation = std::abs(c.dot(X) - Hp);
  return res;
}

ReebResidual reeb_residual_at(const ContactSystem& sys, std::span<const double> p,
                              const Eigen::VectorXd& xi) {
  const Eigen::VectorXd c = form_at(sys, p);
  const Eigen::MatrixXd A = form_differential_at(sys, p);
  ReebResidual res;
  res.differential_equation = (A * xi).lpNorm<Eigen::Infinity>();
  res.pairing_equation = std::abs(c.dot(xi) - 1.0);
  return res;
}

double energy_rate_residual_at(const ContactSystem& sys, std::span<const double> p) {
  const Eigen::VectorXd X = contact_field_at(sys, p);
  const Eigen::VectorXd dH = gradient_of(sys.hamiltonian, p);
  const double H = sys.hamiltonian->value(p);
  return std::abs(dH.dot(X) - H * dH[sys.dim() - 1]);
}

ConformalResidual conformal_covariance_residual(const ContactSystem& sys, const FieldPtr& factor,
                                                std::span<const double> p) {
  const FieldPtr combined =
      sys.reference_presentation
          ? factor
          : std::make_shared<ProductField>(factor, sys.conformal_factor);
  const ContactSystem rescaled = ContactSystem::scaled(sys.n, sys.hamiltonian, combined);

  ConformalResidual res;
  res.field_mismatch =
      (contact_field_at(rescaled, p) - contact_field_at(sys, p)).lpNorm<Eigen::Infinity>();

  // two independent evaluations of xi'(H'): through the Reeb solve of the
  // rescaled form, and through the rescaling identity
  const Eigen::VectorXd xi = reeb_field_at(rescaled, p);
  const double solve_rate = gradient_of(rescaled.effective_hamiltonian, p).dot(xi);
  res.rate_relation = std::abs(solve_rate - xi_of_H(rescaled, p));
  return res;
}

}  // namespace cq
