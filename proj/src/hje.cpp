#include "contactq/hje.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

#include "contactq/linalg.hpp"
#include "contactq/solvers.hpp"

namespace cq {

namespace {

Eigen::VectorXd gradient_of(const FieldPtr& f, std::span<const double> p) {
  return to_vector(field_gradient(*f, p));
}

// S subseteq T for column-span subspaces, by a rank test.
bool subspace_contained(const Eigen::MatrixXd& S, const Eigen::MatrixXd& T) {
  if (S.cols() == 0) return true;
  if (T.cols() == 0) return false;
  Eigen::MatrixXd joined(T.rows(), T.cols() + S.cols());
  joined << T, S;
  return matrix_rank(joined) == matrix_rank(T);
}

std::string point_to_string(std::span<const double> v) {
  std::ostringstream out;
  out.precision(6);
  out << "(";
  for (std::size_t i = 0; i < v.size(); ++i) out << (i ? ", " : "") << v[i];
  out << ")";
  return out.str();
}

}  // namespace

Fibration Fibration::x_projection(int n) {
  if (n < 1) throw std::invalid_argument("Fibration: need n >= 1");
  return Fibration{FibrationKind::XProjection, n};
}

Fibration Fibration::xz_projection(int n) {
  if (n < 1) throw std::invalid_argument("Fibration: need n >= 1");
  return Fibration{FibrationKind::XZProjection, n};
}

Fibration Fibration::yz_projection(int n) {
  if (n < 1) throw std::invalid_argument("Fibration: need n >= 1");
  return Fibration{FibrationKind::YZProjection, n};
}

std::vector<int> Fibration::base_indices() const {
  std::vector<int> idx;
  const int first = kind == FibrationKind::YZProjection ? n : 0;
  for (int i = 0; i < n; ++i) idx.push_back(first + i);
  if (kind != FibrationKind::XProjection) idx.push_back(2 * n);
  return idx;
}

std::vector<int> Fibration::fiber_indices() const {
  std::vector<int> idx;
  const int first = kind == FibrationKind::YZProjection ? 0 : n;
  for (int i = 0; i < n; ++i) idx.push_back(first + i);
  if (kind == FibrationKind::XProjection) idx.push_back(2 * n);
  return idx;
}

Eigen::VectorXd Fibration::project(std::span<const double> point) const {
  const auto idx = base_indices();
  Eigen::VectorXd out(static_cast<int>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i)
    out[static_cast<int>(i)] = point[static_cast<std::size_t>(idx[i])];
  return out;
}

Eigen::MatrixXd Fibration::vertical_basis() const {
  const auto idx = fiber_indices();
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(dim_total(), static_cast<int>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) K(idx[j], static_cast<int>(j)) = 1.0;
  return K;
}

Section::Section(Fibration fib, std::vector<FieldPtr> components)
    : fibration(fib), fiber_components(std::move(components)) {
  if (static_cast<int>(fiber_components.size()) != fibration.dim_fiber())
    throw std::invalid_argument("Section: one component per fiber coordinate required");
  for (const auto& f : fiber_components)
    if (f->arity() != fibration.dim_base())
      throw std::invalid_argument("Section: components must be fields over the base");
}

Eigen::VectorXd Section::value(std::span<const double> base) const {
  Eigen::VectorXd out(fibration.dim_total());
  const auto bidx = fibration.base_indices();
  const auto fidx = fibration.fiber_indices();
  for (std::size_t i = 0; i < bidx.size(); ++i) out[bidx[i]] = base[i];
  for (std::size_t j = 0; j < fidx.size(); ++j) out[fidx[j]] = fiber_components[j]->value(base);
  return out;
}

Eigen::MatrixXd Section::jacobian(std::span<const double> base) const {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(fibration.dim_total(), fibration.dim_base());
  const auto bidx = fibration.base_indices();
  const auto fidx = fibration.fiber_indices();
  for (std::size_t i = 0; i < bidx.size(); ++i) J(bidx[i], static_cast<int>(i)) = 1.0;
  for (std::size_t j = 0; j < fidx.size(); ++j) {
    const auto g = field_gradient(*fiber_components[j], base);
    for (std::size_t i = 0; i < g.size(); ++i) J(fidx[j], static_cast<int>(i)) = g[i];
  }
  return J;
}

CompleteSolution::CompleteSolution(Fibration fib, Box base, Box params,
                                   std::vector<FieldPtr> components)
    : fibration(fib),
      base_box(std::move(base)),
      param_box(std::move(params)),
      fiber_components(std::move(components)) {
  if (base_box.dim() != fibration.dim_base())
    throw std::invalid_argument("CompleteSolution: base box dimension mismatch");
  if (param_box.dim() != fibration.dim_fiber())
    throw std::invalid_argument(
        "CompleteSolution: parameter count must equal the fiber dimension");
  if (static_cast<int>(fiber_components.size()) != fibration.dim_fiber())
    throw std::invalid_argument("CompleteSolution: one component per fiber coordinate required");
  const int arity = fibration.dim_base() + fibration.dim_fiber();
  for (const auto& f : fiber_components)
    if (f->arity() != arity)
      throw std::invalid_argument("CompleteSolution: components must be fields over (base, lambda)");
}

Section CompleteSolution::at_params(const Eigen::VectorXd& lambda) const {
  if (lambda.size() != dim_params())
    throw std::invalid_argument("CompleteSolution: lambda dimension mismatch");
  const int nb = fibration.dim_base();
  std::vector<int> free_slots(static_cast<std::size_t>(nb));
  for (int i = 0; i < nb; ++i) free_slots[static_cast<std::size_t>(i)] = i;
  std::vector<double> fixed(static_cast<std::size_t>(nb + dim_params()), 0.0);
  for (int j = 0; j < dim_params(); ++j) fixed[static_cast<std::size_t>(nb + j)] = lambda[j];
  std::vector<FieldPtr> bound;
  bound.reserve(fiber_components.size());
  for (const auto& f : fiber_components)
    bound.push_back(std::make_shared<PartialBindField>(f, free_slots, fixed));
  return Section(fibration, std::move(bound));
}

Eigen::VectorXd CompleteSolution::value(std::span<const double> base,
                                        std::span<const double> lambda) const {
  std::vector<double> args(base.begin(), base.end());
  args.insert(args.end(), lambda.begin(), lambda.end());
  Eigen::VectorXd out(fibration.dim_total());
  const auto bidx = fibration.base_indices();
  const auto fidx = fibration.fiber_indices();
  for (std::size_t i = 0; i < bidx.size(); ++i) out[bidx[i]] = base[i];
  for (std::size_t j = 0; j < fidx.size(); ++j) out[fidx[j]] = fiber_components[j]->value(args);
  return out;
}

Eigen::MatrixXd CompleteSolution::jacobian_full(std::span<const double> base,
                                                std::span<const double> lambda) const {
  std::vector<double> args(base.begin(), base.end());
  args.insert(args.end(), lambda.begin(), lambda.end());
  const int total = fibration.dim_base() + dim_params();
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(fibration.dim_total(), total);
  const auto bidx = fibration.base_indices();
  const auto fidx = fibration.fiber_indices();
  for (std::size_t i = 0; i < bidx.size(); ++i) J(bidx[i], static_cast<int>(i)) = 1.0;
  for (std::size_t j = 0; j < fidx.size(); ++j) {
    const auto g = field_gradient(*fiber_components[j], args);
    for (std::size_t i = 0; i < g.size(); ++i) J(fidx[j], static_cast<int>(i)) = g[i];
  }
  return J;
}

Eigen::VectorXd hje_residual(const Section& section, const ContactSystem& sys,
                             std::span<const double> base) {
  const Eigen::VectorXd m = section.value(base);
  const Eigen::VectorXd X = contact_field_at(sys, as_span(m));
  const auto bidx = section.fibration.base_indices();
  Eigen::VectorXd X_sigma(static_cast<int>(bidx.size()));
  for (std::size_t i = 0; i < bidx.size(); ++i) X_sigma[static_cast<int>(i)] = X[bidx[i]];
  return section.jacobian(base) * X_sigma - X;
}

double WeakHjeResidual::max_abs() const {
  const double form = one_form.size() > 0 ? one_form.lpNorm<Eigen::Infinity>() : 0.0;
  return std::max(form, std::abs(pairing));
}

WeakHjeResidual weak_hje_residual(const Section& section, const ContactSystem& sys,
                                  std::span<const double> base) {
  const Eigen::VectorXd m = section.value(base);
  const auto mp = as_span(m);
  const Eigen::MatrixXd J = section.jacobian(base);
  const Eigen::VectorXd c = form_at(sys, mp);
  const Eigen::MatrixXd A = form_differential_at(sys, mp);
  const Eigen::VectorXd dHp = gradient_of(sys.effective_hamiltonian, mp);
  const double Hp = sys.effective_hamiltonian->value(mp);
  const double rate = xi_of_H(sys, mp);

  const Eigen::VectorXd X = contact_field_at(sys, mp);
  const auto bidx = section.fibration.base_indices();
  Eigen::VectorXd X_sigma(static_cast<int>(bidx.size()));
  for (std::size_t i = 0; i < bidx.size(); ++i) X_sigma[static_cast<int>(i)] = X[bidx[i]];

  WeakHjeResidual res;
  const Eigen::VectorXd lifted = J * X_sigma;
  // i_v d(eta') is the covector A^T v, so the pullback contraction on the
  // base basis is J^T A^T (J X^sigma).
  res.one_form = J.transpose() * (A.transpose() * lifted - rate * c + dHp);
  res.pairing = c.dot(lifted) - Hp;
  return res;
}

FibrationConditionReport fibration_condition(const Fibration& fib, const ContactSystem& sys,
                                             std::span<const double> point) {
  if (fib.dim_total() != sys.dim())
    throw std::invalid_argument("fibration_condition: chart dimensions disagree");
  const Eigen::MatrixXd K = fib.vertical_basis();
  const Eigen::VectorXd c = form_at(sys, point);
  const Eigen::MatrixXd A = form_differential_at(sys, point);

  FibrationConditionReport report;
  // Ker Pi_* . Ker eta': kernel of eta' restricted to the vertical subspace
  const Eigen::MatrixXd c_on_K = (K.transpose() * c).transpose();
  const Eigen::MatrixXd W = K * nullspace(c_on_K);
  // (Ker Pi_*)^perp for d(eta'): vectors v with v^T A k = 0 for vertical k
  const Eigen::MatrixXd perp = nullspace(K.transpose() * A.transpose());
  report.vertical_kernel_dim = static_cast<int>(W.cols());
  report.vertical_perp_dim = static_cast<int>(perp.cols());
  report.preisotropy = subspace_contained(W, perp);
  return report;
}

FibrationConditionReport fibration_condition(const Fibration& fib, const ContactSystem& sys,
                                             const Section& section,
                                             std::span<const double> base) {
  const Eigen::VectorXd m = section.value(base);
  FibrationConditionReport report = fibration_condition(fib, sys, as_span(m));

  const Eigen::MatrixXd J = section.jacobian(base);
  const Eigen::VectorXd c = form_at(sys, as_span(m));
  const Eigen::MatrixXd A = form_differential_at(sys, as_span(m));
  // (Im sigma_*)^perp . Ker eta' as the kernel of the stacked constraints
  Eigen::MatrixXd constraints(J.cols() + 1, J.rows());
  constraints.topRows(J.cols()) = J.transpose() * A.transpose();
  constraints.bottomRows(1) = c.transpose();
  const Eigen::MatrixXd S = nullspace(constraints);
  report.section_checked = true;
  report.section_perp_kernel_dim = static_cast<int>(S.cols());
  report.coisotropy_of_section = subspace_contained(S, J);
  return report;
}

double pseudo_isotropy_residual(const CompleteSolution& solution, std::span<const double> lambda,
                                std::span<const double> base) {
  const Section section = solution.at_params(to_vector(lambda));
  const Eigen::MatrixXd J = section.jacobian(base);
  const Eigen::MatrixXd A0 = reference_form_differential(solution.fibration.n);
  return (J.transpose() * A0 * J).lpNorm<Eigen::Infinity>();
}

GPseudoIsotropyResidual g_pseudo_isotropy_residual(const CompleteSolution& solution,
                                                   const ContactSystem& sys, const FieldPtr& g,
                                                   std::span<const double> lambda,
                                                   std::span<const double> base) {
  const Section section = solution.at_params(to_vector(lambda));
  const Eigen::VectorXd m = section.value(base);
  const auto mp = as_span(m);

  const ContactSystem rescaled = ContactSystem::scaled(sys.n, sys.hamiltonian, g);
  const Eigen::MatrixXd Ag = form_differential_at(rescaled, mp);
  const Eigen::MatrixXd J = section.jacobian(base);

  GPseudoIsotropyResidual res;
  res.form = (J.transpose() * Ag * J).lpNorm<Eigen::Infinity>();

  const Eigen::VectorXd X = contact_field_at(sys, mp);
  const Eigen::VectorXd dg = gradient_of(g, mp);
  const double xi_H = gradient_of(sys.hamiltonian, mp)[sys.dim() - 1];
  res.rate = dg.dot(X) + g->value(mp) * xi_H;
  return res;
}

SolutionCheckReport complete_solution_check(const CompleteSolution& solution,
                                            const ContactSystem& sys,
                                            const SolutionCheckOptions& opt) {
  SolutionCheckReport report;
  report.min_abs_det = std::numeric_limits<double>::infinity();
  std::mt19937_64 rng(opt.seed);

  for (int ps = 0; ps < opt.param_samples; ++ps) {
    const Eigen::VectorXd lambda = solution.param_box.sample(rng);
    const Section member = solution.at_params(lambda);
    for (int bs = 0; bs < opt.base_samples; ++bs) {
      const Eigen::VectorXd u = solution.base_box.sample(rng);
      ++report.evaluations;

      const Eigen::MatrixXd J = solution.jacobian_full(as_span(u), as_span(lambda));
      const double det = J.determinant();
      report.min_abs_det = std::min(report.min_abs_det, std::abs(det));
      if (std::abs(det) <= opt.det_threshold) {
        if (report.failure.empty())
          report.failure = "singular Jacobian at base=" + point_to_string(as_span(u)) +
                           ", lambda=" + point_to_string(as_span(lambda));
        continue;
      }

      report.max_hje = std::max(report.max_hje,
                                hje_residual(member, sys, as_span(u)).lpNorm<Eigen::Infinity>());

      const Eigen::VectorXd m = solution.value(as_span(u), as_span(lambda));
      const auto mp = as_span(m);
      const Eigen::VectorXd X = contact_field_at(sys, mp);
      const Eigen::VectorXd X_Sigma = solve_linear(J, X, "complete_solution_check");
      const Eigen::VectorXd lifted = J * X_Sigma;
      const Eigen::VectorXd c = form_at(sys, mp);
      const Eigen::MatrixXd A = form_differential_at(sys, mp);
      const Eigen::VectorXd dHp = gradient_of(sys.effective_hamiltonian, mp);
      const double Hp = sys.effective_hamiltonian->value(mp);
      const double rate = xi_of_H(sys, mp);
      const Eigen::VectorXd one_form =
          J.transpose() * (A.transpose() * lifted - rate * c + dHp);
      report.max_one_form = std::max(report.max_one_form, one_form.lpNorm<Eigen::Infinity>());
      report.max_pairing = std::max(report.max_pairing, std::abs(c.dot(lifted) - Hp));
    }
  }

  const bool residuals_ok = report.max_hje < opt.tolerance &&
                            report.max_one_form < opt.tolerance &&
                            report.max_pairing < opt.tolerance;
  report.passed = report.failure.empty() && report.evaluations > 0 &&
                  report.min_abs_det > opt.det_threshold && residuals_ok;
  if (!report.passed && report.failure.empty()) {
    std::ostringstream why;
    why.precision(3);
    why << "residuals above tolerance: hje=" << report.max_hje
        << ", one_form=" << report.max_one_form << ", pairing=" << report.max_pairing;
    report.failure = why.str();
  }
  return report;
}

SolutionInverse invert_solution(const CompleteSolution& solution, std::span<const double> point,
                                const InversionOptions& opt) {
  const int nb = solution.fibration.dim_base();
  const int k = solution.dim_params();
  const int total = nb + k;
  if (static_cast<int>(point.size()) != solution.fibration.dim_total())
    throw std::invalid_argument("invert_solution: point dimension mismatch");
  const Eigen::VectorXd target = to_vector(point);

  const auto residual = [&](const Eigen::VectorXd& w) -> Eigen::VectorXd {
    return solution.value(std::span<const double>(w.data(), static_cast<std::size_t>(nb)),
                          std::span<const double>(w.data() + nb, static_cast<std::size_t>(k))) -
           target;
  };
  const auto jacobian = [&](const Eigen::VectorXd& w) -> Eigen::MatrixXd {
    return solution.jacobian_full(
        std::span<const double>(w.data(), static_cast<std::size_t>(nb)),
        std::span<const double>(w.data() + nb, static_cast<std::size_t>(k)));
  };

  Eigen::VectorXd w0(total);
  if (opt.initial.has_value()) {
    if (opt.initial->size() != total)
      throw std::invalid_argument("invert_solution: initial guess dimension mismatch");
    w0 = *opt.initial;
  } else {
    // coarse per-axis grid over base_box x param_box, keep the best residual
    const int g = std::max(1, opt.grid_per_axis);
    const auto axis_value = [&](const Box& box, int axis, int step) {
      return box.lo[axis] + (box.hi[axis] - box.lo[axis]) * (step + 0.5) / g;
    };
    std::vector<int> counter(static_cast<std::size_t>(total), 0);
    double best = std::numeric_limits<double>::infinity();
    Eigen::VectorXd w(total);
    bool done = false;
    while (!done) {
      for (int i = 0; i < nb; ++i)
        w[i] = axis_value(solution.base_box, i, counter[static_cast<std::size_t>(i)]);
      for (int j = 0; j < k; ++j)
        w[nb + j] = axis_value(solution.param_box, j, counter[static_cast<std::size_t>(nb + j)]);
      const double r = residual(w).norm();
      if (r < best) {
        best = r;
        w0 = w;
      }
      int axis = 0;
      while (axis < total) {
        if (++counter[static_cast<std::size_t>(axis)] < g) break;
        counter[static_cast<std::size_t>(axis)] = 0;
        ++axis;
      }
      done = axis == total;
    }
  }

  NewtonOptions nopt;
  nopt.max_iterations = opt.max_iterations;
  nopt.step_tol = opt.step_tol;
  nopt.residual_tol = 1e-12;
  const VectorNewtonResult result = newton_vector(residual, jacobian, w0, nopt, "invert_solution");
  if (!result.converged)
    throw ConvergenceError("invert_solution: Newton stalled with residual " +
                           std::to_string(result.residual_norm));

  SolutionInverse inv;
  inv.base = result.x.head(nb);
  inv.lambda = result.x.tail(k);
  inv.residual = result.residual_norm;
  inv.iterations = result.iterations;
  return inv;
}

Eigen::VectorXd first_integrals_from_solution(const CompleteSolution& solution,
                                              std::span<const double> point,
                                              const InversionOptions& opt) {
  return invert_solution(solution, point, opt).lambda;
}

Eigen::MatrixXd first_integral_jacobian(const CompleteSolution& solution,
                                        std::span<const double> base,
                                        std::span<const double> lambda) {
  const Eigen::MatrixXd J = solution.jacobian_full(base, lambda);
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(J);
  if (!lu.isInvertible())
    throw SingularSystemError("first_integral_jacobian: family Jacobian is singular");
  const Eigen::MatrixXd inverse = lu.inverse();
  return inverse.bottomRows(solution.dim_params());
}

}  // namespace cq
