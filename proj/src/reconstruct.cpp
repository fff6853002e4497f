#include "contactq/reconstruct.hpp"

#include <cmath>
#include <cstddef>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

#include "contactq/dual.hpp"
#include "contactq/linalg.hpp"
#include "contactq/quadrature.hpp"
#include "contactq/solvers.hpp"

namespace cq {

namespace {

std::string point_label(const Eigen::VectorXd& base, const Eigen::VectorXd& lambda) {
  std::ostringstream os;
  os << "base=(";
  for (int i = 0; i < base.size(); ++i) os << (i ? ", " : "") << base[i];
  os << "), lambda=(";
  for (int i = 0; i < lambda.size(); ++i) os << (i ? ", " : "") << lambda[i];
  os << ")";
  return os.str();
}

// Image of the family in chart order at (possibly dual-valued) arguments
// args = (base coords, lambda coords).
template <class T>
std::vector<T> family_point(const CompleteSolution& family, std::span<const T> args) {
  const std::vector<int> bidx = family.fibration.base_indices();
  const std::vector<int> fidx = family.fibration.fiber_indices();
  std::vector<T> m(static_cast<std::size_t>(family.fibration.dim_total()), T{});
  for (std::size_t i = 0; i < bidx.size(); ++i) m[bidx[i]] = args[i];
  for (std::size_t j = 0; j < fidx.size(); ++j) m[fidx[j]] = family.fiber_components[j]->value(args);
  return m;
}

// Pairing of Sigma* eta' with a tangent w of N x Lambda at args = (p, lambda).
// The push-forward of the fiber components is obtained from one extra dual
// level seeded with w, so the value is exact in w whatever scalar type T the
// caller threads through for its own derivatives.
template <class T>
T pullback_pairing(const ContactSystem& sys, const CompleteSolution& family,
                   std::span<const T> args, std::span<const T> w) {
  using DT = Dual<T>;
  const std::vector<int> bidx = family.fibration.base_indices();
  const std::vector<int> fidx = family.fibration.fiber_indices();
  const int dim = family.fibration.dim_total();

  std::vector<DT> seeded(args.size());
  for (std::size_t i = 0; i < args.size(); ++i) seeded[i] = DT(args[i], w[i]);

  std::vector<T> m(static_cast<std::size_t>(dim), T{});
  std::vector<T> u(static_cast<std::size_t>(dim), T{});
  for (std::size_t i = 0; i < bidx.size(); ++i) {
    m[bidx[i]] = args[i];
    u[bidx[i]] = w[i];
  }
  const std::span<const DT> seeded_span(seeded.data(), seeded.size());
  for (std::size_t j = 0; j < fidx.size(); ++j) {
    const DT jet = family.fiber_components[j]->value(seeded_span);
    m[fidx[j]] = jet.v;
    u[fidx[j]] = jet.d;
  }

  T out{};
  const std::span<const T> image(m.data(), m.size());
  for (int i = 0; i < dim; ++i) out += sys.form_coefficients[i]->value(image) * u[i];
  return out;
}

// Line integral of Sigma* eta' over the straight segment from a fixed anchor
// to a (possibly dual-valued) endpoint at fixed lambda. Differentiating the
// endpoint or lambda with dual seeds differentiates under the integral sign.
template <class T>
T segment_integral(const ContactSystem& sys, const CompleteSolution& family,
                   const Eigen::VectorXd& from, std::span<const T> to, std::span<const T> lambda,
                   const QuadratureOptions& qopt) {
  const int nb = family.fibration.dim_base();
  const int k = family.dim_params();
  auto integrand = [&](double s) -> T {
    std::vector<T> args(static_cast<std::size_t>(nb + k), T{});
    std::vector<T> w(static_cast<std::size_t>(nb + k), T{});
    for (int i = 0; i < nb; ++i) {
      const T delta = to[i] - from[i];
      args[i] = from[i] + s * delta;
      w[i] = delta;
    }
    for (int j = 0; j < k; ++j) args[nb + j] = lambda[j];
    return pullback_pairing<T>(sys, family, std::span<const T>(args.data(), args.size()),
                               std::span<const T>(w.data(), w.size()));
  };
  return integrate_adaptive(integrand, 0.0, 1.0, qopt);
}

// Same endpoints joined axis by axis; agreement with the straight segment is
// the runtime witness of a closed pull-back.
double staircase_integral(const ContactSystem& sys, const CompleteSolution& family,
                          const Eigen::VectorXd& from, std::span<const double> to,
                          std::span<const double> lambda, const QuadratureOptions& qopt) {
  Eigen::VectorXd corner = from;
  double total = 0.0;
  for (int i = 0; i < static_cast<int>(to.size()); ++i) {
    Eigen::VectorXd next = corner;
    next[i] = to[i];
    total += segment_integral<double>(sys, family, corner, as_span(next), lambda, qopt);
    corner = next;
  }
  return total;
}

QuadratureOptions quad_options(const TablesConfig& config) {
  return QuadratureOptions{config.quadrature_tolerance, config.quadrature_max_depth};
}

}  // namespace

ReconstructionTables::ReconstructionTables(CompleteSolution solution, ContactSystem system,
                                           TablesConfig config)
    : solution_(std::move(solution)), system_(std::move(system)), config_(std::move(config)) {
  if (solution_.fibration.dim_total() != system_.dim())
    throw std::invalid_argument("ReconstructionTables: family and system dimensions disagree");
  p0_ = config_.base_point ? *config_.base_point : solution_.base_box.midpoint();
  if (p0_.size() != solution_.fibration.dim_base())
    throw std::invalid_argument("ReconstructionTables: base point dimension mismatch");
}

void ReconstructionTables::require(bool ready, const char* what) const {
  if (!ready)
    throw std::logic_error(std::string("ReconstructionTables: ") + what + " stage not built");
}

double ReconstructionTables::W(std::span<const double> base, std::span<const double> lambda) const {
  require(w_ready_, "W");
  return segment_integral<double>(system_, solution_, p0_, base, lambda, quad_options(config_));
}

double ReconstructionTables::W_directional(std::span<const double> base,
                                           std::span<const double> lambda,
                                           std::span<const double> direction) const {
  require(w_ready_, "W");
  const int nb = solution_.fibration.dim_base();
  const int k = solution_.dim_params();
  if (static_cast<int>(direction.size()) != nb + k)
    throw std::invalid_argument("W_directional: direction must span (base, lambda)");
  std::vector<D1> to(static_cast<std::size_t>(nb));
  std::vector<D1> lam(static_cast<std::size_t>(k));
  for (int i = 0; i < nb; ++i) to[i] = D1(base[i], direction[i]);
  for (int j = 0; j < k; ++j) lam[j] = D1(lambda[j], direction[nb + j]);
  const D1 jet = segment_integral<D1>(system_, solution_, p0_,
                                      std::span<const D1>(to.data(), to.size()),
                                      std::span<const D1>(lam.data(), lam.size()),
                                      quad_options(config_));
  return jet.d;
}

double ReconstructionTables::two_path_defect(std::span<const double> base,
                                             std::span<const double> lambda) const {
  require(w_ready_, "W");
  const QuadratureOptions qopt = quad_options(config_);
  const double straight = segment_integral<double>(system_, solution_, p0_, base, lambda, qopt);
  const double stair = staircase_integral(system_, solution_, p0_, base, lambda, qopt);
  return std::abs(straight - stair);
}

Eigen::VectorXd ReconstructionTables::phi(std::span<const double> base,
                                          std::span<const double> lambda) const {
  require(phi_ready_, "phi");
  const int nb = solution_.fibration.dim_base();
  const int k = solution_.dim_params();
  const QuadratureOptions qopt = quad_options(config_);

  std::vector<double> args(static_cast<std::size_t>(nb + k));
  for (int i = 0; i < nb; ++i) args[i] = base[i];
  for (int j = 0; j < k; ++j) args[nb + j] = lambda[j];
  const std::span<const double> args_span(args.data(), args.size());

  Eigen::VectorXd out(k);
  for (int j = 0; j < k; ++j) {
    std::vector<D1> to(static_cast<std::size_t>(nb));
    std::vector<D1> lam(static_cast<std::size_t>(k));
    for (int i = 0; i < nb; ++i) to[i] = D1(base[i], 0.0);
    for (int m = 0; m < k; ++m) lam[m] = D1(lambda[m], m == j ? 1.0 : 0.0);
    const D1 jet = segment_integral<D1>(system_, solution_, p0_,
                                        std::span<const D1>(to.data(), to.size()),
                                        std::span<const D1>(lam.data(), lam.size()), qopt);
    std::vector<double> w(static_cast<std::size_t>(nb + k), 0.0);
    w[nb + j] = 1.0;
    const double direct =
        pullback_pairing<double>(system_, solution_, args_span, std::span<const double>(w.data(), w.size()));
    out[j] = jet.d - direct;
  }
  return out;
}

double ReconstructionTables::h(std::span<const double> lambda) const {
  require(h_ready_, "h");
  const Eigen::VectorXd m = solution_.value(as_span(p0_), lambda);
  return system_.effective_hamiltonian->value(as_span(m));
}

Eigen::VectorXd ReconstructionTables::dh(std::span<const double> lambda) const {
  require(h_ready_, "h");
  const int nb = solution_.fibration.dim_base();
  const int k = solution_.dim_params();
  Eigen::VectorXd out(k);
  for (int j = 0; j < k; ++j) {
    std::vector<D1> args(static_cast<std::size_t>(nb + k));
    for (int i = 0; i < nb; ++i) args[i] = D1(p0_[i], 0.0);
    for (int m = 0; m < k; ++m) args[nb + m] = D1(lambda[m], m == j ? 1.0 : 0.0);
    const std::vector<D1> image =
        family_point<D1>(solution_, std::span<const D1>(args.data(), args.size()));
    out[j] = system_.effective_hamiltonian->value(std::span<const D1>(image.data(), image.size())).d;
  }
  return out;
}

ReconstructionTables build_W(const CompleteSolution& solution, const ContactSystem& system,
                             const TablesConfig& config) {
  ReconstructionTables tables(solution, system, config);
  const TablesConfig& cfg = tables.config_;
  std::mt19937_64 rng(cfg.seed);

  double worst = 0.0;
  Eigen::VectorXd worst_u = tables.p0_;
  Eigen::VectorXd worst_l = solution.param_box.midpoint();
  for (int s = 0; s < cfg.precondition_samples; ++s) {
    const Eigen::VectorXd u = solution.base_box.sample(rng);
    const Eigen::VectorXd l = solution.param_box.sample(rng);
    const Section section = solution.at_params(l);
    const Eigen::MatrixXd J = section.jacobian(as_span(u));
    const Eigen::VectorXd m = section.value(as_span(u));
    const Eigen::MatrixXd A = form_differential_at(tables.system_, as_span(m));
    const double res = (J.transpose() * A * J).cwiseAbs().maxCoeff();
    if (res > worst) {
      worst = res;
      worst_u = u;
      worst_l = l;
    }
  }
  if (worst > cfg.isotropy_tolerance) {
    std::ostringstream os;
    os << "build_W: family is not pseudo-isotropic for the effective form; the pulled-back "
          "differential reaches "
       << worst << " at " << point_label(worst_u, worst_l);
    throw std::runtime_error(os.str());
  }

  tables.w_ready_ = true;
  for (int s = 0; s < 3; ++s) {
    const Eigen::VectorXd u = solution.base_box.sample(rng);
    const Eigen::VectorXd l = solution.param_box.sample(rng);
    const double defect = tables.two_path_defect(as_span(u), as_span(l));
    if (defect > cfg.path_check_tolerance) {
      std::ostringstream os;
      os << "build_W: line integral is path dependent; two-path defect " << defect << " at "
         << point_label(u, l);
      throw std::runtime_error(os.str());
    }
  }
  return tables;
}

void build_phi(ReconstructionTables& tables) {
  tables.require(tables.w_ready_, "W");
  tables.phi_ready_ = true;
}

void build_h(ReconstructionTables& tables) {
  tables.require(tables.w_ready_, "W");
  const TablesConfig& cfg = tables.config_;
  const CompleteSolution& family = tables.solution_;
  std::mt19937_64 rng(cfg.seed + 1);

  double worst_rate = 0.0;
  Eigen::VectorXd rate_u = tables.p0_;
  Eigen::VectorXd rate_l = family.param_box.midpoint();
  for (int s = 0; s < cfg.precondition_samples; ++s) {
    const Eigen::VectorXd u = family.base_box.sample(rng);
    const Eigen::VectorXd l = family.param_box.sample(rng);
    const Eigen::VectorXd m = family.value(as_span(u), as_span(l));
    const double rate = std::abs(xi_of_H(tables.system_, as_span(m)));
    if (rate > worst_rate) {
      worst_rate = rate;
      rate_u = u;
      rate_l = l;
    }
  }
  if (worst_rate > cfg.isotropy_tolerance) {
    std::ostringstream os;
    os << "build_h: effective Reeb rate does not vanish; |xi'(H')| reaches " << worst_rate
       << " at " << point_label(rate_u, rate_l);
    throw std::runtime_error(os.str());
  }

  double worst_dev = 0.0;
  Eigen::VectorXd dev_u = tables.p0_;
  Eigen::VectorXd dev_l = family.param_box.midpoint();
  for (int s = 0; s < cfg.precondition_samples; ++s) {
    const Eigen::VectorXd l = family.param_box.sample(rng);
    const Eigen::VectorXd anchor = family.value(as_span(tables.p0_), as_span(l));
    const double h0 = tables.system_.effective_hamiltonian->value(as_span(anchor));
    for (int r = 0; r < 5; ++r) {
      const Eigen::VectorXd u = family.base_box.sample(rng);
      const Eigen::VectorXd m = family.value(as_span(u), as_span(l));
      const double dev = std::abs(tables.system_.effective_hamiltonian->value(as_span(m)) - h0);
      if (dev > worst_dev) {
        worst_dev = dev;
        dev_u = u;
        dev_l = l;
      }
    }
  }
  if (worst_dev > cfg.constancy_tolerance) {
    std::ostringstream os;
    os << "build_h: H' o sigma_lambda varies over the base box by " << worst_dev << " at "
       << point_label(dev_u, dev_l);
    throw std::runtime_error(os.str());
  }
  tables.h_ready_ = true;
}

Eigen::MatrixXd immersion_jacobian(const ReconstructionTables& tables,
                                   std::span<const double> lambda, std::span<const double> base) {
  if (!tables.phi_ready())
    throw std::logic_error("immersion_jacobian: phi stage not built");
  const CompleteSolution& family = tables.solution();
  const ContactSystem& sys = tables.system();
  const int nb = family.fibration.dim_base();
  const int k = family.dim_params();
  const QuadratureOptions qopt = quad_options(tables.config());
  const Eigen::VectorXd& p0 = tables.base_point();

  Eigen::MatrixXd out(k + 1, nb);
  for (int i = 0; i < nb; ++i) {
    std::vector<double> dir(static_cast<std::size_t>(nb + k), 0.0);
    dir[i] = 1.0;
    out(k, i) = tables.W_directional(base, lambda, std::span<const double>(dir.data(), dir.size()));
  }

  for (int j = 0; j < k; ++j) {
    for (int i = 0; i < nb; ++i) {
      // Mixed second derivative of W: lambda_j on the inner dual level, the
      // base direction p_i on the outer one.
      std::vector<D2> to(static_cast<std::size_t>(nb));
      std::vector<D2> lam(static_cast<std::size_t>(k));
      for (int m = 0; m < nb; ++m) to[m] = D2(D1(base[m], 0.0), D1(m == i ? 1.0 : 0.0, 0.0));
      for (int m = 0; m < k; ++m) lam[m] = D2(D1(lambda[m], m == j ? 1.0 : 0.0), D1(0.0, 0.0));
      const D2 jet = segment_integral<D2>(sys, family, p0,
                                          std::span<const D2>(to.data(), to.size()),
                                          std::span<const D2>(lam.data(), lam.size()), qopt);

      // Base derivative of the direct pairing with the lambda_j direction.
      std::vector<D1> args(static_cast<std::size_t>(nb + k));
      std::vector<D1> w(static_cast<std::size_t>(nb + k), D1(0.0, 0.0));
      for (int m = 0; m < nb; ++m) args[m] = D1(base[m], m == i ? 1.0 : 0.0);
      for (int m = 0; m < k; ++m) args[nb + m] = D1(lambda[m], 0.0);
      w[nb + j] = D1(1.0, 0.0);
      const D1 direct = pullback_pairing<D1>(sys, family,
                                             std::span<const D1>(args.data(), args.size()),
                                             std::span<const D1>(w.data(), w.size()));
      out(j, i) = jet.d.d - direct.d;
    }
  }
  return out;
}

int immersion_rank(const ReconstructionTables& tables, std::span<const double> lambda,
                   std::span<const double> base) {
  return matrix_rank(immersion_jacobian(tables, lambda, base));
}

double antimorphism_residual(const ReconstructionTables& tables, std::span<const double> base,
                             std::span<const double> lambda, std::span<const double> tangent) {
  if (!tables.phi_ready())
    throw std::logic_error("antimorphism_residual: phi stage not built");
  const CompleteSolution& family = tables.solution();
  const int nb = family.fibration.dim_base();
  const int k = family.dim_params();
  if (static_cast<int>(tangent.size()) != nb + k)
    throw std::invalid_argument("antimorphism_residual: tangent must span (base, lambda)");

  const Eigen::VectorXd ph = tables.phi(base, lambda);
  double theta = 0.0;
  for (int j = 0; j < k; ++j) theta += ph[j] * tangent[nb + j];
  const double dw = tables.W_directional(base, lambda, tangent);

  std::vector<double> args(static_cast<std::size_t>(nb + k));
  for (int i = 0; i < nb; ++i) args[i] = base[i];
  for (int j = 0; j < k; ++j) args[nb + j] = lambda[j];
  const double pulled = pullback_pairing<double>(
      tables.system(), family, std::span<const double>(args.data(), args.size()), tangent);

  return std::abs(theta - dw + pulled);
}

Trajectory reconstruct_trajectory(const ReconstructionTables& tables,
                                  std::span<const double> lambda,
                                  std::span<const double> start_base,
                                  const std::vector<double>& times, const ReconstructOptions& opt) {
  if (!tables.phi_ready() || !tables.h_ready())
    throw std::logic_error("reconstruct_trajectory: tables not fully built");
  const CompleteSolution& family = tables.solution();
  const ContactSystem& sys = tables.system();
  const int nb = family.fibration.dim_base();
  const int k = family.dim_params();
  if (static_cast<int>(start_base.size()) != nb)
    throw std::invalid_argument("reconstruct_trajectory: start point dimension mismatch");
  if (static_cast<int>(lambda.size()) != k)
    throw std::invalid_argument("reconstruct_trajectory: lambda dimension mismatch");

  // The algebraic system determines the base point only where (phi, W)
  // immerses the base.
  if (immersion_rank(tables, lambda, start_base) != nb) {
    throw std::runtime_error(
        "reconstruct_trajectory: (phi, W) is not an immersion at the start point");
  }

  const std::vector<double> lam(lambda.begin(), lambda.end());
  const std::span<const double> lam_span(lam.data(), lam.size());
  const Eigen::VectorXd phi0 = tables.phi(start_base, lam_span);
  const double w0 = tables.W(start_base, lam_span);
  const double hv = tables.h(lam_span);
  const Eigen::VectorXd dhv = tables.dh(lam_span);

  auto residual_at = [&](const Eigen::VectorXd& g, double t) -> Eigen::VectorXd {
    const std::span<const double> gs(g.data(), static_cast<std::size_t>(g.size()));
    Eigen::VectorXd r(k + 1);
    const Eigen::VectorXd ph = tables.phi(gs, lam_span);
    for (int j = 0; j < k; ++j) r[j] = ph[j] - (phi0[j] + t * dhv[j]);
    r[k] = tables.W(gs, lam_span) - (w0 + t * hv);
    return r;
  };

  // Rows of the step matrix come from the pull-back pairing directly; with a
  // closed pull-back (enforced when W was built) they equal the derivatives
  // of the residual, at a fraction of the quadrature cost.
  auto step_matrix = [&](const Eigen::VectorXd& g) -> Eigen::MatrixXd {
    Eigen::MatrixXd out(k + 1, nb);
    std::vector<double> args(static_cast<std::size_t>(nb + k));
    for (int i = 0; i < nb; ++i) args[i] = g[i];
    for (int j = 0; j < k; ++j) args[nb + j] = lam[j];
    const std::span<const double> args_span(args.data(), args.size());
    for (int i = 0; i < nb; ++i) {
      std::vector<double> w(static_cast<std::size_t>(nb + k), 0.0);
      w[i] = 1.0;
      out(k, i) = pullback_pairing<double>(sys, family, args_span,
                                           std::span<const double>(w.data(), w.size()));
    }
    for (int j = 0; j < k; ++j) {
      for (int i = 0; i < nb; ++i) {
        std::vector<D1> a1(static_cast<std::size_t>(nb + k));
        std::vector<D1> w1(static_cast<std::size_t>(nb + k), D1(0.0, 0.0));
        for (int m = 0; m < nb; ++m) a1[m] = D1(g[m], 0.0);
        for (int m = 0; m < k; ++m) a1[nb + m] = D1(lam[m], m == j ? 1.0 : 0.0);
        w1[i] = D1(1.0, 0.0);
        const double lambda_term =
            pullback_pairing<D1>(sys, family, std::span<const D1>(a1.data(), a1.size()),
                                 std::span<const D1>(w1.data(), w1.size()))
                .d;
        for (int m = 0; m < nb; ++m) a1[m] = D1(g[m], m == i ? 1.0 : 0.0);
        for (int m = 0; m < k; ++m) a1[nb + m] = D1(lam[m], 0.0);
        std::fill(w1.begin(), w1.end(), D1(0.0, 0.0));
        w1[nb + j] = D1(1.0, 0.0);
        const double base_term =
            pullback_pairing<D1>(sys, family, std::span<const D1>(a1.data(), a1.size()),
                                 std::span<const D1>(w1.data(), w1.size()))
                .d;
        out(j, i) = lambda_term - base_term;
      }
    }
    return out;
  };

  GaussNewtonOptions gopt;
  gopt.residual_accept = opt.residual_accept;
  gopt.max_iterations = opt.max_iterations;

  double last_residual = 0.0;
  auto solve_instant = [&](Eigen::VectorXd& g, double t) -> bool {
    const GaussNewtonResult res =
        gauss_newton([&](const Eigen::VectorXd& x) { return residual_at(x, t); },
                     [&](const Eigen::VectorXd& x) { return step_matrix(x); }, g, gopt);
    last_residual = res.residual_norm;
    if (!res.converged) return false;
    g = res.x;
    return true;
  };

  Trajectory out;
  out.method = "quadrature";
  Eigen::VectorXd gamma = Eigen::Map<const Eigen::VectorXd>(start_base.data(), nb);
  double t_prev = 0.0;
  for (const double t : times) {
    Eigen::VectorXd g = gamma;
    if (!solve_instant(g, t)) {
      g = gamma;
      bool ok = true;
      for (int s = 1; s <= opt.substeps_on_failure; ++s) {
        const double ts = t_prev + (t - t_prev) * static_cast<double>(s) / opt.substeps_on_failure;
        if (!solve_instant(g, ts)) {
          ok = false;
          break;
        }
      }
      if (!ok) {
        std::ostringstream os;
        os << "reconstruct_trajectory: no convergence at t=" << t << " (residual "
           << last_residual << ")";
        throw ConvergenceError(os.str());
      }
    }
    gamma = g;
    t_prev = t;
    out.times.push_back(t);
    out.states.push_back(family.value(as_span(gamma), lam_span));
  }
  return out;
}

RescaleMode RescaleMode::explicit_factor(FieldPtr g) {
  RescaleMode mode;
  mode.kind = RescaleKind::ExplicitFactor;
  mode.factor = std::move(g);
  return mode;
}

RescaleMode RescaleMode::reciprocal() {
  RescaleMode mode;
  mode.kind = RescaleKind::ReciprocalHamiltonian;
  return mode;
}

Trajectory reconstruct_rescaled(const ContactSystem& system, const CompleteSolution& solution,
                                const RescaleMode& mode, std::span<const double> lambda,
                                std::span<const double> start_base,
                                const std::vector<double>& times, const TablesConfig& config,
                                const ReconstructOptions& opt) {
  std::mt19937_64 rng(config.seed + 2);
  ContactSystem effective = system;
  if (mode.kind == RescaleKind::ExplicitFactor) {
    if (!mode.factor)
      throw std::invalid_argument("reconstruct_rescaled: explicit mode requires a factor");
    effective = ContactSystem::scaled(system.n, system.hamiltonian, mode.factor);
    double worst = 0.0;
    Eigen::VectorXd worst_u = solution.base_box.midpoint();
    Eigen::VectorXd worst_l = solution.param_box.midpoint();
    for (int s = 0; s < config.precondition_samples; ++s) {
      const Eigen::VectorXd u = solution.base_box.sample(rng);
      const Eigen::VectorXd l = solution.param_box.sample(rng);
      const Eigen::VectorXd m = solution.value(as_span(u), as_span(l));
      const double rate = std::abs(xi_of_H(effective, as_span(m)));
      if (rate > worst) {
        worst = rate;
        worst_u = u;
        worst_l = l;
      }
    }
    if (worst > config.isotropy_tolerance) {
      std::ostringstream os;
      os << "reconstruct_rescaled: factor violates the rate equation; |xi'(H')| reaches "
         << worst << " at " << point_label(worst_u, worst_l);
      throw std::runtime_error(os.str());
    }
  } else {
    double lowest = std::numeric_limits<double>::infinity();
    double highest = -std::numeric_limits<double>::infinity();
    double closest = std::numeric_limits<double>::infinity();
    Eigen::VectorXd worst_u = solution.base_box.midpoint();
    Eigen::VectorXd worst_l = solution.param_box.midpoint();
    for (int s = 0; s < config.precondition_samples; ++s) {
      const Eigen::VectorXd u = solution.base_box.sample(rng);
      const Eigen::VectorXd l = solution.param_box.sample(rng);
      const Eigen::VectorXd m = solution.value(as_span(u), as_span(l));
      const double value = system.hamiltonian->value(as_span(m));
      lowest = std::min(lowest, value);
      highest = std::max(highest, value);
      if (std::abs(value) < closest) {
        closest = std::abs(value);
        worst_u = u;
        worst_l = l;
      }
    }
    if (closest < 1e-9 || (lowest < 0.0 && highest > 0.0)) {
      std::ostringstream os;
      os << "reconstruct_rescaled: Hamiltonian vanishes on the family image; |H| reaches "
         << closest << " at " << point_label(worst_u, worst_l);
      throw std::runtime_error(os.str());
    }
    effective = ContactSystem::reciprocal_rescaling(system.n, system.hamiltonian);
  }

  ReconstructionTables tables = build_W(solution, effective, config);
  build_phi(tables);
  build_h(tables);
  return reconstruct_trajectory(tables, lambda, start_base, times, opt);
}

}  // namespace cq
