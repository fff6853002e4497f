#include "contactq/zero_level.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <numeric>
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

// Pairing of the reference form with the family push-forward of a (base,
// lambda) tangent w at args = (p, lambda); the fiber components are pushed
// forward with one extra dual level.
template <class T>
T reference_pairing(const CompleteSolution& family, std::span<const T> args,
                    std::span<const T> w) {
  using DT = Dual<T>;
  const std::vector<int> bidx = family.fibration.base_indices();
  const std::vector<int> fidx = family.fibration.fiber_indices();
  const int dim = family.fibration.dim_total();
  const int n = (dim - 1) / 2;

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
  T out = u[dim - 1];
  for (int i = 0; i < n; ++i) out += m[n + i] * u[i];
  return out;
}

// dH/dz of the reference Hamiltonian: the Reeb rate, independent of the
// presentation the system carries.
double reference_rate(const ContactSystem& system, std::span<const double> state) {
  return field_gradient(*system.hamiltonian, state).back();
}

}  // namespace

LevelSetChart::LevelSetChart(ContactSystem system, Box base_box, LevelChartConfig config)
    : system_(std::move(system)), box_(std::move(base_box)), config_(std::move(config)) {
  if (box_.dim() != 2 * system_.n)
    throw std::invalid_argument("LevelSetChart: box must span the (x, y) coordinates");

  std::mt19937_64 rng(config_.seed);
  double lowest = std::numeric_limits<double>::infinity();
  double first_sign = 0.0;
  for (int s = 0; s < config_.samples; ++s) {
    const Eigen::VectorXd xy = box_.sample(rng);
    const Eigen::VectorXd m = lift(as_span(xy));
    const double rate = field_gradient(*system_.hamiltonian, as_span(m)).back();
    lowest = std::min(lowest, std::abs(rate));
    const double sign = rate > 0.0 ? 1.0 : -1.0;
    if (first_sign == 0.0) first_sign = sign;
    if (sign != first_sign)
      throw std::runtime_error("build_level_chart: dH/dz changes sign over the box");
  }
  if (lowest < config_.rate_floor) {
    std::ostringstream os;
    os << "build_level_chart: |dH/dz| reaches " << lowest
       << " on the box, below the configured floor " << config_.rate_floor;
    throw std::runtime_error(os.str());
  }
}

double LevelSetChart::zeta(std::span<const double> xy) const {
  const int dim = system_.dim();
  if (static_cast<int>(xy.size()) != dim - 1)
    throw std::invalid_argument("zeta: (x, y) dimension mismatch");
  const FieldPtr& H = system_.hamiltonian;
  auto level = [&](auto z) {
    using Z = decltype(z);
    std::vector<Z> args(static_cast<std::size_t>(dim), Z{});
    for (int i = 0; i < dim - 1; ++i) args[i] = Z(xy[i]);
    args[dim - 1] = z;
    return H->value(std::span<const Z>(args.data(), args.size()));
  };
  return newton_scalar(level, config_.initial_z, {}, "build_level_chart");
}

Eigen::VectorXd LevelSetChart::lift(std::span<const double> xy) const {
  const int dim = system_.dim();
  Eigen::VectorXd m(dim);
  for (int i = 0; i < dim - 1; ++i) m[i] = xy[i];
  m[dim - 1] = zeta(xy);
  return m;
}

Eigen::VectorXd LevelSetChart::zeta_gradient(std::span<const double> xy) const {
  const int dim = system_.dim();
  const Eigen::VectorXd m = lift(xy);
  const std::vector<double> grad = field_gradient(*system_.hamiltonian, as_span(m));
  Eigen::VectorXd out(dim - 1);
  for (int i = 0; i < dim - 1; ++i) out[i] = -grad[i] / grad[dim - 1];
  return out;
}

Eigen::MatrixXd LevelSetChart::tangent_basis(std::span<const double> xy) const {
  const int dim = system_.dim();
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(dim, dim - 1);
  J.topRows(dim - 1).setIdentity();
  J.row(dim - 1) = zeta_gradient(xy).transpose();
  return J;
}

Eigen::MatrixXd LevelSetChart::restricted_differential(std::span<const double> xy) const {
  const Eigen::MatrixXd J = tangent_basis(xy);
  const Eigen::MatrixXd A = reference_form_differential(system_.n);
  return J.transpose() * A * J;
}

LevelSetChart build_level_chart(const ContactSystem& system, const Box& box,
                                const LevelChartConfig& config) {
  return LevelSetChart(system, box, config);
}

RestrictedSolution::RestrictedSolution(CompleteSolution parent, LevelSetChart chart, Box base_sub,
                                       Box param_sub, RestrictionConfig config)
    : parent_(std::move(parent)),
      chart_(std::move(chart)),
      base_sub_(std::move(base_sub)),
      param_sub_(std::move(param_sub)),
      config_(config) {
  if (chart_.system().dim() != parent_.fibration.dim_total())
    throw std::invalid_argument("RestrictedSolution: chart and family dimensions disagree");
  if (base_sub_.dim() != parent_.base_box.dim() || param_sub_.dim() != parent_.param_box.dim())
    throw std::invalid_argument("RestrictedSolution: sub-box dimensions disagree");
  if (!parent_.base_box.contains(base_sub_.lo, 1e-12) ||
      !parent_.base_box.contains(base_sub_.hi, 1e-12) ||
      !parent_.param_box.contains(param_sub_.lo, 1e-12) ||
      !parent_.param_box.contains(param_sub_.hi, 1e-12))
    throw std::invalid_argument("RestrictedSolution: sub-boxes must lie inside the family boxes");

  for (int i = 0; i < base_sub_.dim(); ++i)
    if (base_sub_.hi[i] > base_sub_.lo[i]) free_base_.push_back(i);
  for (int j = 0; j < param_sub_.dim(); ++j)
    if (param_sub_.hi[j] > param_sub_.lo[j]) free_param_.push_back(j);

  const int n = chart_.system().n;
  const FieldPtr& H = chart_.system().hamiltonian;
  const Eigen::MatrixXd A = reference_form_differential(n);
  std::mt19937_64 rng(config_.seed);
  for (int s = 0; s < config_.samples; ++s) {
    const Eigen::VectorXd u = base_sub_.sample(rng);
    const Eigen::VectorXd l = param_sub_.sample(rng);
    const Eigen::VectorXd m = parent_.value(as_span(u), as_span(l));

    const double membership = std::abs(H->value(as_span(m)));
    report_.max_membership = std::max(report_.max_membership, membership);
    if (membership > config_.membership_tolerance) {
      std::ostringstream os;
      os << "restrict_solution: |H o Sigma| = " << membership << " at " << point_label(u, l)
         << "; the sub-boxes leave the zero level";
      throw std::runtime_error(os.str());
    }
    if (!chart_.base_box().contains(m.head(2 * n), 1e-9)) {
      std::ostringstream os;
      os << "restrict_solution: family image leaves the chart box at " << point_label(u, l);
      throw std::invalid_argument(os.str());
    }

    const Section section = parent_.at_params(l);
    const Eigen::MatrixXd J = section.jacobian(as_span(u));
    Eigen::MatrixXd Jf(J.rows(), static_cast<int>(free_base_.size()));
    for (std::size_t i = 0; i < free_base_.size(); ++i) Jf.col(i) = J.col(free_base_[i]);
    const Eigen::VectorXd c = reference_form_at(n, as_span(m));

    const double one_form =
        Jf.cols() == 0 ? 0.0 : (Jf.transpose() * c).cwiseAbs().maxCoeff();
    const double symplectic =
        Jf.cols() == 0 ? 0.0 : (Jf.transpose() * A * Jf).cwiseAbs().maxCoeff();
    report_.max_one_form = std::max(report_.max_one_form, one_form);
    report_.max_symplectic = std::max(report_.max_symplectic, symplectic);
    if (one_form > config_.isotropy_tolerance || symplectic > config_.isotropy_tolerance) {
      std::ostringstream os;
      os << "restrict_solution: restriction is not isotropic (one-form " << one_form
         << ", differential " << symplectic << ") at " << point_label(u, l);
      throw std::runtime_error(os.str());
    }
  }
}

Eigen::VectorXd RestrictedSolution::phi_hat(std::span<const double> base,
                                            std::span<const double> lambda) const {
  const int nb = parent_.fibration.dim_base();
  const int k = parent_.dim_params();
  if (static_cast<int>(base.size()) != nb || static_cast<int>(lambda.size()) != k)
    throw std::invalid_argument("phi_hat: argument dimension mismatch");

  std::vector<double> args(static_cast<std::size_t>(nb + k));
  for (int i = 0; i < nb; ++i) args[i] = base[i];
  for (int j = 0; j < k; ++j) args[nb + j] = lambda[j];
  const std::span<const double> args_span(args.data(), args.size());

  Eigen::VectorXd out(static_cast<int>(free_param_.size()));
  for (std::size_t j = 0; j < free_param_.size(); ++j) {
    std::vector<double> w(static_cast<std::size_t>(nb + k), 0.0);
    w[nb + free_param_[j]] = 1.0;
    out[j] = -reference_pairing<double>(parent_, args_span,
                                        std::span<const double>(w.data(), w.size()));
  }
  return out;
}

Eigen::MatrixXd RestrictedSolution::phi_hat_jacobian(std::span<const double> base,
                                                     std::span<const double> lambda) const {
  const int nb = parent_.fibration.dim_base();
  const int k = parent_.dim_params();
  if (static_cast<int>(base.size()) != nb || static_cast<int>(lambda.size()) != k)
    throw std::invalid_argument("phi_hat_jacobian: argument dimension mismatch");

  Eigen::MatrixXd out(static_cast<int>(free_param_.size()), static_cast<int>(free_base_.size()));
  for (std::size_t i = 0; i < free_base_.size(); ++i) {
    std::vector<D1> args(static_cast<std::size_t>(nb + k));
    for (int m = 0; m < nb; ++m) args[m] = D1(base[m], m == free_base_[i] ? 1.0 : 0.0);
    for (int m = 0; m < k; ++m) args[nb + m] = D1(lambda[m], 0.0);
    const std::span<const D1> args_span(args.data(), args.size());
    for (std::size_t j = 0; j < free_param_.size(); ++j) {
      std::vector<D1> w(static_cast<std::size_t>(nb + k), D1(0.0, 0.0));
      w[nb + free_param_[j]] = D1(1.0, 0.0);
      out(static_cast<int>(j), static_cast<int>(i)) =
          -reference_pairing<D1>(parent_, args_span, std::span<const D1>(w.data(), w.size())).d;
    }
  }
  return out;
}

RestrictedSolution restrict_solution(const CompleteSolution& solution, const LevelSetChart& chart,
                                     const Box& base_sub, const Box& param_sub,
                                     const RestrictionConfig& config) {
  return RestrictedSolution(solution, chart, base_sub, param_sub, config);
}

PhiHatMap build_phi_hat(const RestrictedSolution& restricted) {
  std::mt19937_64 rng(restricted.config().seed + 3);
  const int nb0 = static_cast<int>(restricted.free_base_axes().size());
  for (int s = 0; s < restricted.config().samples; ++s) {
    const Eigen::VectorXd u = restricted.base_box().sample(rng);
    const Eigen::VectorXd l = restricted.param_box().sample(rng);
    const Eigen::MatrixXd J = restricted.phi_hat_jacobian(as_span(u), as_span(l));
    if (matrix_rank(J) < nb0) {
      std::ostringstream os;
      os << "build_phi_hat: momenta are rank deficient at " << point_label(u, l);
      throw std::runtime_error(os.str());
    }
  }
  auto keep = std::make_shared<const RestrictedSolution>(restricted);
  return [keep](std::span<const double> base, std::span<const double> lambda) {
    return keep->phi_hat(base, lambda);
  };
}

double varsigma(const RestrictedSolution& restricted, std::span<const double> base,
                std::span<const double> lambda) {
  const Eigen::VectorXd m = restricted.parent().value(base, lambda);
  return reference_rate(restricted.system(), as_span(m));
}

Trajectory integrate_on_zero_level(const RestrictedSolution& restricted,
                                   std::span<const double> lambda,
                                   std::span<const double> start_base,
                                   const std::vector<double>& times,
                                   const ZeroLevelOptions& opt) {
  const CompleteSolution& family = restricted.parent();
  const int nb = family.fibration.dim_base();
  const int k = family.dim_params();
  if (static_cast<int>(start_base.size()) != nb || static_cast<int>(lambda.size()) != k)
    throw std::invalid_argument("integrate_on_zero_level: argument dimension mismatch");

  const Eigen::VectorXd p_start = to_vector(start_base);
  const Eigen::VectorXd lam = to_vector(lambda);
  if (!restricted.base_box().contains(p_start, 1e-8))
    throw std::invalid_argument("integrate_on_zero_level: start outside the restricted base box");
  if (!restricted.param_box().contains(lam, 1e-8))
    throw std::invalid_argument(
        "integrate_on_zero_level: lambda outside the restricted parameter box");

  const std::vector<int>& free_axes = restricted.free_base_axes();
  const int nb0 = static_cast<int>(free_axes.size());
  const int khat = static_cast<int>(restricted.free_param_axes().size());

  Trajectory out;
  out.method = "level-set";

  const Eigen::VectorXd phi0 = restricted.phi_hat(start_base, lambda);
  auto stationary = [&]() {
    const Eigen::VectorXd state = family.value(start_base, lambda);
    for (const double t : times) {
      out.times.push_back(t);
      out.states.push_back(state);
    }
    return out;
  };
  if (khat == 0 || phi0.cwiseAbs().maxCoeff() < 1e-12) return stationary();

  const Eigen::MatrixXd J0 = restricted.phi_hat_jacobian(start_base, lambda);
  if (matrix_rank(J0) < nb0)
    throw std::runtime_error(
        "integrate_on_zero_level: momenta do not immerse the base at the start");
  if (nb0 == 0)
    throw std::runtime_error(
        "integrate_on_zero_level: nonzero momenta with no free base coordinates");

  // Chart selection: walk the components by decreasing start value, keeping
  // those whose gradient row grows the rank. The immersion guarantees the
  // walk completes; the value ordering makes the scalar coordinate psi_1
  // nonzero whenever any valid pivot exists.
  std::vector<int> order(khat);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return std::abs(phi0[a]) > std::abs(phi0[b]); });
  std::vector<int> selected;
  for (const int idx : order) {
    if (static_cast<int>(selected.size()) == nb0) break;
    Eigen::MatrixXd trial(static_cast<int>(selected.size()) + 1, nb0);
    for (std::size_t r = 0; r < selected.size(); ++r) trial.row(r) = J0.row(selected[r]);
    trial.row(static_cast<int>(selected.size())) = J0.row(idx);
    if (matrix_rank(trial) > static_cast<int>(selected.size())) selected.push_back(idx);
  }
  if (static_cast<int>(selected.size()) < nb0)
    throw std::runtime_error("integrate_on_zero_level: chart selection failed");
  const double psi1_start = phi0[selected[0]];
  if (std::abs(psi1_start) < 1e-12)
    throw std::runtime_error(
        "integrate_on_zero_level: chart components vanish at the start; re-pivoting failed");

  Eigen::VectorXd ratios(nb0);
  for (int i = 0; i < nb0; ++i) ratios[i] = phi0[selected[i]] / psi1_start;

  std::vector<double> base_template(start_base.begin(), start_base.end());
  auto assemble = [&](const Eigen::VectorXd& free_vals) {
    std::vector<double> full = base_template;
    for (int i = 0; i < nb0; ++i) full[free_axes[i]] = free_vals[i];
    return full;
  };

  Eigen::VectorXd warm(nb0);
  for (int i = 0; i < nb0; ++i) warm[i] = start_base[free_axes[i]];

  auto invert_chart = [&](double nu) -> std::vector<double> {
    auto residual = [&](const Eigen::VectorXd& v) {
      const std::vector<double> full = assemble(v);
      const Eigen::VectorXd ph = restricted.phi_hat(full, lambda);
      Eigen::VectorXd r(nb0);
      for (int i = 0; i < nb0; ++i) r[i] = ph[selected[i]] - nu * ratios[i];
      return r;
    };
    auto jacobian = [&](const Eigen::VectorXd& v) {
      const std::vector<double> full = assemble(v);
      const Eigen::MatrixXd J = restricted.phi_hat_jacobian(full, lambda);
      Eigen::MatrixXd rows(nb0, nb0);
      for (int i = 0; i < nb0; ++i) rows.row(i) = J.row(selected[i]);
      return rows;
    };
    NewtonOptions nopt;
    nopt.max_iterations = opt.max_iterations;
    const VectorNewtonResult res =
        newton_vector(residual, jacobian, warm, nopt, "integrate_on_zero_level");
    if (!res.converged)
      throw ConvergenceError("integrate_on_zero_level: chart inversion stalled (residual " +
                             std::to_string(res.residual_norm) + ")");
    warm = res.x;
    return assemble(res.x);
  };

  double sign_ref = 0.0;
  auto F = [&](double nu) -> double {
    const std::vector<double> full = invert_chart(nu);
    const double value = varsigma(restricted, full, lambda) * nu;
    if (sign_ref != 0.0 &&
        (value * sign_ref <= 0.0 || std::abs(value) < opt.stationary_floor)) {
      throw ConvergenceError(
          "integrate_on_zero_level: F changes sign inside the inversion range at psi = " +
          std::to_string(nu));
    }
    return value;
  };

  const double f_start = F(psi1_start);
  if (std::abs(f_start) < opt.stationary_floor) return stationary();
  sign_ref = f_start > 0.0 ? 1.0 : -1.0;

  const QuadratureOptions qopt{opt.quadrature_tolerance, opt.quadrature_max_depth};
  auto integrand = [&](double mu) { return 1.0 / F(mu); };

  double nu_cur = psi1_start;
  double t_cur = 0.0;
  for (const double t : times) {
    if (std::abs(t - t_cur) > opt.time_tolerance) {
      // Exponential predictor, exact whenever varsigma is constant.
      const double local_rate = F(nu_cur) / nu_cur;
      double nu = nu_cur * std::exp(std::clamp(local_rate * (t - t_cur), -40.0, 40.0));
      double g = t_cur + integrate_adaptive(integrand, nu_cur, nu, qopt) - t;
      int iterations = 0;
      while (std::abs(g) > opt.time_tolerance * (1.0 + std::abs(t))) {
        if (++iterations > opt.max_iterations)
          throw ConvergenceError("integrate_on_zero_level: time inversion stalled at t = " +
                                 std::to_string(t));
        double step = -g * F(nu);
        double nu_new = nu + step;
        double g_new = t_cur + integrate_adaptive(integrand, nu_cur, nu_new, qopt) - t;
        int halvings = 0;
        while (!(std::abs(g_new) < std::abs(g)) && halvings < 40) {
          step *= 0.5;
          nu_new = nu + step;
          g_new = t_cur + integrate_adaptive(integrand, nu_cur, nu_new, qopt) - t;
          ++halvings;
        }
        if (!(std::abs(g_new) < std::abs(g)))
          throw ConvergenceError(
              "integrate_on_zero_level: damping failed during time inversion at t = " +
              std::to_string(t));
        nu = nu_new;
        g = g_new;
      }
      t_cur = t;
      nu_cur = nu;
    }
    const std::vector<double> full = invert_chart(nu_cur);
    out.times.push_back(t);
    out.states.push_back(family.value(full, lambda));
  }
  return out;
}

FlowRegion classify_start(const ContactSystem& system, std::span<const double> state,
                          const RegionOptions& opt) {
  if (static_cast<int>(state.size()) != system.dim())
    throw std::invalid_argument("classify_start: state dimension mismatch");
  const double level = std::abs(system.hamiltonian->value(state));
  if (level >= opt.ambiguity_factor * opt.level_tolerance) return FlowRegion::NonzeroLevel;
  if (level >= opt.level_tolerance) {
    std::ostringstream os;
    os << "classify_start: |H| = " << level
       << " falls in the ambiguity band of the level tolerance; classification is not guessed";
    throw std::runtime_error(os.str());
  }
  const double rate = std::abs(reference_rate(system, state));
  if (rate >= opt.ambiguity_factor * opt.rate_tolerance) return FlowRegion::ZeroLevel;
  if (rate >= opt.rate_tolerance) {
    std::ostringstream os;
    os << "classify_start: |dH/dz| = " << rate
       << " falls in the ambiguity band of the rate tolerance; classification is not guessed";
    throw std::runtime_error(os.str());
  }
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> offset(-opt.neighborhood_radius,
                                                opt.neighborhood_radius);
  std::vector<double> probe(state.begin(), state.end());
  for (int s = 0; s < opt.neighborhood_samples; ++s) {
    for (std::size_t i = 0; i < probe.size(); ++i) probe[i] = state[i] + offset(rng);
    if (std::abs(reference_rate(system, probe)) >= opt.rate_tolerance)
      throw std::runtime_error(
          "classify_start: start lies on the boundary of the frozen-rate region and must be "
          "studied separately");
  }
  return FlowRegion::FrozenRate;
}

SplitResult split_and_integrate(const ContactSystem& system, const CompleteSolution& solution,
                                const std::optional<RestrictedSolution>& restriction,
                                std::span<const double> start_state,
                                const std::vector<double>& times, const SplitOptions& opt) {
  SplitResult out;
  out.region = classify_start(system, start_state, opt.region);
  switch (out.region) {
    case FlowRegion::NonzeroLevel: {
      const SolutionInverse inv = invert_solution(solution, start_state, opt.inversion);
      out.trajectory =
          reconstruct_rescaled(system, solution, RescaleMode::reciprocal(), as_span(inv.lambda),
                               as_span(inv.base), times, opt.tables, opt.solve);
      break;
    }
    case FlowRegion::ZeroLevel: {
      if (!restriction)
        throw std::invalid_argument(
            "split_and_integrate: a zero-level start needs a declared restriction");
      const SolutionInverse inv =
          invert_solution(restriction->parent(), start_state, opt.inversion);
      if (!restriction->base_box().contains(inv.base, 1e-7) ||
          !restriction->param_box().contains(inv.lambda, 1e-7))
        throw std::runtime_error(
            "split_and_integrate: start is not on the declared restriction");
      out.trajectory = integrate_on_zero_level(*restriction, as_span(inv.lambda),
                                               as_span(inv.base), times, opt.zero_level);
      break;
    }
    case FlowRegion::FrozenRate: {
      const SolutionInverse inv = invert_solution(solution, start_state, opt.inversion);
      ReconstructionTables tables = build_W(solution, system, opt.tables);
      build_phi(tables);
      build_h(tables);
      out.trajectory = reconstruct_trajectory(tables, as_span(inv.lambda), as_span(inv.base),
                                              times, opt.solve);
      break;
    }
  }
  return out;
}

}  // namespace cq
