#include "contactq/systems.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>

#include "contactq/expr.hpp"
#include "contactq/linalg.hpp"
#include "contactq/quadrature.hpp"
#include "contactq/solvers.hpp"

namespace cq {
namespace {

std::string point_text(std::span<const double> v) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) os << ", ";
    os << v[i];
  }
  os << ")";
  return os.str();
}

std::string point_text(const Eigen::VectorXd& v) {
  return point_text(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
}

// Partial derivative of an expression at dual-promoted arguments: one extra
// dual level, seeded along the requested coordinate.
template <class T>
T expr_partial(const Expr& e, std::span<const T> x, int index) {
  std::vector<Dual<T>> buf(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) buf[k] = Dual<T>(x[k]);
  buf[static_cast<std::size_t>(index)].d = T(1.0);
  return e.eval(std::span<const Dual<T>>(buf)).d;
}

Eigen::VectorXd expr_gradient(const Expr& e, const Eigen::VectorXd& x) {
  std::vector<D1> buf(static_cast<std::size_t>(x.size()));
  for (Eigen::Index i = 0; i < x.size(); ++i) buf[static_cast<std::size_t>(i)] = D1(x[i]);
  Eigen::VectorXd grad(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    buf[static_cast<std::size_t>(i)].d = 1.0;
    grad[i] = e.eval(std::span<const D1>(buf)).d;
    buf[static_cast<std::size_t>(i)].d = 0.0;
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Transport family
// ---------------------------------------------------------------------------

std::vector<std::string> transport_base_names(int n) {
  if (n == 1) return {"x"};
  std::vector<std::string> names;
  for (int i = 1; i <= n; ++i) names.push_back("x" + std::to_string(i));
  return names;
}

std::vector<std::string> transport_phase_names(int n) {
  if (n == 1) return {"x", "y", "z"};
  std::vector<std::string> names = transport_base_names(n);
  for (int i = 1; i <= n; ++i) names.push_back("y" + std::to_string(i));
  names.push_back("z");
  return names;
}

// H = a0 (z - Phi) + a^j (y_j + dPhi/dx_j), over the phase chart (x, y, z).
class TransportHamiltonianField final : public FieldBase<TransportHamiltonianField> {
 public:
  TransportHamiltonianField(int n, double a0, std::vector<Expr> a, Expr phi)
      : n_(n), a0_(a0), a_(std::move(a)), phi_(std::move(phi)) {}

  int arity() const override { return 2 * n_ + 1; }

  template <class T>
  T eval_impl(std::span<const T> args) const {
    const std::span<const T> x = args.first(static_cast<std::size_t>(n_));
    T h = a0_ * (args[static_cast<std::size_t>(2 * n_)] - phi_.eval(x));
    for (int j = 0; j < n_; ++j)
      h += a_[static_cast<std::size_t>(j)].eval(x) *
           (args[static_cast<std::size_t>(n_ + j)] + expr_partial(phi_, x, j));
    return h;
  }

 private:
  int n_;
  double a0_;
  std::vector<Expr> a_;
  Expr phi_;
};

// y_i o Sigma = e^{-f} sum_k l^k dg_k/dx_i - dPhi/dx_i, over (x, l0, l1..ln).
class TransportMomentumField final : public FieldBase<TransportMomentumField> {
 public:
  TransportMomentumField(int n, int component, Expr phi, Expr f, std::vector<Expr> g)
      : n_(n), component_(component), phi_(std::move(phi)), f_(std::move(f)), g_(std::move(g)) {}

  int arity() const override { return 2 * n_ + 1; }

  template <class T>
  T eval_impl(std::span<const T> args) const {
    const std::span<const T> x = args.first(static_cast<std::size_t>(n_));
    T weighted{};
    for (int k = 0; k < n_; ++k)
      weighted += args[static_cast<std::size_t>(n_ + 1 + k)] *
                  expr_partial(g_[static_cast<std::size_t>(k)], x, component_);
    return exp(-f_.eval(x)) * weighted - expr_partial(phi_, x, component_);
  }

 private:
  int n_;
  int component_;
  Expr phi_;
  Expr f_;
  std::vector<Expr> g_;
};

// z o Sigma = Phi + l0 e^{-f}, over (x, l0, l1..ln).
class TransportActionField final : public FieldBase<TransportActionField> {
 public:
  TransportActionField(int n, Expr phi, Expr f)
      : n_(n), phi_(std::move(phi)), f_(std::move(f)) {}

  int arity() const override { return 2 * n_ + 1; }

  template <class T>
  T eval_impl(std::span<const T> args) const {
    const std::span<const T> x = args.first(static_cast<std::size_t>(n_));
    return phi_.eval(x) + args[static_cast<std::size_t>(n_)] * exp(-f_.eval(x));
  }

 private:
  int n_;
  Expr phi_;
  Expr f_;
};

}  // namespace

Eigen::VectorXd ThermoFamily::reduced_field(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != n)
    throw std::invalid_argument("ThermoFamily::reduced_field: expected " + std::to_string(n) +
                                " base coordinates");
  Eigen::VectorXd out(n);
  for (int j = 0; j < n; ++j) out[j] = a[static_cast<std::size_t>(j)]->value(x);
  return out;
}

double ThermoFamily::reduced_hamiltonian(std::span<const double> lambda) const {
  if (static_cast<int>(lambda.size()) != n + 1)
    throw std::invalid_argument("ThermoFamily::reduced_hamiltonian: expected " +
                                std::to_string(n + 1) + " parameters");
  double h = a0 * lambda[0];
  for (int k = 0; k < n; ++k) h += c[static_cast<std::size_t>(k)] * lambda[static_cast<std::size_t>(1 + k)];
  return h;
}

ThermoFamily build_thermo_family(const ThermoSpec& spec) {
  const int n = spec.n;
  if (n < 1) throw std::invalid_argument("build_thermo_family: n must be positive");
  if (static_cast<int>(spec.a.size()) != n)
    throw std::invalid_argument("build_thermo_family: expected " + std::to_string(n) +
                                " direction coefficients a");
  if (static_cast<int>(spec.g.size()) != n)
    throw std::invalid_argument("build_thermo_family: expected " + std::to_string(n) +
                                " transported functions g");
  if (static_cast<int>(spec.c.size()) != n)
    throw std::invalid_argument("build_thermo_family: expected " + std::to_string(n) +
                                " transport constants c");
  if (spec.base_box.dim() != n)
    throw std::invalid_argument("build_thermo_family: the base box must have dimension n");
  if (spec.param_box.dim() != n + 1)
    throw std::invalid_argument("build_thermo_family: the parameter box must have dimension n + 1");

  const std::vector<std::string> names = transport_base_names(n);
  std::vector<Expr> a_exprs, g_exprs;
  a_exprs.reserve(spec.a.size());
  g_exprs.reserve(spec.g.size());
  for (const std::string& text : spec.a) a_exprs.push_back(parse_expression(text, names));
  for (const std::string& text : spec.g) g_exprs.push_back(parse_expression(text, names));
  const Expr phi_expr = parse_expression(spec.phi, names);
  const Expr f_expr = parse_expression(spec.f, names);

  // Sampled verification of the transport equations and of the independence
  // of the g_k; every claim the packaged family makes later rests on these.
  std::mt19937_64 rng(spec.seed);
  const int samples = std::max(1, spec.samples);
  const double tol = spec.residual_tolerance;
  bool direction_seen = false;
  for (int s = 0; s < samples; ++s) {
    const Eigen::VectorXd x = spec.base_box.sample(rng);
    const std::span<const double> xs(x.data(), static_cast<std::size_t>(n));
    Eigen::VectorXd a_vals(n);
    for (int j = 0; j < n; ++j) a_vals[j] = a_exprs[static_cast<std::size_t>(j)].eval(xs);
    if (a_vals.cwiseAbs().maxCoeff() > 0.0) direction_seen = true;

    const double f_defect = a_vals.dot(expr_gradient(f_expr, x)) + spec.a0;
    if (std::abs(f_defect) > tol)
      throw std::runtime_error("build_thermo_family: f fails its transport equation a.grad(f) = -a0 "
                               "(residual " + std::to_string(f_defect) + " at x = " + point_text(x) +
                               ")");

    Eigen::MatrixXd dg(n, n);
    for (int k = 0; k < n; ++k) {
      const Eigen::VectorXd grad_k = expr_gradient(g_exprs[static_cast<std::size_t>(k)], x);
      dg.row(k) = grad_k.transpose();
      const double g_defect = a_vals.dot(grad_k) - spec.c[static_cast<std::size_t>(k)];
      if (std::abs(g_defect) > tol)
        throw std::runtime_error("build_thermo_family: g_" + std::to_string(k + 1) +
                                 " fails its transport equation a.grad(g) = c (residual " +
                                 std::to_string(g_defect) + " at x = " + point_text(x) + ")");
    }
    const int rank = matrix_rank(dg);
    if (rank != n)
      throw std::runtime_error("build_thermo_family: the transported functions are dependent at x = " +
                               point_text(x) + " (rank " + std::to_string(rank) + " of " +
                               std::to_string(n) + ")");
  }
  if (!direction_seen)
    throw std::runtime_error("build_thermo_family: the direction coefficients vanish at every sample");

  ContactSystem system = ContactSystem::darboux(
      n, std::make_shared<TransportHamiltonianField>(n, spec.a0, a_exprs, phi_expr));

  std::vector<FieldPtr> components;
  components.reserve(static_cast<std::size_t>(n + 1));
  for (int i = 0; i < n; ++i)
    components.push_back(std::make_shared<TransportMomentumField>(n, i, phi_expr, f_expr, g_exprs));
  components.push_back(std::make_shared<TransportActionField>(n, phi_expr, f_expr));
  CompleteSolution solution(Fibration::x_projection(n), spec.base_box, spec.param_box,
                            std::move(components));

  const FieldPtr factor =
      std::make_shared<ExpOfField>(make_expr_field(spec.f, transport_phase_names(n)));
  const FieldPtr f_field = std::make_shared<ExprField>(f_expr, n);
  std::vector<FieldPtr> a_fields, g_fields;
  for (int j = 0; j < n; ++j) {
    a_fields.push_back(std::make_shared<ExprField>(a_exprs[static_cast<std::size_t>(j)], n));
    g_fields.push_back(std::make_shared<ExprField>(g_exprs[static_cast<std::size_t>(j)], n));
  }

  return ThermoFamily{n,
                      spec.a0,
                      spec.c,
                      std::move(system),
                      std::move(solution),
                      factor,
                      f_field,
                      std::move(a_fields),
                      std::move(g_fields)};
}

// ---------------------------------------------------------------------------
// Damped oscillator family
// ---------------------------------------------------------------------------

namespace {

struct WedgeConstants {
  double a_plus = 0.0;
  double a_minus = 0.0;
  double b_plus = 0.0;
  double b_minus = 0.0;
};

WedgeConstants wedge_constants(double alpha) {
  const double s = std::sqrt(alpha * alpha - 4.0);
  WedgeConstants w;
  w.a_plus = 0.5 * (-alpha + s);
  w.a_minus = 0.5 * (-alpha - s);
  w.b_plus = w.a_plus / s;
  w.b_minus = w.a_minus / s;
  return w;
}

// Level relation of the momentum branch in logarithmic form,
//   G(p) = b+ log(a+ q - p) - b- log(p - a- q) - log(l1),
// strictly monotone on the wedge a- q < p < a+ q for q > 0.
template <class T>
T wedge_residual(const WedgeConstants& w, const T& q, const T& l1, const T& p) {
  return w.b_plus * log(w.a_plus * q - p) - w.b_minus * log(p - w.a_minus * q) - log(l1);
}

double wedge_slope(const WedgeConstants& w, double q, double p) {
  return -w.b_plus / (w.a_plus * q - p) - w.b_minus / (p - w.a_minus * q);
}

// Bracketed Newton on the wedge; monotonicity makes the bracket exact, so
// the iteration cannot leave the branch. Iterated to a fixed point so the
// returned root is a smooth function of (q, l1) down to roundoff.
double solve_wedge_momentum(const WedgeConstants& w, double q, double l1) {
  if (!(q > 0.0))
    throw EvalError("oscillator momentum section: q must be positive (got " + std::to_string(q) +
                    ")");
  if (!(l1 > 0.0))
    throw EvalError("oscillator momentum section: the level parameter must be positive (got " +
                    std::to_string(l1) + ")");
  const double lo = w.a_minus * q;
  const double hi = w.a_plus * q;
  const bool increasing = w.b_plus < 0.0;
  double left = lo;
  double right = hi;
  double x = 0.5 * (lo + hi);
  for (int it = 0; it < 120; ++it) {
    const double g = w.b_plus * std::log(hi - x) - w.b_minus * std::log(x - lo) - std::log(l1);
    if (g == 0.0) return x;
    if (increasing == (g > 0.0))
      right = x;
    else
      left = x;
    double next = x - g / wedge_slope(w, q, x);
    if (!(next > left && next < right)) next = 0.5 * (left + right);
    if (std::abs(next - x) <= 4e-16 * (std::abs(x) + q)) return next;
    x = next;
  }
  throw ConvergenceError("oscillator momentum section: branch solve stalled at q = " +
                         std::to_string(q) + ", level parameter " + std::to_string(l1));
}

template <class T>
T wedge_momentum(const WedgeConstants& w, const T& q, const T& l1) {
  const double q0 = scalar_value(q);
  const double l10 = scalar_value(l1);
  const double root = solve_wedge_momentum(w, q0, l10);
  if constexpr (std::is_same_v<T, double>) {
    return root;
  } else {
    const double slope = wedge_slope(w, q0, root);
    return implicit_dual_root<T>([&](const T& p) { return wedge_residual<T>(w, q, l1, p); }, root,
                                 slope);
  }
}

class OscillatorPhiField final : public FieldBase<OscillatorPhiField> {
 public:
  explicit OscillatorPhiField(WedgeConstants w) : w_(w) {}

  int arity() const override { return 3; }

  template <class T>
  T eval_impl(std::span<const T> args) const {
    return wedge_momentum(w_, args[0], args[1]);
  }

 private:
  WedgeConstants w_;
};

// chi = (q^2 + phi^2)/(2 alpha) + l2 exp(alpha * int_{q_a}^{q} (-1/phi) dr);
// the first term alone satisfies the inhomogeneous action equation, the
// exponential factor spans its homogeneous solutions.
class OscillatorChiField final : public FieldBase<OscillatorChiField> {
 public:
  OscillatorChiField(WedgeConstants w, double alpha, double anchor_q, QuadratureOptions quadrature)
      : w_(w), alpha_(alpha), anchor_q_(anchor_q), quadrature_(quadrature) {}

  int arity() const override { return 3; }

  template <class T>
  T eval_impl(std::span<const T> args) const {
    const T q = args[0];
    const T l1 = args[1];
    const T l2 = args[2];
    const T p = wedge_momentum(w_, q, l1);
    const T head = (q * q + p * p) / (2.0 * alpha_);
    // The quadrature factor enters only through the product l2 * exp(...);
    // when every slot of l2 vanishes the product is exactly zero in every
    // slot, so the integral can be skipped.
    if (abs_max(l2) == 0.0) return head;
    const T span_len = q - anchor_q_;
    auto integrand = [&](double s) -> T {
      const T r = anchor_q_ + s * span_len;
      return span_len * (-1.0 / wedge_momentum(w_, r, l1));
    };
    const T exponent = alpha_ * integrate_adaptive(integrand, 0.0, 1.0, quadrature_);
    return head + l2 * exp(exponent);
  }

 private:
  WedgeConstants w_;
  double alpha_;
  double anchor_q_;
  QuadratureOptions quadrature_;
};

}  // namespace

OscillatorFamily build_damped_oscillator(const OscillatorSpec& spec) {
  if (!(std::abs(spec.alpha) > 2.0))
    throw std::invalid_argument(
        "build_damped_oscillator: the packaged family needs |alpha| > 2 (real branch exponents); "
        "oscillator_invariant covers the remaining regimes");
  if (!(spec.anchor_q > 0.0))
    throw std::invalid_argument("build_damped_oscillator: the quadrature anchor must be positive");

  Box base = spec.base_box;
  if (base.dim() == 0)
    base = Box(Eigen::VectorXd::Constant(1, 0.5), Eigen::VectorXd::Constant(1, 2.0));
  Box params = spec.param_box;
  if (params.dim() == 0) {
    Eigen::VectorXd lo(2), hi(2);
    lo << 0.5, -0.5;
    hi << 2.0, 0.5;
    params = Box(lo, hi);
  }
  if (base.dim() != 1)
    throw std::invalid_argument("build_damped_oscillator: the base box is one-dimensional");
  if (params.dim() != 2)
    throw std::invalid_argument("build_damped_oscillator: the parameter box is two-dimensional");
  if (!(base.lo[0] > 0.0))
    throw std::invalid_argument("build_damped_oscillator: the base box must stay inside q > 0");
  if (!(params.lo[0] > 0.0))
    throw std::invalid_argument(
        "build_damped_oscillator: the level parameter range must stay positive");

  const WedgeConstants w = wedge_constants(spec.alpha);

  std::ostringstream h;
  h.precision(17);
  h << "0.5*(x^2 + y^2) - (" << spec.alpha << ")*z";
  ContactSystem system = ContactSystem::darboux(1, make_expr_field(h.str(), {"x", "y", "z"}));

  const FieldPtr phi = std::make_shared<OscillatorPhiField>(w);
  const FieldPtr chi = std::make_shared<OscillatorChiField>(
      w, spec.alpha, spec.anchor_q, QuadratureOptions{spec.quadrature_tolerance, 24});
  CompleteSolution solution(Fibration::x_projection(1), base, params, {phi, chi});

  return OscillatorFamily{spec.alpha, w.a_plus, w.a_minus,         w.b_plus,
                          w.b_minus,  spec.anchor_q, std::move(system), std::move(solution),
                          phi,        chi};
}

double oscillator_invariant(double alpha, double q, double p) {
  if (alpha == 0.0)
    throw std::invalid_argument("oscillator_invariant: alpha must be nonzero");
  const double half = 0.5 * alpha;
  if (std::abs(alpha) > 2.0) {
    const WedgeConstants w = wedge_constants(alpha);
    return w.b_plus * std::log(std::abs(w.a_plus * q - p)) -
           w.b_minus * std::log(std::abs(p - w.a_minus * q));
  }
  if (std::abs(alpha) == 2.0) {
    const double a = -half;  // double characteristic root
    return std::log(std::abs(p - a * q)) - a * q / (p - a * q);
  }
  const double beta = std::sqrt(1.0 - half * half);
  return 0.5 * std::log(p * p + alpha * p * q + q * q) -
         (half / beta) * std::atan((2.0 * p + alpha * q) / (2.0 * beta * q));
}

// ---------------------------------------------------------------------------
// Exact-symplectic restriction check
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> ambient_names(int n) {
  std::vector<std::string> names;
  for (int i = 1; i <= n + 1; ++i) names.push_back("q" + std::to_string(i));
  for (int i = 1; i <= n + 1; ++i) names.push_back("p" + std::to_string(i));
  return names;
}

std::string round_hamiltonian_text(int n) {
  std::ostringstream os;
  for (int i = 1; i <= n + 1; ++i) {
    if (i > 1) os << " + ";
    os << "q" << i << "^2";
  }
  for (int i = 1; i <= n + 1; ++i) os << " + p" << i << "^2";
  return os.str();
}

struct AmbientContext {
  int dim = 0;
  Eigen::MatrixXd W;  // symplectic matrix, omega(u, v) = u^T W v
  Eigen::MatrixXd L;  // radial field coefficients, Delta(m) = L m
  Eigen::MatrixXd A;  // exterior derivative of the induced covector W^T L m
  Expr hamiltonian;
};

AmbientContext make_ambient_context(const LiouvilleSpec& spec) {
  if (spec.n < 1)
    throw std::invalid_argument("liouville_restriction_check: n must be positive");
  AmbientContext ctx;
  ctx.dim = 2 * spec.n + 2;
  const int half = spec.n + 1;
  if (spec.omega.size() == 0) {
    ctx.W = Eigen::MatrixXd::Zero(ctx.dim, ctx.dim);
    ctx.W.topRightCorner(half, half).setIdentity();
    ctx.W.bottomLeftCorner(half, half) = -Eigen::MatrixXd::Identity(half, half);
  } else {
    if (spec.omega.rows() != ctx.dim || spec.omega.cols() != ctx.dim)
      throw std::invalid_argument(
          "liouville_restriction_check: omega must be a (2n+2) x (2n+2) matrix");
    if ((spec.omega + spec.omega.transpose()).cwiseAbs().maxCoeff() > 1e-12)
      throw std::invalid_argument("liouville_restriction_check: omega must be skew-symmetric");
    ctx.W = spec.omega;
  }
  if (spec.delta.size() == 0) {
    ctx.L = 0.5 * Eigen::MatrixXd::Identity(ctx.dim, ctx.dim);
  } else {
    if (spec.delta.rows() != ctx.dim || spec.delta.cols() != ctx.dim)
      throw std::invalid_argument(
          "liouville_restriction_check: delta must be a (2n+2) x (2n+2) matrix");
    ctx.L = spec.delta;
  }
  // For a covector linear in the point the exterior derivative is constant:
  // d(W^T L m) has the matrix (L^T W) - (W^T L) in the u^T A v convention.
  ctx.A = ctx.L.transpose() * ctx.W - ctx.W.transpose() * ctx.L;
  const std::string text =
      spec.hamiltonian.empty() ? round_hamiltonian_text(spec.n) : spec.hamiltonian;
  ctx.hamiltonian = parse_expression(text, ambient_names(spec.n));
  return ctx;
}

struct RestrictionPoint {
  Eigen::VectorXd reeb;
  Eigen::VectorXd hamiltonian_field;
  double radial_rate = 0.0;
  double reeb_defect = 0.0;
  double equation_residual = 0.0;
  double identity_residual = 0.0;
};

RestrictionPoint check_restriction_point(const AmbientContext& ctx, const Eigen::VectorXd& m) {
  if (m.size() != ctx.dim)
    throw std::invalid_argument("liouville_restriction_check: point dimension mismatch (expected " +
                                std::to_string(ctx.dim) + ", got " + std::to_string(m.size()) +
                                ")");
  const Eigen::VectorXd grad = expr_gradient(ctx.hamiltonian, m);
  const Eigen::VectorXd radial = ctx.L * m;
  const double rate = grad.dot(radial);
  if (std::abs(rate) < 1e-12)
    throw std::runtime_error(
        "liouville_restriction_check: the radial derivative of H vanishes at " + point_text(m));

  const Eigen::VectorXd covector = ctx.W.transpose() * radial;
  const Eigen::VectorXd field = solve_linear(ctx.W, grad, "liouville_restriction_check");

  Eigen::MatrixXd normal(1, ctx.dim);
  normal.row(0) = grad.transpose();
  const Eigen::MatrixXd tangent = nullspace(normal);
  if (tangent.cols() != ctx.dim - 1)
    throw std::runtime_error("liouville_restriction_check: dH degenerates at " + point_text(m));

  const Eigen::VectorXd c_s = tangent.transpose() * covector;
  const Eigen::MatrixXd a_s = tangent.transpose() * ctx.A * tangent;
  const Eigen::VectorXd r = solve_linear(
      Eigen::MatrixXd(a_s + c_s * c_s.transpose()), c_s, "liouville_restriction_check: Reeb solve");

  RestrictionPoint out;
  out.reeb = tangent * r;
  out.hamiltonian_field = field;
  out.radial_rate = rate;
  out.reeb_defect =
      std::max((a_s * r).cwiseAbs().maxCoeff(), std::abs(c_s.dot(r) - 1.0));
  out.equation_residual = (out.reeb - field / rate).cwiseAbs().maxCoeff();
  out.identity_residual = (out.reeb - field).cwiseAbs().maxCoeff();
  return out;
}

}  // namespace

LiouvilleReport liouville_restriction_check(const LiouvilleSpec& spec,
                                            const std::vector<Eigen::VectorXd>& points) {
  if (points.empty())
    throw std::invalid_argument("liouville_restriction_check: no sample points supplied");
  const AmbientContext ctx = make_ambient_context(spec);
  LiouvilleReport report;
  report.max_radial_defect = (ctx.A - ctx.W).cwiseAbs().maxCoeff();
  report.min_delta_h = std::numeric_limits<double>::infinity();
  for (const Eigen::VectorXd& m : points) {
    const RestrictionPoint at = check_restriction_point(ctx, m);
    report.max_reeb_defect = std::max(report.max_reeb_defect, at.reeb_defect);
    report.max_equation_residual = std::max(report.max_equation_residual, at.equation_residual);
    report.max_identity_residual = std::max(report.max_identity_residual, at.identity_residual);
    report.min_delta_h = std::min(report.min_delta_h, std::abs(at.radial_rate));
    ++report.samples_used;
  }
  return report;
}

LiouvilleReport liouville_restriction_check(const LiouvilleSpec& spec) {
  const AmbientContext ctx = make_ambient_context(spec);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int wanted = std::max(1, spec.samples);

  std::vector<Eigen::VectorXd> points;
  points.reserve(static_cast<std::size_t>(wanted));
  int failures = 0;
  while (static_cast<int>(points.size()) < wanted) {
    Eigen::VectorXd direction(ctx.dim);
    for (Eigen::Index i = 0; i < direction.size(); ++i) direction[i] = gauss(rng);
    if (direction.norm() < 1e-8) continue;
    direction /= direction.norm();
    auto along_ray = [&](auto t) {
      using T = std::decay_t<decltype(t)>;
      std::vector<T> m(static_cast<std::size_t>(ctx.dim));
      for (Eigen::Index i = 0; i < direction.size(); ++i)
        m[static_cast<std::size_t>(i)] = direction[i] * t;
      return ctx.hamiltonian.eval(std::span<const T>(m)) - spec.level;
    };
    try {
      const double t = newton_scalar(along_ray, 1.0, {}, "liouville_restriction_check: sampler");
      points.push_back(t * direction);
    } catch (const ConvergenceError&) {
      if (++failures > 16 * wanted)
        throw std::runtime_error(
            "liouville_restriction_check: the ray sampler keeps missing the level set");
    }
  }
  return liouville_restriction_check(spec, points);
}

Eigen::VectorXd liouville_reeb_at(const LiouvilleSpec& spec, const Eigen::VectorXd& point) {
  const AmbientContext ctx = make_ambient_context(spec);
  return check_restriction_point(ctx, point).reeb;
}

}  // namespace cq
