#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "contactq/box.hpp"
#include "contactq/fields.hpp"
#include "contactq/geometry.hpp"
#include "contactq/hje.hpp"
#include "contactq/linalg.hpp"
#include "contactq/reconstruct.hpp"
#include "contactq/refint.hpp"
#include "contactq/solvers.hpp"

using namespace cq;

namespace {

Box make_box(std::initializer_list<double> lo, std::initializer_list<double> hi) {
  Eigen::VectorXd l(static_cast<int>(lo.size()));
  Eigen::VectorXd h(static_cast<int>(hi.size()));
  int i = 0;
  for (double v : lo) l[i++] = v;
  i = 0;
  for (double v : hi) h[i++] = v;
  return Box(l, h);
}

std::vector<double> time_grid(double t1, int count) {
  std::vector<double> out(count);
  for (int i = 0; i < count; ++i) out[i] = t1 * static_cast<double>(i) / (count - 1);
  return out;
}

// Family (y, z; l) -> (l, y, z) over the (y, z) base. Every member solves the
// problem of H = 1, whose flow is the vertical translation (the Reeb flow).
// Base point defaults to (1, 1.5), so W = z - 1.5, phi = -y, h = 1.
CompleteSolution reeb_family() {
  auto fib = Fibration::yz_projection(1);
  std::vector<FieldPtr> comps{make_expr_field("l1", {"y", "z", "l1"})};
  return CompleteSolution(fib, make_box({0.5, 1.0}, {1.5, 2.0}), make_box({-1.0}, {1.0}),
                          std::move(comps));
}

ContactSystem reeb_system() { return ContactSystem::darboux(1, make_constant_field(1.0, 3)); }

// Family (x; l1, l2) -> (x, l1/x, l2) for H = x*y over the x-projection.
// With base point x0 = 1.5: W = l1 log(x/1.5), phi = (log(x/1.5), -1),
// h = l1, and the base flow is x(t) = x(0) e^t.
CompleteSolution product_family() {
  auto fib = Fibration::x_projection(1);
  std::vector<FieldPtr> comps{make_expr_field("l1/x", {"x", "l1", "l2"}),
                              make_expr_field("l2", {"x", "l1", "l2"})};
  return CompleteSolution(fib, make_box({1.0}, {2.0}), make_box({0.5, -1.0}, {1.5, 1.0}),
                          std::move(comps));
}

ContactSystem product_system() {
  return ContactSystem::darboux(1, make_expr_field("x*y", {"x", "y", "z"}));
}

// Constant-section family (x; l1, l2) -> (x, l1, l2), reused against several
// Hamiltonians to hit the precondition branches.
CompleteSolution constant_family() {
  auto fib = Fibration::x_projection(1);
  std::vector<FieldPtr> comps{make_expr_field("l1", {"x", "l1", "l2"}),
                              make_expr_field("l2", {"x", "l1", "l2"})};
  return CompleteSolution(fib, make_box({1.0}, {2.0}), make_box({0.5, -1.0}, {1.5, 1.0}),
                          std::move(comps));
}

// Family (y, z; l) -> (l, y, z) for H = z on a box away from the zero level.
// The flow of X_H is x' = 0, y' = y, z' = z.
CompleteSolution vertical_family() {
  auto fib = Fibration::yz_projection(1);
  std::vector<FieldPtr> comps{make_expr_field("l1", {"y", "z", "l1"})};
  return CompleteSolution(fib, make_box({0.5, 1.0}, {1.5, 2.0}), make_box({-1.0}, {1.0}),
                          std::move(comps));
}

}  // namespace

TEST_CASE("staged tables of the Reeb flow family match the closed forms") {
  auto tables = build_W(reeb_family(), reeb_system());
  CHECK(tables.w_ready());
  CHECK_FALSE(tables.phi_ready());
  CHECK_FALSE(tables.h_ready());
  CHECK(tables.base_point().isApprox(Eigen::Vector2d(1.0, 1.5)));

  const std::vector<double> base{0.8, 1.2};
  const std::vector<double> lambda{0.3};
  CHECK(tables.W(base, lambda) == doctest::Approx(1.2 - 1.5).epsilon(1e-9));
  CHECK(tables.two_path_defect(base, lambda) < 1e-10);

  // dW pairs a (base, lambda) direction with only its dz component.
  const std::vector<double> dir{0.7, -0.4, 0.9};
  CHECK(tables.W_directional(base, lambda, dir) == doctest::Approx(-0.4).epsilon(1e-9));

  CHECK_THROWS_AS(tables.phi(base, lambda), std::logic_error);
  CHECK_THROWS_AS(tables.h(lambda), std::logic_error);

  build_phi(tables);
  const Eigen::VectorXd ph = tables.phi(base, lambda);
  REQUIRE(ph.size() == 1);
  CHECK(ph[0] == doctest::Approx(-0.8).epsilon(1e-9));

  build_h(tables);
  CHECK(tables.h(lambda) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(tables.dh(lambda).cwiseAbs().maxCoeff() < 1e-12);

  const Eigen::MatrixXd J = immersion_jacobian(tables, lambda, base);
  REQUIRE(J.rows() == 2);
  REQUIRE(J.cols() == 2);
  CHECK(J(0, 0) == doctest::Approx(-1.0).epsilon(1e-7));
  CHECK(std::abs(J(0, 1)) < 1e-7);
  CHECK(std::abs(J(1, 0)) < 1e-7);
  CHECK(J(1, 1) == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(immersion_rank(tables, lambda, base) == 2);

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> coef(-1.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    const std::vector<double> v{coef(rng), coef(rng), coef(rng)};
    CHECK(antimorphism_residual(tables, base, lambda, v) < 1e-8);
  }
}

TEST_CASE("reconstructed Reeb flow is the vertical translation") {
  auto tables = build_W(reeb_family(), reeb_system());
  build_phi(tables);
  build_h(tables);

  const std::vector<double> lambda{0.3};
  const std::vector<double> start{0.8, 1.2};
  const auto times = time_grid(1.0, 21);
  const Trajectory traj = reconstruct_trajectory(tables, lambda, start, times);
  CHECK(traj.method == "quadrature");
  REQUIRE(traj.size() == 21);
  for (int i = 0; i < traj.size(); ++i) {
    const Eigen::Vector3d expected(0.3, 0.8, 1.2 + times[i]);
    CHECK((traj.states[i] - expected).lpNorm<Eigen::Infinity>() < 1e-9);
  }

  const Trajectory oracle =
      integrate_contact_rk4(reeb_system(), Eigen::Vector3d(0.3, 0.8, 1.2), 0.0, 1.0);
  CHECK(compare_trajectories(traj, oracle).max_abs < 1e-9);
}

TEST_CASE("product family tables: logarithmic potential and conserved momenta") {
  auto tables = build_W(product_family(), product_system());
  build_phi(tables);
  build_h(tables);

  const std::vector<double> base{1.2};
  const std::vector<double> lambda{0.8, 0.3};
  const double logx = std::log(1.2 / 1.5);
  CHECK(tables.W(base, lambda) == doctest::Approx(0.8 * logx).epsilon(1e-9));
  CHECK(tables.two_path_defect(base, lambda) < 1e-9);

  const Eigen::VectorXd ph = tables.phi(base, lambda);
  REQUIRE(ph.size() == 2);
  CHECK(ph[0] == doctest::Approx(logx).epsilon(1e-9));
  CHECK(ph[1] == doctest::Approx(-1.0).epsilon(1e-9));

  CHECK(tables.h(lambda) == doctest::Approx(0.8).epsilon(1e-12));
  const Eigen::VectorXd dh = tables.dh(lambda);
  CHECK(dh[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(dh[1]) < 1e-12);

  // d/dx of W is l1/x, of phi_1 is 1/x; both rows from quadrature duals.
  const Eigen::MatrixXd J = immersion_jacobian(tables, lambda, base);
  REQUIRE(J.rows() == 3);
  REQUIRE(J.cols() == 1);
  CHECK(J(0, 0) == doctest::Approx(1.0 / 1.2).epsilon(1e-7));
  CHECK(std::abs(J(1, 0)) < 1e-7);
  CHECK(J(2, 0) == doctest::Approx(0.8 / 1.2).epsilon(1e-7));
  CHECK(immersion_rank(tables, lambda, base) == 1);

  const std::vector<double> base_dir{1.0, 0.0, 0.0};
  CHECK(tables.W_directional(base, lambda, base_dir) == doctest::Approx(0.8 / 1.2).epsilon(1e-8));
  const std::vector<double> lambda_dir{0.0, 1.0, 0.0};
  CHECK(tables.W_directional(base, lambda, lambda_dir) == doctest::Approx(logx).epsilon(1e-8));

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> coef(-1.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    const std::vector<double> v{coef(rng), coef(rng), coef(rng)};
    CHECK(antimorphism_residual(tables, base, lambda, v) < 1e-8);
  }
}

TEST_CASE("product family trajectory: exponential base flow against rk4") {
  auto tables = build_W(product_family(), product_system());
  build_phi(tables);
  build_h(tables);

  const std::vector<double> lambda{0.8, 0.3};
  const std::vector<double> start{1.2};
  const auto times = time_grid(0.5, 21);
  const Trajectory traj = reconstruct_trajectory(tables, lambda, start, times);
  REQUIRE(traj.size() == 21);

  for (int i = 0; i < traj.size(); ++i) {
    const double x = 1.2 * std::exp(times[i]);
    const Eigen::Vector3d expected(x, 0.8 / x, 0.3);
    CHECK((traj.states[i] - expected).lpNorm<Eigen::Infinity>() < 1e-8);
    // x*y is conserved along the flow
    CHECK(traj.states[i][0] * traj.states[i][1] == doctest::Approx(0.8).epsilon(1e-9));
  }

  const Eigen::Vector3d start_state(1.2, 0.8 / 1.2, 0.3);
  const Trajectory oracle = integrate_contact_rk4(product_system(), start_state, 0.0, 0.5);
  const TrajectoryComparison cmp = compare_trajectories(traj, oracle);
  CHECK(cmp.resampled);
  CHECK(cmp.max_abs < 1e-6);
}

TEST_CASE("zero Hamiltonian family reconstructs a stationary point") {
  auto tables = build_W(constant_family(), ContactSystem::darboux(1, make_constant_field(0.0, 3)));
  build_phi(tables);
  build_h(tables);

  const std::vector<double> lambda{0.9, -0.2};
  CHECK(tables.h(lambda) == doctest::Approx(0.0).epsilon(1e-12));

  const std::vector<double> start{1.3};
  const auto times = time_grid(2.0, 9);
  const Trajectory traj = reconstruct_trajectory(tables, lambda, start, times);
  for (const auto& state : traj.states) {
    CHECK((state - Eigen::Vector3d(1.3, 0.9, -0.2)).lpNorm<Eigen::Infinity>() < 1e-10);
  }
}

TEST_CASE("a family with flat momenta fails the immersion test") {
  // (x; l1, l2) -> (x, 0, l2): W and every phi_j are constant in x, so the
  // stacked Jacobian has rank zero and the algebraic system cannot pin x.
  auto fib = Fibration::x_projection(1);
  std::vector<FieldPtr> comps{make_expr_field("0", {"x", "l1", "l2"}),
                              make_expr_field("l2", {"x", "l1", "l2"})};
  CompleteSolution family(fib, make_box({1.0}, {2.0}), make_box({0.5, -1.0}, {1.5, 1.0}),
                          std::move(comps));

  auto tables = build_W(family, ContactSystem::darboux(1, make_constant_field(0.0, 3)));
  build_phi(tables);
  build_h(tables);

  const std::vector<double> lambda{0.9, -0.2};
  const std::vector<double> start{1.3};
  CHECK(immersion_rank(tables, lambda, start) == 0);
  CHECK_THROWS_AS(reconstruct_trajectory(tables, lambda, start, time_grid(1.0, 5)),
                  std::runtime_error);
}

TEST_CASE("build preconditions reject unusable families") {
  // x-component z makes the pulled-back form d z ^ d y-like, hence not closed.
  auto fib = Fibration::yz_projection(1);
  std::vector<FieldPtr> comps{make_expr_field("z", {"y", "z", "l1"})};
  CompleteSolution twisted(fib, make_box({0.5, 1.0}, {1.5, 2.0}), make_box({-1.0}, {1.0}),
                           std::move(comps));
  CHECK_THROWS_AS(build_W(twisted, reeb_system()), std::runtime_error);

  // H = x*y is not constant along the constant sections.
  auto varying = build_W(constant_family(), product_system());
  CHECK_THROWS_AS(build_h(varying), std::runtime_error);

  // H = z has Reeb rate 1, so no frequency table can be built.
  auto rated = build_W(constant_family(),
                       ContactSystem::darboux(1, make_expr_field("z", {"x", "y", "z"})));
  CHECK_THROWS_AS(build_h(rated), std::runtime_error);
}

TEST_CASE("rescaled reconstruction: reciprocal and explicit factor agree with rk4") {
  const auto family = vertical_family();
  const auto system = ContactSystem::darboux(1, make_expr_field("z", {"x", "y", "z"}));

  const std::vector<double> lambda{0.3};
  const std::vector<double> start{0.8, 1.2};
  const auto times = time_grid(0.4, 17);

  const Trajectory via_reciprocal =
      reconstruct_rescaled(system, family, RescaleMode::reciprocal(), lambda, start, times);
  const Trajectory via_factor = reconstruct_rescaled(
      system, family, RescaleMode::explicit_factor(make_expr_field("1/z", {"x", "y", "z"})),
      lambda, start, times);

  REQUIRE(via_reciprocal.size() == 17);
  REQUIRE(via_factor.size() == 17);
  for (int i = 0; i < 17; ++i) {
    const double growth = std::exp(times[i]);
    const Eigen::Vector3d expected(0.3, 0.8 * growth, 1.2 * growth);
    CHECK((via_reciprocal.states[i] - expected).lpNorm<Eigen::Infinity>() < 1e-7);
    CHECK((via_factor.states[i] - via_reciprocal.states[i]).lpNorm<Eigen::Infinity>() < 1e-9);
  }

  const Trajectory oracle =
      integrate_contact_rk4(system, Eigen::Vector3d(0.3, 0.8, 1.2), 0.0, 0.4);
  CHECK(compare_trajectories(via_reciprocal, oracle).max_abs < 1e-6);
}

TEST_CASE("rescaled preconditions reject unusable modes") {
  const auto system = ContactSystem::darboux(1, make_expr_field("z", {"x", "y", "z"}));
  const std::vector<double> lambda{0.3};
  const std::vector<double> start{0.8, 0.1};
  const auto times = time_grid(0.1, 3);

  // A box straddling the zero level of H rules out the reciprocal factor.
  auto fib = Fibration::yz_projection(1);
  std::vector<FieldPtr> comps{make_expr_field("l1", {"y", "z", "l1"})};
  CompleteSolution straddling(fib, make_box({0.5, -0.5}, {1.5, 0.5}), make_box({-1.0}, {1.0}),
                              std::move(comps));
  CHECK_THROWS_AS(reconstruct_rescaled(system, straddling, RescaleMode::reciprocal(), lambda,
                                       start, times),
                  std::runtime_error);

  // A constant factor does not freeze the Reeb rate of H = z.
  const std::vector<double> inside{0.8, 1.2};
  CHECK_THROWS_AS(reconstruct_rescaled(system, vertical_family(),
                                       RescaleMode::explicit_factor(make_constant_field(2.0, 3)),
                                       lambda, inside, times),
                  std::runtime_error);

  CHECK_THROWS_AS(reconstruct_rescaled(system, vertical_family(),
                                       RescaleMode::explicit_factor(nullptr), lambda, inside,
                                       times),
                  std::invalid_argument);
}
