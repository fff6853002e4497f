#pragma once

// Built-in example families, each packaged as a ContactSystem together with
// the closed-form complete solution the construction provides and the
// constants the reduced dynamics is expressed in.
//
//  * build_thermo_family: transport-type Hamiltonians
//        H = a0 (z - Phi(x)) + a^j(x) (y_j + dPhi/dx_j(x))
//    whose reduced field on the base is a^j d/dx_j. The caller supplies
//    functions f and g_k satisfying the transport equations a.grad f = -a0
//    and a.grad g_k = c_k (constants); the builder verifies them on a sample
//    grid and assembles the section family
//        Sigma(x; l0, l) = (x, e^{-f} l^k grad g_k - grad Phi, Phi + l0 e^{-f})
//    over the x-projection, with e^f as the certified rescaling factor.
//
//  * build_damped_oscillator: H = (q^2 + p^2)/2 - alpha z on R^3 with the
//    overdamped coefficient |alpha| > 2. The momentum section phi(q; l1) is
//    the solution of phi' phi = -q - alpha phi picked out of the implicit
//    level relation by a bracketed Newton solve on the wedge
//    a_minus q < phi < a_plus q (q > 0), and the action section carries the
//    quadrature factor exp(alpha * int_{q_a}^{q} (-1/phi) dr) from the
//    configured anchor q_a. oscillator_invariant exposes the conserved
//    quantity of the reduced flow in real logarithmic form for every
//    alpha != 0 regime.
//
//  * liouville_restriction_check: samples a level set S of a homogeneous-type
//    Hamiltonian in an exact symplectic ambient space R^{2n+2}, restricts the
//    induced contact form i_Delta omega to the tangent spaces of S, and
//    compares the restricted Reeb field with X_H / Delta(H).

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "contactq/box.hpp"
#include "contactq/fields.hpp"
#include "contactq/geometry.hpp"
#include "contactq/hje.hpp"

namespace cq {

// Inputs for the transport family. Expression strings are over the base
// coordinates: {"x"} when n = 1, {"x1", ..., "xn"} otherwise.
struct ThermoSpec {
  int n = 1;
  double a0 = 0.0;                 // constant coefficient of (z - Phi)
  std::vector<std::string> a;      // direction coefficients a^i(x), size n
  std::string phi = "0";           // potential Phi(x)
  std::string f = "0";             // transported exponent, a.grad f = -a0
  std::vector<std::string> g;      // transported functions, a.grad g_k = c_k
  std::vector<double> c;           // the transport constants c_k, size n
  Box base_box;                    // x-box where the data is certified
  Box param_box;                   // (l0, l1..ln)-box of the family
  int samples = 40;                // verification sample count
  double residual_tolerance = 1e-9;
  std::uint64_t seed = 42;
};

struct ThermoFamily {
  int n = 0;
  double a0 = 0.0;
  std::vector<double> c;
  ContactSystem system;       // reference presentation of H
  CompleteSolution solution;  // Sigma over the x-projection
  FieldPtr factor;            // e^f lifted to the phase space (arity 2n+1)
  FieldPtr f;                 // over x (arity n)
  std::vector<FieldPtr> a;    // over x
  std::vector<FieldPtr> g;    // over x

  // Values of the reduced field a^j d/dx_j at a base point.
  Eigen::VectorXd reduced_field(std::span<const double> x) const;

  // (e^f H) o Sigma depends on the parameters alone; this is that function,
  // h(l) = a0 l0 + c_k l^k.
  double reduced_hamiltonian(std::span<const double> lambda) const;
};

// Verifies the transport equations, the independence of the g_k, and the
// non-triviality of the direction field on a sample grid, then packages the
// family. Throws std::invalid_argument for structural defects and
// std::runtime_error naming the failing equation and sample point otherwise.
ThermoFamily build_thermo_family(const ThermoSpec& spec);

// Inputs for the damped oscillator family. Boxes left empty take the
// documented defaults; both must stay inside q > 0 and l1 > 0, where the
// wedge branch of the momentum relation is single-valued.
struct OscillatorSpec {
  double alpha = 2.5;            // |alpha| > 2 for the packaged family
  double anchor_q = 1.0;         // quadrature anchor of the action factor
  Box base_box;                  // q-interval; default [0.5, 2]
  Box param_box;                 // (l1, l2); default [0.5, 2] x [-0.5, 0.5]
  double quadrature_tolerance = 1e-12;
};

struct OscillatorFamily {
  double alpha = 0.0;
  double a_plus = 0.0;   // roots of a^2 + alpha a + 1 = 0, a_minus < a_plus
  double a_minus = 0.0;
  double b_plus = 0.0;   // a_{+,-} / sqrt(alpha^2 - 4)
  double b_minus = 0.0;
  double anchor_q = 1.0;
  ContactSystem system;       // H = (x^2 + y^2)/2 - alpha z, reference form
  CompleteSolution solution;  // Sigma(q; l1, l2) = (q, phi, chi)
  FieldPtr phi;               // momentum section over (q, l1, l2); l2 unused
  FieldPtr chi;               // action section over (q, l1, l2)
};

// Packages the overdamped family. Throws std::invalid_argument when
// |alpha| <= 2, when the anchor is not positive, or when a box leaves the
// wedge domain; throws ConvergenceError (with the offending q) if the branch
// solve degenerates.
OscillatorFamily build_damped_oscillator(const OscillatorSpec& spec);

// Conserved quantity of the reduced characteristic flow q' = p,
// p' = -q - alpha p, in real logarithmic form. Piecewise in the regime:
// power-ratio form for |alpha| > 2, the double-root closed form at
// |alpha| = 2, and the modulus/argument recombination for 0 < |alpha| < 2.
// Defined away from the degenerate rays p = a q (real eigendirections) and,
// in the underdamped regime, q = 0.
double oscillator_invariant(double alpha, double q, double p);

// Inputs for the exact-symplectic restriction check on the level set
// {H = level} in R^{2n+2}, coordinates (q1..q_{n+1}, p1..p_{n+1}).
struct LiouvilleSpec {
  int n = 1;                  // the level set has contact dimension 2n + 1
  std::string hamiltonian;    // over (q1.., p1..); empty: round sum of squares
  double level = 1.0;
  Eigen::MatrixXd omega;      // constant symplectic matrix; empty: canonical
  Eigen::MatrixXd delta;      // linear radial field coefficients; empty: I/2
  int samples = 100;
  double tolerance = 1e-9;    // sampler acceptance for |H - level|
  std::uint64_t seed = 42;
};

struct LiouvilleReport {
  double max_radial_defect = 0.0;     // |d(i_Delta omega) - omega| over samples
  double max_reeb_defect = 0.0;       // restricted Reeb defining equations
  double max_equation_residual = 0.0; // |xi - X_H / Delta(H)| over samples
  double max_identity_residual = 0.0; // |xi - X_H|; small iff Delta(H) = 1 on S
  double min_delta_h = 0.0;           // smallest |Delta(H)| encountered
  int samples_used = 0;
};

// Draws points on the level set (random rays scaled onto S), or takes the
// caller's points, and accumulates the residual maxima above. Throws
// std::runtime_error when Delta(H) vanishes at a sample and
// std::invalid_argument for dimension mismatches.
LiouvilleReport liouville_restriction_check(const LiouvilleSpec& spec);
LiouvilleReport liouville_restriction_check(const LiouvilleSpec& spec,
                                            const std::vector<Eigen::VectorXd>& points);

// The Reeb vector of the restricted contact form at one point, in ambient
// coordinates; the building block the report aggregates.
Eigen::VectorXd liouville_reeb_at(const LiouvilleSpec& spec, const Eigen::VectorXd& point);

}  // namespace cq
