#pragma once

// Dense linear-algebra helpers shared across the toolkit. Everything here is
// a thin wrapper over Eigen with the failure modes made explicit: solves
// throw SingularSystemError instead of returning garbage, and rank decisions
// use a relative singular-value threshold so callers state tolerances once.

#include <Eigen/Dense>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cq {

inline std::span<const double> as_span(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

inline Eigen::VectorXd to_vector(std::span<const double> s) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(s.size()));
  for (std::size_t i = 0; i < s.size(); ++i) v[static_cast<Eigen::Index>(i)] = s[i];
  return v;
}

class SingularSystemError : public std::runtime_error {
 public:
  explicit SingularSystemError(const std::string& what) : std::runtime_error(what) {}
};

// Solves A x = b for square A, refusing matrices that are singular to the
// given relative threshold.
inline Eigen::VectorXd solve_linear(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                                    const std::string& context, double rel_pivot_tol = 1e-12) {
  Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  lu.setThreshold(rel_pivot_tol);
  if (!lu.isInvertible())
    throw SingularSystemError(context + ": coefficient matrix is singular to tolerance " +
                              std::to_string(rel_pivot_tol));
  return lu.solve(b);
}

// Minimum-norm least-squares solve for (possibly) rectangular systems.
inline Eigen::VectorXd solve_least_squares(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
  return A.bdcSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(b);
}

inline int matrix_rank(const Eigen::MatrixXd& A, double rel_tol = 1e-10) {
  if (A.rows() == 0 || A.cols() == 0) return 0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A);
  svd.setThreshold(rel_tol);
  return static_cast<int>(svd.rank());
}

// Columns span the kernel of A (w.r.t. the same relative threshold); the
// result has n - rank(A) columns and orthonormal columns.
inline Eigen::MatrixXd nullspace(const Eigen::MatrixXd& A, double rel_tol = 1e-10) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  svd.setThreshold(rel_tol);
  const int rank = static_cast<int>(svd.rank());
  const int n = static_cast<int>(A.cols());
  return svd.matrixV().rightCols(n - rank);
}

inline double smallest_singular_value(const Eigen::MatrixXd& A) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A);
  return svd.singularValues().size() > 0 ? svd.singularValues().minCoeff() : 0.0;
}

// Pfaffian of an even-dimensional skew-symmetric matrix by unit-determinant
// congruence elimination (value is exact under such transforms). Used for the
// top-exterior-power coefficient of a contact form, where the determinant
// alone would lose the sign.
inline double pfaffian(Eigen::MatrixXd A) {
  const int n = static_cast<int>(A.rows());
  if (n != A.cols()) throw std::invalid_argument("pfaffian: matrix must be square");
  if (n % 2 != 0) return 0.0;
  if (n == 0) return 1.0;

  double result = 1.0;
  for (int k = 0; k + 1 < n; k += 2) {
    int best = k + 1;
    double best_mag = std::abs(A(k, k + 1));
    for (int j = k + 2; j < n; ++j) {
      if (std::abs(A(k, j)) > best_mag) {
        best = j;
        best_mag = std::abs(A(k, j));
      }
    }
    if (best_mag == 0.0) return 0.0;
    if (best != k + 1) {
      A.row(k + 1).swap(A.row(best));
      A.col(k + 1).swap(A.col(best));
      result = -result;
    }
    const double pivot = A(k, k + 1);
    result *= pivot;
    for (int i = k + 2; i < n; ++i) {
      const double c1 = A(k, i) / pivot;
      A.col(i) -= c1 * A.col(k + 1);
      A.row(i) -= c1 * A.row(k + 1);
      const double c2 = A(k + 1, i) / pivot;
      A.col(i) += c2 * A.col(k);
      A.row(i) += c2 * A.row(k);
    }
  }
  return result;
}

}  // namespace cq
