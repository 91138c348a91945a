#pragma once

#include <Eigen/Core>

#include <optional>

namespace mpln::linalg {

/// Lower Cholesky factor together with the diagonal jitter that was needed
/// to obtain it (0 when the matrix factored as given).
struct Cholesky {
  Eigen::MatrixXd lower;
  double jitter = 0.0;
};

/// Factors `a` (assumed symmetric). On failure, retries with
/// jitter = 1e-8 * mean(diag) added to the diagonal, escalating x10 up to
/// 1e-2 * mean(diag). Returns nullopt when every attempt fails.
std::optional<Cholesky> robust_cholesky(const Eigen::MatrixXd& a);

/// log|A| from its lower Cholesky factor.
double log_det(const Eigen::MatrixXd& lower);

/// Solves A x = b given the lower Cholesky factor of A.
Eigen::VectorXd chol_solve(const Eigen::MatrixXd& lower, const Eigen::VectorXd& b);

/// A^{-1} given the lower Cholesky factor of A.
Eigen::MatrixXd chol_inverse(const Eigen::MatrixXd& lower);

/// (A + A^T) / 2.
Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& a);

}  // namespace mpln::linalg
