#include "mpln/linalg.hpp"

#include <Eigen/Cholesky>

#include <cmath>

namespace mpln::linalg {

namespace {

std::optional<Eigen::MatrixXd> try_llt(const Eigen::MatrixXd& a) {
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) return std::nullopt;
  Eigen::MatrixXd lower = llt.matrixL();
  if (!lower.allFinite() || (lower.diagonal().array() <= 0).any()) return std::nullopt;
  return lower;
}

}  // namespace

std::optional<Cholesky> robust_cholesky(const Eigen::MatrixXd& a) {
  if (a.rows() != a.cols() || a.rows() == 0 || !a.allFinite()) return std::nullopt;
  if (auto lower = try_llt(a)) return Cholesky{std::move(*lower), 0.0};

  double scale = a.diagonal().mean();
  if (!(scale > 0)) scale = 1.0;
  for (double rel = 1e-8; rel <= 1e-2 * (1 + 1e-9); rel *= 10) {
    double jitter = rel * scale;
    Eigen::MatrixXd shifted = a;
    shifted.diagonal().array() += jitter;
    if (auto lower = try_llt(shifted)) return Cholesky{std::move(*lower), jitter};
  }
  return std::nullopt;
}

double log_det(const Eigen::MatrixXd& lower) {
  return 2.0 * lower.diagonal().array().log().sum();
}

Eigen::VectorXd chol_solve(const Eigen::MatrixXd& lower, const Eigen::VectorXd& b) {
  Eigen::VectorXd x = lower.triangularView<Eigen::Lower>().solve(b);
  lower.transpose().triangularView<Eigen::Upper>().solveInPlace(x);
  return x;
}

Eigen::MatrixXd chol_inverse(const Eigen::MatrixXd& lower) {
  Eigen::MatrixXd x = lower.triangularView<Eigen::Lower>().solve(
      Eigen::MatrixXd::Identity(lower.rows(), lower.cols()));
  lower.transpose().triangularView<Eigen::Upper>().solveInPlace(x);
  return symmetrize(x);
}

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& a) { return 0.5 * (a + a.transpose()); }

}  // namespace mpln::linalg
