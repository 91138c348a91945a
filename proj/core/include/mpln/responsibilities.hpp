#pragma once

#include <Eigen/Core>

#include <vector>

namespace mpln {

/// Posterior membership probabilities and their MAP labels.
struct Responsibilities {
  /// n x G, rows sum to one.
  Eigen::MatrixXd z;
  /// argmax_g z(i, g), ties broken toward the lowest index.
  std::vector<int> map_labels;

  Eigen::Index n() const noexcept { return z.rows(); }
  Eigen::Index g() const noexcept { return z.cols(); }

  /// Normalizes each row of log-weights with log-sum-exp and fills the MAP
  /// labels. `row_log_norm`, when given, receives each row's log normalizer.
  static Responsibilities from_log_weights(const Eigen::MatrixXd& log_weights,
                                           Eigen::VectorXd* row_log_norm = nullptr);

  /// One-hot rows for the given labels.
  static Responsibilities hard(const std::vector<int>& labels, int g);
};

/// log(sum(exp(v))) computed stably.
double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v);

}  // namespace mpln
