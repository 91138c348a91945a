#include "mpln/responsibilities.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace mpln {

double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v) {
  if (v.size() == 0) return -std::numeric_limits<double>::infinity();
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

Responsibilities Responsibilities::from_log_weights(const Eigen::MatrixXd& log_weights,
                                                    Eigen::VectorXd* row_log_norm) {
  Responsibilities out;
  const auto n = log_weights.rows();
  const auto g = log_weights.cols();
  out.z.resize(n, g);
  out.map_labels.resize(static_cast<std::size_t>(n));
  if (row_log_norm) row_log_norm->resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double norm = log_sum_exp(log_weights.row(i).transpose());
    if (!std::isfinite(norm)) throw std::runtime_error("non-finite responsibility normalizer");
    if (row_log_norm) (*row_log_norm)[i] = norm;
    out.z.row(i) = (log_weights.row(i).array() - norm).exp();
    out.z.row(i) /= out.z.row(i).sum();
    int best = 0;
    for (Eigen::Index k = 1; k < g; ++k) {
      if (out.z(i, k) > out.z(i, best)) best = static_cast<int>(k);
    }
    out.map_labels[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

Responsibilities Responsibilities::hard(const std::vector<int>& labels, int g) {
  Responsibilities out;
  out.z = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(labels.size()), g);
  out.map_labels = labels;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= g) throw std::invalid_argument("label out of range");
    out.z(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  return out;
}

}  // namespace mpln
