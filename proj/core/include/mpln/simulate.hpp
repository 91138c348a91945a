#pragma once

#include "mpln/count_data.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace mpln {

class SimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Ground truth for a synthetic MPLN mixture dataset.
struct SimSpec {
  Eigen::Index n = 0;
  Eigen::VectorXd weights;
  /// G x d, one component mean per row.
  Eigen::MatrixXd mus;
  std::vector<Eigen::MatrixXd> sigmas;
  NormalizationFactors s;
  std::uint64_t seed = 1;

  Eigen::Index g() const noexcept { return weights.size(); }
  Eigen::Index d() const noexcept { return mus.cols(); }

  /// Throws std::invalid_argument unless weights form a simplex, every
  /// sigma is positive definite, and all dimensions agree.
  void validate() const;
};

struct SimulatedData {
  CountMatrix counts;
  /// 0-based true component of each observation.
  std::vector<int> labels;
  /// n x d latent log-rates that generated the counts.
  Eigen::MatrixXd theta;
  /// Latent draws rejected because a rate exceeded the overflow guard.
  long rejections = 0;
};

/// Largest Poisson rate the simulator will sample from.
inline constexpr double kMaxPoissonRate = 1e15;

/// Q diag(lambda) Q^T with lambda_j ~ U[eig_low, eig_high] and Q Haar
/// distributed (QR of a Gaussian matrix with the signs of R's diagonal
/// folded into Q). The drawn lambda is copied to `eigenvalues` when given.
Eigen::MatrixXd random_pd_covariance(int d, double eig_low, double eig_high, std::uint64_t seed,
                                     Eigen::VectorXd* eigenvalues = nullptr);

/// z_i ~ Categorical(weights); theta_i ~ N(mu_z, Sigma_z);
/// y_ij ~ Poisson(exp(theta_ij + log s_j)). Latent draws whose rate exceeds
/// kMaxPoissonRate are redrawn; 1000 consecutive rejections raise
/// SimulationError. Genes are named gene_1.. and samples sample_1...
SimulatedData simulate(const SimSpec& spec);

/// Two-component design: mu_1 = (6.5, 6, 6, 6, 6, 6), mu_2 = (2, 2.5, 2, 2, 2, 2),
/// pi_1 = 0.79, with the matching printed 6 x 6 covariances; s = 1.
SimSpec two_component_design(Eigen::Index n, std::uint64_t seed);

/// Three-component design: mu_1 = 3 * 1, mu_2 = (6.5, 6.5, 6.5, 6.5, 6, 6.5),
/// mu_3 = (1, -1, 1, 1, -1, 1), pi = (0.3, 0.5, 0.2); s = 1.
SimSpec three_component_design(Eigen::Index n, std::uint64_t seed);

}  // namespace mpln
