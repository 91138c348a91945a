#pragma once

#include "mpln/count_data.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace mpln {

/// Raised when a covariance matrix cannot be factored even after jitter.
class DegenerateCovariance : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mean and covariance of one component's latent Gaussian layer, carried
/// together with its Cholesky factor and precision matrix.
///
/// The stored covariance is the symmetrized input plus whatever diagonal
/// jitter was needed to factor it, so `sigma_chol() * sigma_chol()^T`
/// always reproduces `sigma()`.
class ComponentParams {
 public:
  ComponentParams() = default;

  /// Throws DegenerateCovariance if sigma cannot be repaired, and
  /// std::invalid_argument on dimension mismatch or non-finite input.
  ComponentParams(Eigen::VectorXd mu, const Eigen::MatrixXd& sigma);

  const Eigen::VectorXd& mu() const noexcept { return mu_; }
  const Eigen::MatrixXd& sigma() const noexcept { return sigma_; }
  const Eigen::MatrixXd& sigma_chol() const noexcept { return chol_; }
  const Eigen::MatrixXd& precision() const noexcept { return precision_; }
  double log_det() const noexcept { return log_det_; }
  double jitter() const noexcept { return jitter_; }
  Eigen::Index dim() const noexcept { return mu_.size(); }

 private:
  Eigen::VectorXd mu_;
  Eigen::MatrixXd sigma_;
  Eigen::MatrixXd chol_;
  Eigen::MatrixXd precision_;
  double log_det_ = 0.0;
  double jitter_ = 0.0;
};

/// Mixing proportions and per-component latent Gaussian parameters.
struct MixtureParams {
  Eigen::VectorXd weights;
  std::vector<ComponentParams> components;

  Eigen::Index g() const noexcept { return weights.size(); }
  Eigen::Index dim() const noexcept { return components.empty() ? 0 : components.front().dim(); }

  /// Throws std::invalid_argument unless weights are positive, sum to one
  /// within 1e-10, and all components share a dimension.
  void validate() const;
};

/// log(y!) via log-gamma.
double log_factorial(std::int64_t y);

/// y * log_rate - exp(log_rate) - log(y!).
double poisson_log_pmf(std::int64_t y, double log_rate);

/// Gaussian log density evaluated with triangular solves against the
/// cached Cholesky factor.
double mvn_log_density(const Eigen::VectorXd& x, const ComponentParams& params);

/// Log of f(y | theta) f(theta | mu, Sigma) without the -sum log(y_j!) term:
/// sum_j [y_j (theta_j + log s_j) - exp(theta_j + log s_j)] + log N(theta; mu, Sigma).
double latent_log_posterior(const Eigen::VectorXd& theta, const Eigen::VectorXd& y,
                            const NormalizationFactors& s, const ComponentParams& params);

/// Gradient of latent_log_posterior in theta:
/// y - exp(theta + log s) - Sigma^{-1} (theta - mu), using Cholesky solves.
Eigen::VectorXd latent_log_posterior_grad(const Eigen::VectorXd& theta,
                                          const Eigen::VectorXd& y,
                                          const NormalizationFactors& s,
                                          const ComponentParams& params);

/// sum_j log Poisson(y_j; exp(theta_j + log s_j)) + log N(theta; mu, Sigma).
double component_joint_log_density(const Eigen::VectorXd& y, const Eigen::VectorXd& theta,
                                   const NormalizationFactors& s,
                                   const ComponentParams& params);

struct MarginalMoments {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
};

/// Per-coordinate mean and variance of the Poisson-log normal marginal:
/// mean_j = s_j exp(mu_j + Sigma_jj / 2), var_j = mean_j + mean_j^2 (exp(Sigma_jj) - 1).
MarginalMoments mpln_marginal_moments(const ComponentParams& params,
                                      const NormalizationFactors& s);

/// Unnormalized log posterior of the latent log-rates for a single
/// observation under one component, laid out for repeated evaluation by
/// the sampler. Evaluation allocates nothing.
class LatentTarget {
 public:
  LatentTarget(const Eigen::VectorXd& y, const NormalizationFactors& s,
               const ComponentParams& params);

  /// Gaussian prior alone (the Poisson term is switched off). Used to check
  /// the sampler against a target with known moments.
  static LatentTarget prior_only(const ComponentParams& params);

  Eigen::Index dim() const noexcept { return static_cast<Eigen::Index>(mu_.size()); }
  bool has_likelihood() const noexcept { return likelihood_; }

  double log_density(std::span<const double> theta) const;

  /// Returns the log density and writes its gradient into `grad`.
  double log_density_grad(std::span<const double> theta, std::span<double> grad) const;

  /// Negative Hessian at theta: Sigma^{-1} plus diag(s_j exp(theta_j)) from
  /// the Poisson term. Always symmetric positive definite.
  Eigen::MatrixXd curvature(const Eigen::VectorXd& theta) const;

  /// The moment-matched starting point log((y + 0.5) / s); the prior mean
  /// for prior-only targets.
  Eigen::VectorXd initial_point() const;

 private:
  LatentTarget() = default;

  std::vector<double> y_;
  std::vector<double> log_s_;
  std::vector<double> mu_;
  std::vector<double> precision_;  // row-major d x d
  double log_norm_ = 0.0;
  bool likelihood_ = true;
};

}  // namespace mpln
