#include "mpln/densities.hpp"

#include "mpln/linalg.hpp"

#include <cmath>
#include <string>

namespace mpln {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

void check_dims(Eigen::Index a, Eigen::Index b, const char* what) {
  if (a != b) {
    throw std::invalid_argument(std::string("dimension mismatch: ") + what + " (" +
                                std::to_string(a) + " vs " + std::to_string(b) + ")");
  }
}

}  // namespace

ComponentParams::ComponentParams(Eigen::VectorXd mu, const Eigen::MatrixXd& sigma)
    : mu_(std::move(mu)) {
  check_dims(sigma.rows(), mu_.size(), "sigma rows vs mu");
  check_dims(sigma.cols(), mu_.size(), "sigma cols vs mu");
  if (mu_.size() == 0) throw std::invalid_argument("component dimension must be >= 1");
  if (!mu_.allFinite() || !sigma.allFinite()) {
    throw std::invalid_argument("component parameters must be finite");
  }
  Eigen::MatrixXd sym = linalg::symmetrize(sigma);
  auto chol = linalg::robust_cholesky(sym);
  if (!chol) throw DegenerateCovariance("covariance is not positive definite after jitter repair");
  jitter_ = chol->jitter;
  sigma_ = std::move(sym);
  sigma_.diagonal().array() += jitter_;
  chol_ = std::move(chol->lower);
  precision_ = linalg::chol_inverse(chol_);
  log_det_ = linalg::log_det(chol_);
}

void MixtureParams::validate() const {
  if (weights.size() < 1) throw std::invalid_argument("mixture needs at least one component");
  if (static_cast<Eigen::Index>(components.size()) != weights.size()) {
    throw std::invalid_argument("weights and components disagree in length");
  }
  if ((weights.array() <= 0).any() || !weights.allFinite()) {
    throw std::invalid_argument("mixing weights must be strictly positive");
  }
  if (std::abs(weights.sum() - 1.0) > 1e-10) {
    throw std::invalid_argument("mixing weights must sum to one");
  }
  for (const auto& c : components) check_dims(c.dim(), components.front().dim(), "component");
}

double log_factorial(std::int64_t y) {
  if (y < 0) throw std::invalid_argument("log_factorial of a negative count");
  int sign = 0;
  return ::lgamma_r(static_cast<double>(y) + 1.0, &sign);
}

double poisson_log_pmf(std::int64_t y, double log_rate) {
  if (y < 0) throw std::invalid_argument("Poisson count must be nonnegative");
  return static_cast<double>(y) * log_rate - std::exp(log_rate) - log_factorial(y);
}

double mvn_log_density(const Eigen::VectorXd& x, const ComponentParams& params) {
  check_dims(x.size(), params.dim(), "x vs mu");
  Eigen::VectorXd z =
      params.sigma_chol().triangularView<Eigen::Lower>().solve(x - params.mu());
  const auto d = static_cast<double>(x.size());
  return -0.5 * d * kLog2Pi - params.sigma_chol().diagonal().array().log().sum() -
         0.5 * z.squaredNorm();
}

double latent_log_posterior(const Eigen::VectorXd& theta, const Eigen::VectorXd& y,
                            const NormalizationFactors& s, const ComponentParams& params) {
  check_dims(theta.size(), params.dim(), "theta vs mu");
  check_dims(y.size(), params.dim(), "y vs mu");
  check_dims(s.size(), params.dim(), "s vs mu");
  Eigen::ArrayXd eta = theta.array() + s.log_s().array();
  return (y.array() * eta - eta.exp()).sum() + mvn_log_density(theta, params);
}

Eigen::VectorXd latent_log_posterior_grad(const Eigen::VectorXd& theta,
                                          const Eigen::VectorXd& y,
                                          const NormalizationFactors& s,
                                          const ComponentParams& params) {
  check_dims(theta.size(), params.dim(), "theta vs mu");
  check_dims(y.size(), params.dim(), "y vs mu");
  check_dims(s.size(), params.dim(), "s vs mu");
  Eigen::VectorXd rate = (theta.array() + s.log_s().array()).exp().matrix();
  return y - rate - linalg::chol_solve(params.sigma_chol(), theta - params.mu());
}

double component_joint_log_density(const Eigen::VectorXd& y, const Eigen::VectorXd& theta,
                                   const NormalizationFactors& s,
                                   const ComponentParams& params) {
  check_dims(theta.size(), params.dim(), "theta vs mu");
  check_dims(y.size(), params.dim(), "y vs mu");
  check_dims(s.size(), params.dim(), "s vs mu");
  double log_fact = 0.0;
  for (Eigen::Index j = 0; j < y.size(); ++j) {
    log_fact += log_factorial(static_cast<std::int64_t>(std::llround(y[j])));
  }
  return latent_log_posterior(theta, y, s, params) - log_fact;
}

MarginalMoments mpln_marginal_moments(const ComponentParams& params,
                                      const NormalizationFactors& s) {
  check_dims(s.size(), params.dim(), "s vs mu");
  Eigen::ArrayXd var_diag = params.sigma().diagonal().array();
  Eigen::ArrayXd mean = s.s.array() * (params.mu().array() + 0.5 * var_diag).exp();
  // expm1 keeps precision as Sigma_jj -> 0.
  Eigen::ArrayXd variance(mean.size());
  for (Eigen::Index j = 0; j < mean.size(); ++j) {
    variance[j] = mean[j] + mean[j] * mean[j] * std::expm1(var_diag[j]);
  }
  return {mean.matrix(), variance.matrix()};
}

LatentTarget::LatentTarget(const Eigen::VectorXd& y, const NormalizationFactors& s,
                           const ComponentParams& params) {
  const auto d = params.dim();
  check_dims(y.size(), d, "y vs mu");
  check_dims(s.size(), d, "s vs mu");
  y_.assign(y.data(), y.data() + d);
  log_s_.resize(static_cast<std::size_t>(d));
  for (Eigen::Index j = 0; j < d; ++j) log_s_[static_cast<std::size_t>(j)] = std::log(s.s[j]);
  mu_.assign(params.mu().data(), params.mu().data() + d);
  precision_.resize(static_cast<std::size_t>(d * d));
  for (Eigen::Index r = 0; r < d; ++r) {
    for (Eigen::Index c = 0; c < d; ++c) {
      precision_[static_cast<std::size_t>(r * d + c)] = params.precision()(r, c);
    }
  }
  log_norm_ = -0.5 * static_cast<double>(d) * kLog2Pi - 0.5 * params.log_det();
}

LatentTarget LatentTarget::prior_only(const ComponentParams& params) {
  LatentTarget t(Eigen::VectorXd::Zero(params.dim()), NormalizationFactors::ones(params.dim()),
                 params);
  t.likelihood_ = false;
  return t;
}

double LatentTarget::log_density(std::span<const double> theta) const {
  const std::size_t d = mu_.size();
  double quad = 0.0;
  double lik = 0.0;
  for (std::size_t r = 0; r < d; ++r) {
    const double* row = precision_.data() + r * d;
    double acc = 0.0;
    for (std::size_t c = 0; c < d; ++c) acc += row[c] * (theta[c] - mu_[c]);
    quad += (theta[r] - mu_[r]) * acc;
    if (likelihood_) {
      const double eta = theta[r] + log_s_[r];
      lik += y_[r] * eta - std::exp(eta);
    }
  }
  return lik - 0.5 * quad + log_norm_;
}

double LatentTarget::log_density_grad(std::span<const double> theta,
                                      std::span<double> grad) const {
  const std::size_t d = mu_.size();
  double quad = 0.0;
  double lik = 0.0;
  for (std::size_t r = 0; r < d; ++r) {
    const double* row = precision_.data() + r * d;
    double acc = 0.0;
    for (std::size_t c = 0; c < d; ++c) acc += row[c] * (theta[c] - mu_[c]);
    quad += (theta[r] - mu_[r]) * acc;
    grad[r] = -acc;
    if (likelihood_) {
      const double eta = theta[r] + log_s_[r];
      const double rate = std::exp(eta);
      lik += y_[r] * eta - rate;
      grad[r] += y_[r] - rate;
    }
  }
  return lik - 0.5 * quad + log_norm_;
}

Eigen::MatrixXd LatentTarget::curvature(const Eigen::VectorXd& theta) const {
  const auto d = dim();
  check_dims(theta.size(), d, "theta vs mu");
  Eigen::MatrixXd out(d, d);
  for (Eigen::Index r = 0; r < d; ++r) {
    for (Eigen::Index c = 0; c < d; ++c) out(r, c) = precision_[static_cast<std::size_t>(r * d + c)];
    if (likelihood_) out(r, r) += std::exp(theta[r] + log_s_[static_cast<std::size_t>(r)]);
  }
  return out;
}

Eigen::VectorXd LatentTarget::initial_point() const {
  const auto d = dim();
  Eigen::VectorXd init(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const auto k = static_cast<std::size_t>(j);
    init[j] = likelihood_ ? std::log((y_[k] + 0.5) / std::exp(log_s_[k])) : mu_[k];
  }
  return init;
}

}  // namespace mpln
