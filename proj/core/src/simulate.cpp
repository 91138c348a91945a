#include "mpln/simulate.hpp"

#include "mpln/linalg.hpp"
#include "mpln/rng.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <cmath>
#include <random>
#include <string>

namespace mpln {

namespace {

Eigen::MatrixXd symmetric6(std::initializer_list<double> values) {
  Eigen::MatrixXd m(6, 6);
  auto it = values.begin();
  for (int r = 0; r < 6; ++r) {
    for (int c = 0; c < 6; ++c) m(r, c) = *it++;
  }
  return m;
}

}  // namespace

void SimSpec::validate() const {
  if (n < 1) throw std::invalid_argument("simulation needs n >= 1");
  if (g() < 1) throw std::invalid_argument("simulation needs at least one component");
  if (d() < 1) throw std::invalid_argument("simulation needs d >= 1");
  if (mus.rows() != g()) throw std::invalid_argument("mus must have one row per component");
  if (static_cast<Eigen::Index>(sigmas.size()) != g()) {
    throw std::invalid_argument("sigmas must have one matrix per component");
  }
  if ((weights.array() < 0).any() || std::abs(weights.sum() - 1.0) > 1e-10) {
    throw std::invalid_argument("weights must form a simplex");
  }
  if (s.size() != d() || (s.s.array() <= 0).any()) {
    throw std::invalid_argument("normalization factors must be positive with length d");
  }
  for (const auto& sigma : sigmas) {
    if (sigma.rows() != d() || sigma.cols() != d()) {
      throw std::invalid_argument("covariance dimension does not match d");
    }
    Eigen::LLT<Eigen::MatrixXd> llt(linalg::symmetrize(sigma));
    if (llt.info() != Eigen::Success) {
      throw std::invalid_argument("covariance is not positive definite");
    }
  }
}

Eigen::MatrixXd random_pd_covariance(int d, double eig_low, double eig_high, std::uint64_t seed,
                                     Eigen::VectorXd* eigenvalues) {
  if (d < 1) throw std::invalid_argument("dimension must be >= 1");
  if (!(eig_low > 0 && eig_low <= eig_high)) {
    throw std::invalid_argument("need 0 < eig_low <= eig_high");
  }
  // Q Q^T = I, so equal eigenvalues give c * I whatever Q is.
  if (eig_low == eig_high) {
    if (eigenvalues) *eigenvalues = Eigen::VectorXd::Constant(d, eig_low);
    return eig_low * Eigen::MatrixXd::Identity(d, d);
  }
  Engine rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd gauss(d, d);
  for (int c = 0; c < d; ++c) {
    for (int r = 0; r < d; ++r) gauss(r, c) = normal(rng);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gauss);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd& r = qr.matrixQR();
  for (int j = 0; j < d; ++j) {
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  }
  std::uniform_real_distribution<double> eig(eig_low, eig_high);
  Eigen::VectorXd lambda(d);
  for (int j = 0; j < d; ++j) lambda[j] = eig(rng);
  if (eigenvalues) *eigenvalues = lambda;
  Eigen::MatrixXd sigma = q * lambda.asDiagonal() * q.transpose();
  return linalg::symmetrize(sigma);
}

SimulatedData simulate(const SimSpec& spec) {
  spec.validate();
  const auto n = spec.n;
  const auto d = spec.d();
  const auto g = spec.g();

  std::vector<Eigen::MatrixXd> factors;
  for (const auto& sigma : spec.sigmas) {
    Eigen::LLT<Eigen::MatrixXd> llt(linalg::symmetrize(sigma));
    factors.push_back(llt.matrixL());
  }
  const Eigen::VectorXd log_s = spec.s.log_s();

  Engine rng(derive_seed(spec.seed, {0x5117}));
  std::discrete_distribution<int> component(spec.weights.data(), spec.weights.data() + g);
  std::normal_distribution<double> normal(0.0, 1.0);

  SimulatedData out;
  out.counts.values.resize(n, d);
  out.theta.resize(n, d);
  out.labels.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const int z = component(rng);
    out.labels[static_cast<std::size_t>(i)] = z;
    Eigen::VectorXd theta(d);
    Eigen::VectorXd noise(d);
    int consecutive = 0;
    for (;;) {
      for (Eigen::Index j = 0; j < d; ++j) noise[j] = normal(rng);
      theta = spec.mus.row(z).transpose() + factors[static_cast<std::size_t>(z)] * noise;
      const double max_log_rate = (theta + log_s).maxCoeff();
      if (max_log_rate <= std::log(kMaxPoissonRate)) break;
      ++out.rejections;
      if (++consecutive >= 1000) {
        throw SimulationError("1000 consecutive latent draws exceeded the Poisson rate guard");
      }
    }
    out.theta.row(i) = theta.transpose();
    for (Eigen::Index j = 0; j < d; ++j) {
      std::poisson_distribution<std::int64_t> pois(std::exp(theta[j] + log_s[j]));
      out.counts.values(i, j) = pois(rng);
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) out.counts.row_ids.push_back("gene_" + std::to_string(i + 1));
  for (Eigen::Index j = 0; j < d; ++j) out.counts.col_ids.push_back("sample_" + std::to_string(j + 1));
  return out;
}

SimSpec two_component_design(Eigen::Index n, std::uint64_t seed) {
  SimSpec spec;
  spec.n = n;
  spec.seed = seed;
  spec.weights.resize(2);
  spec.weights << 0.79, 0.21;
  spec.mus.resize(2, 6);
  spec.mus << 6.5, 6, 6, 6, 6, 6,
              2, 2.5, 2, 2, 2, 2;
  spec.sigmas.push_back(symmetric6({
      1.24, -0.36, -0.51, -0.04, -0.54, -0.39,
      -0.36, 1.30, 0.11, 0.23, 0.90, -0.77,
      -0.51, 0.11, 1.25, -0.44, -0.01, 0.04,
      -0.04, 0.23, -0.44, 1.09, 0.84, 0.38,
      -0.54, 0.90, -0.01, 0.84, 1.41, 0.21,
      -0.39, -0.77, 0.04, 0.38, 0.21, 1.33}));
  spec.sigmas.push_back(symmetric6({
      0.70, 0.26, -0.45, -0.30, -0.04, -0.14,
      0.26, 0.70, 0.19, 0.27, -0.07, -0.05,
      -0.45, 0.19, 0.70, 0.29, 0.09, 0.13,
      -0.30, 0.27, 0.29, 0.70, 0.25, -0.04,
      -0.04, -0.07, 0.09, 0.25, 0.70, 0.02,
      -0.14, -0.05, 0.13, -0.04, 0.02, 0.70}));
  spec.s = NormalizationFactors::ones(6);
  return spec;
}

SimSpec three_component_design(Eigen::Index n, std::uint64_t seed) {
  SimSpec spec;
  spec.n = n;
  spec.seed = seed;
  spec.weights.resize(3);
  spec.weights << 0.3, 0.5, 0.2;
  spec.mus.resize(3, 6);
  spec.mus << 3, 3, 3, 3, 3, 3,
              6.5, 6.5, 6.5, 6.5, 6, 6.5,
              1, -1, 1, 1, -1, 1;
  spec.sigmas.push_back(symmetric6({
      1.00, -0.29, -0.41, -0.04, -0.41, -0.31,
      -0.29, 1.00, 0.08, 0.19, 0.66, -0.59,
      -0.41, 0.08, 1.00, -0.38, -0.01, 0.03,
      -0.04, 0.19, -0.38, 1.00, 0.67, 0.31,
      -0.41, 0.66, -0.01, 0.67, 1.00, 0.15,
      -0.31, -0.59, 0.03, 0.31, 0.15, 1.00}));
  spec.sigmas.push_back(symmetric6({
      1.50, -0.03, 0.67, 0.66, -0.65, -1.06,
      -0.03, 1.50, -0.01, 0.52, 0.14, -0.58,
      0.67, -0.01, 1.50, 0.64, 0.28, -0.44,
      0.66, 0.52, 0.64, 1.50, 0.56, -0.96,
      -0.65, 0.14, 0.28, 0.56, 1.50, 0.41,
      -1.06, -0.58, -0.44, -0.96, 0.41, 1.50}));
  spec.sigmas.push_back(symmetric6({
      0.50, 0.30, -0.09, -0.06, 0.04, -0.04,
      0.30, 0.50, -0.02, -0.02, -0.07, -0.17,
      -0.09, -0.02, 0.50, 0.09, 0.26, 0.13,
      -0.06, -0.02, 0.09, 0.50, -0.01, 0.19,
      0.04, -0.07, 0.26, -0.01, 0.50, -0.10,
      -0.04, -0.17, 0.13, 0.19, -0.10, 0.50}));
  spec.s = NormalizationFactors::ones(6);
  return spec;
}

}  // namespace mpln
