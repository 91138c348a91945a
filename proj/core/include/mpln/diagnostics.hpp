#pragma once

#include "mpln/sampler.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <span>

namespace mpln {

struct ChainDiagnostics {
  Eigen::VectorXd rhat;
  Eigen::VectorXd n_eff;
  bool pass = false;

  double max_rhat() const { return rhat.size() ? rhat.maxCoeff() : 1.0; }
  double min_n_eff() const { return n_eff.size() ? n_eff.minCoeff() : 0.0; }
};

/// Split-chain potential scale reduction factor, one value per dimension.
/// Each chain is cut into two halves (the middle draw is dropped for odd N)
/// giving 2m sequences of length n; then
///   R = sqrt(((n - 1) / n * W + B / n) / W).
/// W = 0 yields 1 when every sequence mean agrees and +inf otherwise.
/// Throws std::invalid_argument when N < 4.
Eigen::VectorXd potential_scale_reduction(const ChainSet& chains);

/// Multi-chain effective sample size with Geyer's initial positive (and
/// monotone) sequence truncation. Capped at 1.05 mN. A dimension with zero
/// variance reports mN.
Eigen::VectorXd effective_sample_size(const ChainSet& chains);

/// Gate thresholds used by the E-step.
inline constexpr double kRhatThreshold = 1.1;
inline constexpr double kNeffThreshold = 100.0;

/// pass = max R < 1.1 and min N_eff > 100.
ChainDiagnostics gate_chains(const ChainSet& chains);

struct StationarityResult {
  bool stationary = false;
  std::size_t kept_from = 0;
  /// Cramer-von Mises statistic of the last test performed.
  double statistic = 0.0;
};

/// Upper-tail critical value of the Cramer-von Mises (Brownian bridge)
/// distribution. Tabulated for alpha in {0.10, 0.05, 0.025, 0.01}.
double cramer_von_mises_critical(double alpha);

/// Spectral density at frequency zero using a Bartlett lag window of
/// width floor(sqrt(length)).
double spectral_density_zero(std::span<const double> x);

/// Heidelberger-Welch stationarity test. Tests the whole sequence, then
/// discards the first 10%, 20%, ... 50% until one test accepts. The
/// bridge is standardized with the spectral density at zero of the latter
/// half of the retained segment. Sequences shorter than 10 are reported
/// non-stationary; a constant sequence is stationary from index 0.
StationarityResult heidelberger_welch(std::span<const double> sequence, double alpha = 0.05);

}  // namespace mpln
