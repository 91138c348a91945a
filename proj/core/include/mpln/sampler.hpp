#pragma once

#include "mpln/count_data.hpp"
#include "mpln/densities.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace mpln {

class SamplerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Kinetic energy metric for HMC.
enum class MassMatrix {
  identity,
  /// Fixed dense metric equal to the target's negative Hessian at the
  /// starting point (a Laplace approximation of the posterior precision).
  curvature,
};

struct SamplerConfig {
  int chains = 3;
  int total_iters = 1000;
  double warmup_fraction = 0.5;
  int leapfrog_steps = 10;
  double target_accept = 0.8;
  int max_retries = 5;
  MassMatrix mass = MassMatrix::curvature;

  /// Throws std::invalid_argument for out-of-range settings.
  void validate() const;

  int warmup_iters() const noexcept;
  int kept_iters() const noexcept { return total_iters - warmup_iters(); }
};

/// Per-chain bookkeeping from the post-warmup phase.
struct ChainStats {
  double step_size = 0.0;
  double accept_rate = 0.0;
  double divergence_rate = 0.0;
  /// Mean |H(end) - H(start)| over accepted transitions.
  double mean_abs_energy_error = 0.0;
  int step_halvings = 0;
};

/// Post-warmup draws of the latent log-rates. Warmup draws are never stored.
struct ChainSet {
  /// One N x d matrix per chain.
  std::vector<Eigen::MatrixXd> draws;
  int warmup_len = 0;
  std::uint64_t base_seed = 0;
  std::vector<ChainStats> stats;

  int chains() const noexcept { return static_cast<int>(draws.size()); }
  Eigen::Index iterations() const noexcept { return draws.empty() ? 0 : draws.front().rows(); }
  Eigen::Index dim() const noexcept { return draws.empty() ? 0 : draws.front().cols(); }
};

/// Hamiltonian Monte Carlo on an arbitrary latent target. Each chain starts
/// at `init` plus N(0, 0.1^2) jitter, adapts its step size by dual averaging
/// during warmup toward `cfg.target_accept`, and then runs with the adapted
/// step scaled by U(0.2, 1) per transition so that trajectory lengths vary
/// and never lock onto a period of the target. Chain c draws its randomness
/// from streams derived from (seed, c), so the result is a pure function of
/// the arguments.
///
/// Throws SamplerError when the log density is not finite at the starting
/// point, or when more than half of the post-warmup transitions diverge even
/// after `cfg.max_retries` step-size halvings.
ChainSet sample_target(const LatentTarget& target, const Eigen::VectorXd& init,
                       const SamplerConfig& cfg, std::uint64_t seed);

/// Draws from f(theta | y, mu, Sigma) for one observation and one component.
ChainSet sample_latent(const Eigen::VectorXd& y, const NormalizationFactors& s,
                       const ComponentParams& params, const SamplerConfig& cfg,
                       std::uint64_t seed);

/// Average over every chain and retained draw.
Eigen::VectorXd posterior_mean(const ChainSet& chains);

/// (1 / mN) sum_k (theta_k - center)(theta_k - center)^T over every retained draw.
Eigen::MatrixXd posterior_scatter(const ChainSet& chains, const Eigen::VectorXd& center);

/// Chain length for an EM iteration: base + 10 (em_iter - 1) + 100 failures.
int grow_schedule(int em_iter, int base, int failures);

}  // namespace mpln
