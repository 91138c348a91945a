#pragma once

#include "mpln/count_data.hpp"
#include "mpln/criteria.hpp"
#include "mpln/densities.hpp"
#include "mpln/responsibilities.hpp"
#include "mpln/sampler.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mpln {

enum class InitMethod { kmeans, random };

std::string_view to_string(InitMethod method) noexcept;
InitMethod parse_init_method(std::string_view name);

/// Lloyd's algorithm with k-means++ seeding and at most `iters` sweeps.
/// A cluster that empties is re-seeded with the point farthest from its
/// assigned centroid. Throws std::invalid_argument when k > n or k < 1.
std::vector<int> kmeans(const Eigen::MatrixXd& points, int k, int iters, std::uint64_t seed);

/// Per-(observation, component) posterior summaries from one E-step.
struct LatentStats {
  Eigen::Index n = 0;
  Eigen::Index g = 0;
  Eigen::Index d = 0;
  /// theta_mean[i * g + k] is the posterior mean for observation i, component k.
  std::vector<Eigen::VectorXd> theta_mean;
  /// Posterior scatter about the component mean used in the E-step.
  std::vector<Eigen::MatrixXd> scatter;
  /// Gate outcome of the accepted chain set for every cell.
  std::vector<double> rhat_max;
  std::vector<double> neff_min;
  std::vector<int> retries;
  std::vector<bool> gate_pass;

  std::size_t cell(Eigen::Index i, Eigen::Index k) const noexcept {
    return static_cast<std::size_t>(i * g + k);
  }
  /// Scatter of cell (i, k) re-centred at `center` (parallel-axis identity).
  Eigen::MatrixXd scatter_about(Eigen::Index i, Eigen::Index k, const Eigen::VectorXd& old_center,
                                const Eigen::VectorXd& center) const;
};

/// Summary of one MCMC-EM iteration.
struct IterationSummary {
  int iter = 0;
  int chain_length = 0;
  double loglik = 0.0;
  double rhat_max = 0.0;
  double neff_min = 0.0;
  int resamples = 0;
  int gate_failures = 0;
  bool hw_tested = false;
  bool hw_pass = false;
};

struct FitConfig {
  int g = 1;
  InitMethod init_method = InitMethod::kmeans;
  int init_runs = 3;
  int init_iters = 10;
  /// Base chain length during the short initialization runs.
  int init_base_iters = 500;
  int max_em_iters = 200;
  int min_em_iters = 10;
  double hw_alpha = 0.05;
  SamplerConfig sampler;
  std::uint64_t seed = 1;
  /// Worker threads for the (observation, component) sampling grid. Results
  /// do not depend on this value.
  int threads = 1;

  void validate() const;
};

/// Settings for a single E-step.
struct EStepSettings {
  SamplerConfig sampler;
  /// Chain length before any gate failures (grow_schedule base).
  int base_iters = 1000;
  int em_iter = 1;
  std::uint64_t seed = 1;
  /// Distinguishes the random streams of initialization runs and the main run.
  std::uint64_t stream = 0;
  int threads = 1;
};

struct EStepResult {
  Responsibilities resp;
  LatentStats stats;
  /// Per-observation log normalizers (log sum_g pi_g f(y_i | theta_ig) f(theta_ig)).
  Eigen::VectorXd row_loglik;
  IterationSummary summary;
};

/// Stable per-observation keys (hash of the gene id) used to derive sampler
/// seeds, so results follow the observation rather than its row position.
std::vector<std::uint64_t> observation_keys(const CountMatrix& counts);

/// Samples every (i, g) cell, summarizes the chains, and forms
/// responsibilities from log pi_g + component_joint_log_density at the
/// posterior mean. Failed chain gates are resampled with longer chains up
/// to sampler.max_retries times, after which the cell is used as is.
EStepResult e_step(const CountMatrix& counts, const NormalizationFactors& s,
                   const MixtureParams& params, const EStepSettings& settings);

struct MStepResult {
  MixtureParams params;
  /// Components whose total responsibility fell below 1e-8 (kept frozen).
  std::vector<int> empty_components;
  /// Components whose covariance could not be repaired (kept frozen).
  std::vector<int> degenerate_components;
};

/// Closed-form updates of pi, mu and Sigma. The covariance update is centred
/// at the new mean. `previous` supplies the means used during the E-step and
/// the parameters of frozen components.
MStepResult m_step(const Responsibilities& resp, const LatentStats& stats,
                   const CountMatrix& counts, const MixtureParams& previous);

/// sum_i log sum_g exp(log pi_g + component_joint_log_density(y_i, theta_ig, s, params_g)).
double observed_log_likelihood(const CountMatrix& counts, const NormalizationFactors& s,
                               const MixtureParams& params, const LatentStats& stats);

/// Mixture parameters implied by a hard partition in the transformed space
/// log((y + 1) / s). Throws std::invalid_argument when a label is unused.
MixtureParams params_from_partition(const Eigen::MatrixXd& transformed,
                                    std::span<const int> labels, int g);

/// log((y_ij + 1) / s_j).
Eigen::MatrixXd transform_counts(const CountMatrix& counts, const NormalizationFactors& s);

struct InitResult {
  Responsibilities resp;
  MixtureParams params;
  double loglik = 0.0;
  int best_run = 0;
  std::vector<double> run_logliks;
  /// Hard labels each run started from.
  std::vector<std::vector<int>> starting_labels;
};

/// Runs cfg.init_runs short MCMC-EM runs (cfg.init_iters iterations each)
/// from k-means or random hard partitions and keeps the run with the highest
/// final log-likelihood.
InitResult initialize(const CountMatrix& counts, const NormalizationFactors& s,
                      const FitConfig& cfg);

struct FitResult {
  int g = 0;
  MixtureParams params;
  Responsibilities resp;
  std::vector<double> loglik_trace;
  bool converged = false;
  int em_iters_used = 0;
  std::optional<CriteriaSet> criteria;
  int k_free = 0;
  std::vector<IterationSummary> diagnostics_log;
  int effective_map_clusters = 0;
  std::vector<int> empty_components;
  std::vector<std::string> warnings;
  /// Set when the fit failed; the result is then flagged and unconverged.
  std::optional<std::string> error;
  double init_loglik = 0.0;
  /// 0-based index of the initialization run that was kept.
  int best_init_run = 0;
  /// Row ids in the order of resp rows (the input order).
  std::vector<std::string> row_ids;

  bool ok() const noexcept { return !error.has_value(); }
  double final_loglik() const {
    return loglik_trace.empty() ? -std::numeric_limits<double>::infinity()
                                : loglik_trace.back();
  }
};

/// Initialize, then iterate E-step / M-step until the Heidelberger-Welch
/// test accepts stationarity of the log-likelihood trace (tested from
/// cfg.min_em_iters on) or cfg.max_em_iters is reached. Rows are processed in
/// a canonical order keyed by gene id, so permuting the input rows permutes
/// the output identically. Never throws on degenerate data; failures are
/// reported through FitResult::error.
FitResult fit_single_g(const CountMatrix& counts, const NormalizationFactors& s,
                       const FitConfig& cfg);

}  // namespace mpln
