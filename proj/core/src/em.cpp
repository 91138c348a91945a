#include "mpln/em.hpp"

#include "mpln/diagnostics.hpp"
#include "mpln/linalg.hpp"
#include "mpln/parallel.hpp"
#include "mpln/rng.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

namespace mpln {

namespace {

// Total responsibility below which a component is treated as empty.
constexpr double kEmptyMass = 1e-8;
// Floor applied to the weight of an empty component so log(pi) stays finite.
constexpr double kWeightFloor = 1e-12;
// Stream tag of the main EM run; initialization runs use 1 + run index.
constexpr std::uint64_t kMainStream = 0;
// Lloyd sweeps used by the k-means initializer.
constexpr int kKmeansSweeps = 100;

Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& rows) {
  const auto n = rows.rows();
  Eigen::MatrixXd centered = rows.rowwise() - rows.colwise().mean();
  if (n < 2) return Eigen::MatrixXd::Zero(rows.cols(), rows.cols());
  return (centered.transpose() * centered) / static_cast<double>(n - 1);
}

/// Covariance that is guaranteed to factor: the sample covariance if usable,
/// otherwise increasingly heavy fallbacks.
ComponentParams component_from_rows(const Eigen::MatrixXd& rows, const Eigen::MatrixXd& pooled) {
  const auto d = rows.cols();
  Eigen::VectorXd mu = rows.colwise().mean().transpose();
  if (rows.rows() > d) {
    try {
      return ComponentParams(mu, sample_covariance(rows));
    } catch (const DegenerateCovariance&) {
    }
  }
  try {
    return ComponentParams(mu, pooled);
  } catch (const DegenerateCovariance&) {
  }
  const double scale = std::max(pooled.diagonal().mean(), 1e-2);
  return ComponentParams(mu, scale * Eigen::MatrixXd::Identity(d, d));
}

std::vector<int> random_partition(Eigen::Index n, int g, std::uint64_t seed) {
  Engine rng(seed);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> labels(static_cast<std::size_t>(n), 0);
  std::uniform_int_distribution<int> pick(0, g - 1);
  for (std::size_t k = 0; k < order.size(); ++k) {
    labels[static_cast<std::size_t>(order[k])] = k < static_cast<std::size_t>(g)
                                                     ? static_cast<int>(k)
                                                     : pick(rng);
  }
  return labels;
}

struct RunOutcome {
  Responsibilities resp;
  MixtureParams params;
  double loglik = 0.0;
};

/// Canonical row order: by hash of the gene id, then by the id itself.
std::vector<Eigen::Index> canonical_order(const CountMatrix& counts) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(counts.rows()));
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::uint64_t> keys = observation_keys(counts);
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    const auto ua = static_cast<std::size_t>(a);
    const auto ub = static_cast<std::size_t>(b);
    if (keys[ua] != keys[ub]) return keys[ua] < keys[ub];
    return counts.row_ids[ua] < counts.row_ids[ub];
  });
  return order;
}

}  // namespace

std::string_view to_string(InitMethod method) noexcept {
  return method == InitMethod::random ? "random" : "kmeans";
}

InitMethod parse_init_method(std::string_view raw) {
  std::string name(raw);
  std::transform(name.begin(), name.end(), name.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (name == "kmeans") return InitMethod::kmeans;
  if (name == "random") return InitMethod::random;
  throw std::invalid_argument("unknown initialization method '" + std::string(raw) + "'");
}

void FitConfig::validate() const {
  if (g < 1) throw std::invalid_argument("g must be >= 1");
  if (init_runs < 1) throw std::invalid_argument("init_runs must be >= 1");
  if (init_iters < 0) throw std::invalid_argument("init_iters must be >= 0");
  if (max_em_iters < 1) throw std::invalid_argument("max_em_iters must be >= 1");
  if (min_em_iters < 1) throw std::invalid_argument("min_em_iters must be >= 1");
  if (!(hw_alpha > 0 && hw_alpha < 1)) throw std::invalid_argument("hw_alpha must lie in (0, 1)");
  if (init_base_iters < 100) throw std::invalid_argument("init_base_iters must be >= 100");
  sampler.validate();
}

Eigen::MatrixXd LatentStats::scatter_about(Eigen::Index i, Eigen::Index k,
                                           const Eigen::VectorXd& old_center,
                                           const Eigen::VectorXd& center) const {
  const auto c = cell(i, k);
  const Eigen::VectorXd& mean = theta_mean[c];
  // scatter about `center` = posterior covariance + (mean - center)(mean - center)^T
  Eigen::MatrixXd cov = scatter[c] - (mean - old_center) * (mean - old_center).transpose();
  Eigen::VectorXd shift = mean - center;
  return linalg::symmetrize(cov + shift * shift.transpose());
}

std::vector<std::uint64_t> observation_keys(const CountMatrix& counts) {
  std::vector<std::uint64_t> keys;
  keys.reserve(counts.row_ids.size());
  for (const auto& id : counts.row_ids) keys.push_back(stable_hash(id));
  return keys;
}

Eigen::MatrixXd transform_counts(const CountMatrix& counts, const NormalizationFactors& s) {
  if (s.size() != counts.cols()) throw std::invalid_argument("factor count does not match samples");
  Eigen::MatrixXd out = (counts.values.cast<double>().array() + 1.0).log().matrix();
  out.rowwise() -= s.log_s().transpose();
  return out;
}

MixtureParams params_from_partition(const Eigen::MatrixXd& transformed,
                                    std::span<const int> labels, int g) {
  const auto n = transformed.rows();
  if (static_cast<Eigen::Index>(labels.size()) != n) {
    throw std::invalid_argument("label count does not match rows");
  }
  const Eigen::MatrixXd pooled = sample_covariance(transformed);
  MixtureParams out;
  out.weights.resize(g);
  for (int k = 0; k < g; ++k) {
    std::vector<Eigen::Index> members;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (labels[static_cast<std::size_t>(i)] == k) members.push_back(i);
    }
    if (members.empty()) {
      throw std::invalid_argument("component " + std::to_string(k) + " has no members");
    }
    Eigen::MatrixXd rows(static_cast<Eigen::Index>(members.size()), transformed.cols());
    for (std::size_t r = 0; r < members.size(); ++r) {
      rows.row(static_cast<Eigen::Index>(r)) = transformed.row(members[r]);
    }
    out.weights[k] = static_cast<double>(members.size()) / static_cast<double>(n);
    out.components.push_back(component_from_rows(rows, pooled));
  }
  out.weights /= out.weights.sum();
  return out;
}

EStepResult e_step(const CountMatrix& counts, const NormalizationFactors& s,
                   const MixtureParams& params, const EStepSettings& settings) {
  params.validate();
  const auto n = counts.rows();
  const auto g = params.g();
  const auto d = counts.cols();
  if (params.dim() != d) throw std::invalid_argument("parameters and counts differ in dimension");
  if (s.size() != d) throw std::invalid_argument("factor count does not match samples");

  const auto keys = observation_keys(counts);
  EStepResult out;
  LatentStats& stats = out.stats;
  stats.n = n;
  stats.g = g;
  stats.d = d;
  const auto cells = static_cast<std::size_t>(n * g);
  stats.theta_mean.resize(cells);
  stats.scatter.resize(cells);
  stats.rhat_max.resize(cells);
  stats.neff_min.resize(cells);
  stats.retries.resize(cells);
  stats.gate_pass.resize(cells);
  Eigen::MatrixXd log_weights(n, g);

  parallel_for(cells, settings.threads, [&](std::size_t cell) {
    const auto i = static_cast<Eigen::Index>(cell / static_cast<std::size_t>(g));
    const auto k = static_cast<Eigen::Index>(cell % static_cast<std::size_t>(g));
    const ComponentParams& comp = params.components[static_cast<std::size_t>(k)];
    const Eigen::VectorXd y = counts.row_as_double(i);
    const LatentTarget target(y, s, comp);
    const Eigen::VectorXd init = target.initial_point();

    SamplerConfig cfg = settings.sampler;
    int failures = 0;
    ChainSet chains;
    ChainDiagnostics diag;
    for (;;) {
      cfg.total_iters = grow_schedule(settings.em_iter, settings.base_iters, failures);
      const auto seed = derive_seed(
          settings.seed, {settings.stream, keys[static_cast<std::size_t>(i)],
                          static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(settings.em_iter),
                          static_cast<std::uint64_t>(failures)});
      chains = sample_target(target, init, cfg, seed);
      diag = gate_chains(chains);
      if (diag.pass || failures >= settings.sampler.max_retries) break;
      ++failures;
    }

    stats.theta_mean[cell] = posterior_mean(chains);
    stats.scatter[cell] = posterior_scatter(chains, comp.mu());
    stats.rhat_max[cell] = diag.max_rhat();
    stats.neff_min[cell] = diag.min_n_eff();
    stats.retries[cell] = failures;
    stats.gate_pass[cell] = diag.pass;
    const double joint = component_joint_log_density(y, stats.theta_mean[cell], s, comp);
    if (!std::isfinite(joint)) {
      throw std::runtime_error("non-finite joint density for observation '" +
                               counts.row_ids[static_cast<std::size_t>(i)] + "'");
    }
    log_weights(i, k) = std::log(params.weights[k]) + joint;
  });

  out.resp = Responsibilities::from_log_weights(log_weights, &out.row_loglik);

  IterationSummary& summary = out.summary;
  summary.iter = settings.em_iter;
  summary.chain_length = grow_schedule(settings.em_iter, settings.base_iters, 0);
  summary.rhat_max = *std::max_element(stats.rhat_max.begin(), stats.rhat_max.end());
  summary.neff_min = *std::min_element(stats.neff_min.begin(), stats.neff_min.end());
  summary.resamples = std::accumulate(stats.retries.begin(), stats.retries.end(), 0);
  summary.gate_failures =
      static_cast<int>(std::count(stats.gate_pass.begin(), stats.gate_pass.end(), false));
  summary.loglik = out.row_loglik.sum();
  return out;
}

MStepResult m_step(const Responsibilities& resp, const LatentStats& stats,
                   const CountMatrix& counts, const MixtureParams& previous) {
  const auto n = resp.n();
  const auto g = resp.g();
  if (n != counts.rows() || n != stats.n) throw std::invalid_argument("m_step: row counts disagree");
  if (g != stats.g || g != previous.g()) throw std::invalid_argument("m_step: component counts disagree");

  MStepResult out;
  out.params.weights.resize(g);
  out.params.components.reserve(static_cast<std::size_t>(g));
  for (Eigen::Index k = 0; k < g; ++k) {
    const ComponentParams& old = previous.components[static_cast<std::size_t>(k)];
    const double mass = resp.z.col(k).sum();
    if (mass < kEmptyMass) {
      out.empty_components.push_back(static_cast<int>(k));
      out.params.weights[k] = kWeightFloor;
      out.params.components.push_back(old);
      continue;
    }
    out.params.weights[k] = mass / static_cast<double>(n);

    Eigen::VectorXd mu = Eigen::VectorXd::Zero(stats.d);
    for (Eigen::Index i = 0; i < n; ++i) mu += resp.z(i, k) * stats.theta_mean[stats.cell(i, k)];
    mu /= mass;

    Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(stats.d, stats.d);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (resp.z(i, k) == 0.0) continue;
      sigma += resp.z(i, k) * stats.scatter_about(i, k, old.mu(), mu);
    }
    sigma /= mass;

    try {
      out.params.components.emplace_back(mu, linalg::symmetrize(sigma));
    } catch (const DegenerateCovariance&) {
      out.degenerate_components.push_back(static_cast<int>(k));
      out.params.components.push_back(old);
    }
  }
  out.params.weights /= out.params.weights.sum();
  return out;
}

double observed_log_likelihood(const CountMatrix& counts, const NormalizationFactors& s,
                               const MixtureParams& params, const LatentStats& stats) {
  const auto n = counts.rows();
  const auto g = params.g();
  if (stats.n != n || stats.g != g) throw std::invalid_argument("stats do not match the data");
  double total = 0.0;
  Eigen::VectorXd terms(g);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd y = counts.row_as_double(i);
    for (Eigen::Index k = 0; k < g; ++k) {
      terms[k] = std::log(params.weights[k]) +
                 component_joint_log_density(y, stats.theta_mean[stats.cell(i, k)], s,
                                             params.components[static_cast<std::size_t>(k)]);
    }
    total += log_sum_exp(terms);
  }
  return total;
}

InitResult initialize(const CountMatrix& counts, const NormalizationFactors& s,
                      const FitConfig& cfg) {
  cfg.validate();
  counts.validate();
  const auto n = counts.rows();
  if (cfg.g > n) throw std::invalid_argument("G exceeds the number of observations");
  const Eigen::MatrixXd transformed = transform_counts(counts, s);

  // Every run would start from the same trivial partition when G = 1.
  const int runs = cfg.g == 1 ? 1 : cfg.init_runs;
  InitResult out;
  std::vector<RunOutcome> outcomes;
  for (int r = 0; r < runs; ++r) {
    const auto run_seed = derive_seed(cfg.seed, {0x1417, static_cast<std::uint64_t>(r)});
    std::vector<int> labels = cfg.init_method == InitMethod::kmeans
                                  ? kmeans(transformed, cfg.g, kKmeansSweeps, run_seed)
                                  : random_partition(n, cfg.g, run_seed);
    RunOutcome run;
    run.params = params_from_partition(transformed, labels, cfg.g);
    run.resp = Responsibilities::hard(labels, cfg.g);
    run.loglik = -std::numeric_limits<double>::infinity();
    for (int t = 1; t <= cfg.init_iters; ++t) {
      EStepSettings es{cfg.sampler, cfg.init_base_iters, t, cfg.seed,
                       static_cast<std::uint64_t>(r + 1), cfg.threads};
      EStepResult e = e_step(counts, s, run.params, es);
      MStepResult m = m_step(e.resp, e.stats, counts, run.params);
      run.params = std::move(m.params);
      run.loglik = observed_log_likelihood(counts, s, run.params, e.stats);
      run.resp = std::move(e.resp);
    }
    out.starting_labels.push_back(std::move(labels));
    out.run_logliks.push_back(run.loglik);
    outcomes.push_back(std::move(run));
  }
  out.best_run = static_cast<int>(std::max_element(out.run_logliks.begin(), out.run_logliks.end()) -
                                  out.run_logliks.begin());
  RunOutcome& best = outcomes[static_cast<std::size_t>(out.best_run)];
  out.resp = std::move(best.resp);
  out.params = std::move(best.params);
  out.loglik = best.loglik;
  return out;
}

FitResult fit_single_g(const CountMatrix& input, const NormalizationFactors& s,
                       const FitConfig& cfg) {
  FitResult result;
  result.g = cfg.g;
  result.row_ids = input.row_ids;
  try {
    cfg.validate();
    input.validate();
    if (cfg.g > input.rows()) throw std::invalid_argument("G exceeds the number of observations");
    result.k_free = count_free_params(cfg.g, static_cast<int>(input.cols()));

    const auto order = canonical_order(input);
    const CountMatrix counts = input.permute_rows(order);

    InitResult init = initialize(counts, s, cfg);
    result.init_loglik = init.loglik;
    result.best_init_run = init.best_run;
    MixtureParams params = std::move(init.params);
    Responsibilities resp = std::move(init.resp);
    std::set<int> empty;

    for (int t = 1; t <= cfg.max_em_iters; ++t) {
      EStepSettings es{cfg.sampler, cfg.sampler.total_iters, t, cfg.seed, kMainStream,
                       cfg.threads};
      EStepResult e = e_step(counts, s, params, es);
      MStepResult m = m_step(e.resp, e.stats, counts, params);
      empty.insert(m.empty_components.begin(), m.empty_components.end());
      for (int k : m.degenerate_components) {
        result.warnings.push_back("iteration " + std::to_string(t) + ": component " +
                                  std::to_string(k) + " covariance degenerate, kept frozen");
      }
      if (e.summary.gate_failures > 0) {
        result.warnings.push_back("iteration " + std::to_string(t) + ": " +
                                  std::to_string(e.summary.gate_failures) +
                                  " chain sets failed the R-hat/N_eff gate after retries");
      }
      params = std::move(m.params);
      resp = std::move(e.resp);
      const double ll = observed_log_likelihood(counts, s, params, e.stats);
      result.loglik_trace.push_back(ll);

      IterationSummary summary = e.summary;
      summary.loglik = ll;
      if (t >= cfg.min_em_iters) {
        summary.hw_tested = true;
        summary.hw_pass = heidelberger_welch(result.loglik_trace, cfg.hw_alpha).stationary;
      }
      result.diagnostics_log.push_back(summary);
      result.em_iters_used = t;
      if (summary.hw_pass) {
        result.converged = true;
        break;
      }
    }

    // Back to the caller's row order.
    Responsibilities restored;
    restored.z.resize(resp.n(), resp.g());
    restored.map_labels.resize(resp.map_labels.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
      const auto dst = order[k];
      restored.z.row(dst) = resp.z.row(static_cast<Eigen::Index>(k));
      restored.map_labels[static_cast<std::size_t>(dst)] = resp.map_labels[k];
    }
    result.resp = std::move(restored);
    result.params = std::move(params);
    result.empty_components.assign(empty.begin(), empty.end());
    result.effective_map_clusters = map_consistency_check(result.resp, cfg.g).effective;
    result.criteria = information_criteria(result.final_loglik(), cfg.g,
                                           static_cast<int>(input.cols()),
                                           static_cast<int>(input.rows()), result.resp);
  } catch (const std::exception& ex) {
    result.error = ex.what();
    result.converged = false;
  }
  return result;
}

}  // namespace mpln
