// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion on
// stdout; progress goes to stderr. Exit status is nonzero when any selected
// criterion fails.
//
//   acceptance                 run everything
//   acceptance --criteria 4,5  run a subset

#include "mpln/criteria.hpp"
#include "mpln/densities.hpp"
#include "mpln/diagnostics.hpp"
#include "mpln/em.hpp"
#include "mpln/pipeline.hpp"
#include "mpln/sampler.hpp"
#include "mpln/serialize.hpp"
#include "mpln/simulate.hpp"

#include "oracles.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

using namespace mpln;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

int worker_count() { return std::max(1u, std::thread::hardware_concurrency()); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int digits = 3) {
  std::ostringstream o;
  o.precision(digits);
  o << std::fixed << v;
  return o.str();
}

MixtureParams truth_of(const SimSpec& spec) {
  MixtureParams p;
  p.weights = spec.weights;
  for (Eigen::Index g = 0; g < spec.g(); ++g)
    p.components.emplace_back(spec.mus.row(g).transpose(), spec.sigmas[static_cast<std::size_t>(g)]);
  return p;
}

// Permutation of fitted components that best matches the true means
// (fitted index for each true component), by exhaustive search.
std::vector<int> match_components(const MixtureParams& fit, const Eigen::MatrixXd& true_mus) {
  std::vector<int> perm(static_cast<std::size_t>(fit.g()));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  double best_cost = INFINITY;
  do {
    double cost = 0;
    for (Eigen::Index g = 0; g < true_mus.rows(); ++g)
      cost += (fit.components[static_cast<std::size_t>(perm[static_cast<std::size_t>(g)])].mu() -
               true_mus.row(g).transpose()).squaredNorm();
    if (cost < best_cost) {
      best_cost = cost;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

struct ReplicateSummary {
  std::map<Criterion, int> g_star;
  double ari_selected = 0;  // ARI of the BIC-selected fit
  std::vector<Eigen::VectorXd> matched_mus;  // fit with the true G, in true order
};

ReplicateSummary fit_replicate(const SimSpec& spec, int g_min, int g_max, std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  auto sim = simulate(spec);
  FitConfig tmpl;
  auto range = fit_range(sim.counts, spec.s, tmpl, g_min, g_max, seed, worker_count());
  ReplicateSummary out;
  for (const auto& sel : range.selections) out.g_star[sel.criterion] = sel.g_star;
  const int bic_g = out.g_star.count(Criterion::bic) ? out.g_star[Criterion::bic] : 0;
  for (const auto& fit : range.fits) {
    if (fit.g == bic_g && fit.ok()) out.ari_selected = adjusted_rand_index(fit.resp.map_labels, sim.labels);
    if (fit.g == spec.g() && fit.ok()) {
      auto perm = match_components(fit.params, spec.mus);
      for (int p : perm) out.matched_mus.push_back(fit.params.components[static_cast<std::size_t>(p)].mu());
    }
  }
  std::cerr << "  replicate seed " << seed << ": G* (BIC, ICL, AIC, AIC3) = (" << out.g_star[Criterion::bic]
            << ", " << out.g_star[Criterion::icl] << ", " << out.g_star[Criterion::aic] << ", "
            << out.g_star[Criterion::aic3] << "), ARI " << fmt(out.ari_selected) << ", "
            << fmt(seconds_since(t0), 0) << " s\n";
  return out;
}

bool all_select(const ReplicateSummary& r, int g) {
  for (Criterion c : kAllCriteria) {
    auto it = r.g_star.find(c);
    if (it == r.g_star.end() || it->second != g) return false;
  }
  return true;
}

// Criteria 1 and 3 share the same ten two-component replicates.
std::vector<ReplicateSummary> two_component_replicates() {
  static std::vector<ReplicateSummary> cache;
  if (cache.empty()) {
    std::cerr << "two-component design: 10 replicates, n = 500, G = 1..3\n";
    for (std::uint64_t r = 1; r <= 10; ++r)
      cache.push_back(fit_replicate(two_component_design(500, 1000 + r), 1, 3, r));
  }
  return cache;
}

Verdict criterion_1() {
  auto reps = two_component_replicates();
  int hits = 0;
  double ari = 0;
  for (const auto& r : reps) {
    hits += all_select(r, 2) ? 1 : 0;
    ari += r.ari_selected / static_cast<double>(reps.size());
  }
  return {hits >= 9 && ari >= 0.95,
          "all four criteria chose G=2 in " + std::to_string(hits) + "/10; mean ARI " + fmt(ari)};
}

Verdict criterion_2() {
  std::cerr << "three-component design: 5 replicates, n = 500, G = 2..4\n";
  int hits = 0;
  double ari = 0;
  for (std::uint64_t r = 1; r <= 5; ++r) {
    auto rep = fit_replicate(three_component_design(500, 2000 + r), 2, 4, 100 + r);
    hits += all_select(rep, 3) ? 1 : 0;
    ari += rep.ari_selected / 5.0;
  }
  return {hits >= 4 && ari >= 0.90,
          "all four criteria chose G=3 in " + std::to_string(hits) + "/5; mean ARI " + fmt(ari)};
}

Verdict criterion_3() {
  auto reps = two_component_replicates();
  auto spec = two_component_design(500, 1);
  std::vector<Eigen::VectorXd> sum(2, Eigen::VectorXd::Zero(6));
  int used = 0;
  for (const auto& r : reps) {
    if (r.matched_mus.size() != 2) continue;
    ++used;
    for (int g = 0; g < 2; ++g) sum[static_cast<std::size_t>(g)] += r.matched_mus[static_cast<std::size_t>(g)];
  }
  if (used == 0) return {false, "no usable G=2 fits"};
  bool ok = used == static_cast<int>(reps.size());
  std::string detail;
  for (int g = 0; g < 2; ++g) {
    const double dist = (sum[static_cast<std::size_t>(g)] / used - spec.mus.row(g).transpose()).norm();
    ok = ok && dist <= 0.30;
    detail += "|mean mu_" + std::to_string(g + 1) + " - mu_" + std::to_string(g + 1) + "| = " + fmt(dist) + "; ";
  }
  return {ok, detail + "over " + std::to_string(used) + " fits"};
}

Verdict criterion_4() {
  // Prior-only target, d = 2, 5000 retained draws per chain.
  Eigen::VectorXd mu(2);
  mu << 1.0, -2.0;
  Eigen::MatrixXd sigma(2, 2);
  sigma << 1.0, 0.6, 0.6, 2.0;
  ComponentParams p(mu, sigma);
  SamplerConfig cfg;
  cfg.total_iters = 10000;
  auto target = LatentTarget::prior_only(p);
  auto chains = sample_target(target, target.initial_point(), cfg, 77);
  auto n_eff = effective_sample_size(chains);
  Eigen::VectorXd mean = posterior_mean(chains);
  bool mean_ok = true;
  for (int j = 0; j < 2; ++j) mean_ok = mean_ok && std::abs(mean[j] - mu[j]) < 4 * std::sqrt(sigma(j, j) / n_eff[j]);
  const double cov_err = oracle::frobenius_rel(posterior_scatter(chains, mean), sigma);

  // Gradient against central differences.
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> dim(1, 6);
  std::normal_distribution<double> z(0, 1);
  std::uniform_real_distribution<double> u(0.3, 3.0);
  std::poisson_distribution<int> pois(20);
  const double h = 1e-5;
  double worst = 0;
  for (int t = 0; t < 100; ++t) {
    const int d = dim(rng);
    Eigen::VectorXd theta(d), y(d), s(d), m(d);
    for (int j = 0; j < d; ++j) {
      theta[j] = 2 + z(rng);
      y[j] = pois(rng);
      s[j] = u(rng);
      m[j] = 2 + z(rng);
    }
    NormalizationFactors nf{s, NormMethod::none, false};
    ComponentParams cp(m, random_pd_covariance(d, 0.2, 2.0, rng()));
    Eigen::VectorXd g = latent_log_posterior_grad(theta, y, nf, cp);
    Eigen::VectorXd fd(d);
    for (int j = 0; j < d; ++j) {
      Eigen::VectorXd up = theta, down = theta;
      up[j] += h;
      down[j] -= h;
      fd[j] = (latent_log_posterior(up, y, nf, cp) - latent_log_posterior(down, y, nf, cp)) / (2 * h);
    }
    worst = std::max(worst, (g - fd).norm() / std::max(1.0, fd.norm()));
  }
  return {mean_ok && cov_err < 0.10 && worst < 1e-5,
          "mean within 4 MCSE: " + std::string(mean_ok ? "yes" : "no") + "; covariance rel. error " +
              fmt(cov_err) + "; worst gradient rel. error " + std::to_string(worst)};
}

Verdict criterion_5() {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> z(0, 1);
  // R-hat on i.i.d. chains.
  ChainSet iid;
  for (int c = 0; c < 3; ++c) {
    Eigen::MatrixXd x(2000, 4);
    for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = z(rng);
    iid.draws.push_back(x);
  }
  auto r = potential_scale_reduction(iid);
  const bool rhat_ok = r.minCoeff() >= 0.99 && r.maxCoeff() <= 1.02;

  // ESS on AR(1), phi = 0.9.
  ChainSet ar;
  for (int c = 0; c < 3; ++c) ar.draws.emplace_back(oracle::ar1(rng, 5000, 0.9));
  const double ratio = effective_sample_size(ar)[0] / 15000.0;
  const double expected = 0.1 / 1.9;
  const bool ess_ok = ratio > expected / 1.5 && ratio < expected * 1.5;

  // Heidelberger-Welch false rejections.
  int rejected = 0;
  for (int t = 0; t < 500; ++t) {
    std::vector<double> s(200);
    for (double& v : s) v = z(rng);
    rejected += heidelberger_welch(s, 0.05).stationary ? 0 : 1;
  }
  const double rate = rejected / 500.0;
  const bool hw_ok = rate >= 0.01 && rate <= 0.12;
  return {rhat_ok && ess_ok && hw_ok,
          "R-hat range [" + fmt(r.minCoeff(), 4) + ", " + fmt(r.maxCoeff(), 4) + "]; ESS/mN " + fmt(ratio, 4) +
              " vs " + fmt(expected, 4) + "; HW false rejection " + fmt(100 * rate, 1) + "% (band 1-12%)"};
}

Verdict criterion_6() {
  std::mt19937_64 rng(3);
  int mismatches = 0;
  for (int t = 0; t < 1000; ++t) {
    const int n = 2 + static_cast<int>(rng() % 9);
    std::uniform_int_distribution<int> la(1, 1 + static_cast<int>(rng() % 4));
    std::vector<int> a(static_cast<std::size_t>(n)), b(static_cast<std::size_t>(n));
    for (auto& v : a) v = la(rng);
    for (auto& v : b) v = la(rng);
    const double want = oracle::brute_force_ari(a, b);
    const double got = adjusted_rand_index(a, b);
    const bool same = std::isnan(want) ? (got == 0.0 || got == 1.0) : std::abs(got - want) <= 1e-12;
    mismatches += same ? 0 : 1;
  }
  std::vector<int> a{1, 1, 2, 2}, b{1, 2, 1, 2};
  const double hand = adjusted_rand_index(a, b);
  return {mismatches == 0 && hand == -0.5,
          std::to_string(mismatches) + " mismatches in 1000 pairs; hand case " + fmt(hand, 6)};
}

Verdict criterion_7() {
  bool ok = count_free_params(2, 6) == 55 && count_free_params(3, 6) == 83;
  std::vector<int> labels(1000);
  for (int i = 0; i < 1000; ++i) labels[static_cast<std::size_t>(i)] = i % 2;
  auto c = information_criteria(-100.0, 2, 6, 1000, Responsibilities::hard(labels, 2));
  ok = ok && std::abs(c.aic - 310) < 1e-9 && std::abs(c.bic - (200 + 55 * std::log(1000.0))) < 1e-9 &&
       std::abs(c.aic3 - 365) < 1e-9 && c.icl == c.bic;
  std::mt19937_64 rng(7);
  std::gamma_distribution<double> gam(0.5, 1.0);
  int violations = 0;
  for (int t = 0; t < 1000; ++t) {
    const int g = 1 + t % 5, n = 2 + t % 40;
    Eigen::MatrixXd lw(n, g);
    for (Eigen::Index k = 0; k < lw.size(); ++k) lw.data()[k] = std::log(gam(rng) + 1e-300);
    auto cs = information_criteria(-1000.0, g, 4, n, Responsibilities::from_log_weights(lw));
    violations += cs.icl >= cs.bic ? 0 : 1;
  }
  return {ok && violations == 0, "K(2,6) = " + std::to_string(count_free_params(2, 6)) + ", K(3,6) = " +
                                     std::to_string(count_free_params(3, 6)) + "; AIC " + fmt(c.aic) +
                                     ", BIC " + fmt(c.bic) + ", AIC3 " + fmt(c.aic3) + ", ICL " + fmt(c.icl) +
                                     "; ICL < BIC in " + std::to_string(violations) + "/1000 random cases"};
}

Verdict criterion_8() {
  double worst = 0;
  for (double mu : {-0.5, 0.0, 1.0}) {
    for (int y = 0; y <= 5; ++y) {
      MixtureParams p;
      p.weights = Eigen::VectorXd::Ones(1);
      p.components.emplace_back(Eigen::VectorXd::Constant(1, mu), Eigen::MatrixXd::Constant(1, 1, 0.25));
      CountMatrix counts;
      counts.values = CountArray::Constant(1, 1, y);
      counts.row_ids = {"g"};
      counts.col_ids = {"s"};
      auto s = NormalizationFactors::ones(1);
      EStepSettings es;
      es.seed = 100 + static_cast<std::uint64_t>(y);
      auto e = e_step(counts, s, p, es);
      const double plug_in = observed_log_likelihood(counts, s, p, e.stats);
      worst = std::max(worst, std::abs(plug_in - oracle::log_marginal_1d(y, 1.0, mu, 0.25)));
    }
  }
  return {worst < 0.5, "largest gap to the quadrature marginal " + fmt(worst, 4) + " nats"};
}

Verdict criterion_9() {
  auto dir = oracle::scratch_dir("acceptance_determinism");
  auto sim = simulate(two_component_design(100, 9));
  save_counts(sim.counts, dir / "counts.csv");
  std::vector<std::string> docs;
  for (int workers : {1, 4}) {
    for (int rep = 0; rep < 2; ++rep) {
      RunManifest m;
      m.input = dir / "counts.csv";
      m.g_min = 1;
      m.g_max = 2;
      m.seed = 9;
      m.workers = workers;
      m.out_dir = dir / ("w" + std::to_string(workers) + "_" + std::to_string(rep));
      const auto t0 = std::chrono::steady_clock::now();
      auto report = run(m);
      std::cerr << "  workers " << workers << " run " << rep + 1 << ": exit " << report.exit_code << ", "
                << fmt(seconds_since(t0), 0) << " s\n";
      if (report.exit_code != exit_code::ok) return {false, "run exited " + std::to_string(report.exit_code)};
      docs.push_back(oracle::slurp(m.out_dir / "results.json"));
    }
  }
  const bool same = std::all_of(docs.begin(), docs.end(), [&](const std::string& d) { return d == docs[0]; });
  return {same && !docs[0].empty(), same ? "4 results.json files byte-identical (" + std::to_string(docs[0].size()) + " bytes)"
                                         : "results.json differs between runs"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::vector<int> selected;
  app.add_option("--criteria", selected, "Criteria to run (default: all)")->delimiter(',')->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);
  if (selected.empty()) selected = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};

  const std::map<int, Verdict (*)()> checks{
      {1, criterion_1}, {2, criterion_2}, {3, criterion_3}, {4, criterion_4}, {5, criterion_5},
      {6, criterion_6}, {7, criterion_7}, {8, criterion_8}, {9, criterion_9}};
  const std::map<int, std::string> names{
      {1, "two-component recovery"}, {2, "three-component recovery"}, {3, "mean bias"},
      {4, "sampler correctness"},    {5, "diagnostics calibration"},  {6, "ARI oracle"},
      {7, "criteria arithmetic"},    {8, "plug-in likelihood bound"}, {9, "determinism"},
      {10, "real-data study"}};

  int failures = 0;
  for (int id : std::set<int>(selected.begin(), selected.end())) {
    if (id == 10) {
      std::cout << "criterion 10 (" << names.at(10)
                << "): SKIP - needs external read-count data and third-party tools; covered by the invariant suites\n"
                << std::flush;
      continue;
    }
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = checks.at(id)();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failures += v.pass ? 0 : 1;
    std::cout << "criterion " << id << " (" << names.at(id) << "): " << (v.pass ? "PASS" : "FAIL") << " - "
              << v.detail << " [" << fmt(seconds_since(t0), 1) << " s]\n"
              << std::flush;
  }
  return failures == 0 ? 0 : 1;
}
