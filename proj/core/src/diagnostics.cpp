#include "mpln/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace mpln {

namespace {

double mean_of(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double sample_variance(std::span<const double> x, double mean) {
  double acc = 0.0;
  for (double v : x) acc += (v - mean) * (v - mean);
  return acc / static_cast<double>(x.size() - 1);
}

/// Column j of every chain, as contiguous spans (Eigen storage is
/// column-major, so each column is already contiguous).
std::vector<std::span<const double>> dimension_view(const ChainSet& chains, Eigen::Index j) {
  std::vector<std::span<const double>> out;
  out.reserve(chains.draws.size());
  for (const auto& chain : chains.draws) {
    out.emplace_back(chain.col(j).data(), static_cast<std::size_t>(chain.rows()));
  }
  return out;
}

double split_rhat(const std::vector<std::span<const double>>& chains) {
  const std::size_t total = chains.front().size();
  const std::size_t n = total / 2;
  std::vector<std::span<const double>> seqs;
  for (auto c : chains) {
    seqs.push_back(c.subspan(0, n));
    seqs.push_back(c.subspan(total - n, n));
  }
  std::vector<double> means;
  double w = 0.0;
  for (auto s : seqs) {
    double m = mean_of(s);
    means.push_back(m);
    w += sample_variance(s, m);
  }
  w /= static_cast<double>(seqs.size());
  const double grand = mean_of(means);
  const double b_over_n = sample_variance(means, grand);
  if (!(w > 0)) {
    return b_over_n > 0 ? std::numeric_limits<double>::infinity() : 1.0;
  }
  const double nn = static_cast<double>(n);
  return std::sqrt(((nn - 1.0) / nn * w + b_over_n) / w);
}

double multi_chain_ess(const std::vector<std::span<const double>>& chains) {
  const std::size_t m = chains.size();
  const std::size_t n = chains.front().size();
  const double total = static_cast<double>(m * n);
  const double cap = 1.05 * total;

  std::vector<std::vector<double>> centered(m);
  std::vector<double> means(m);
  double w = 0.0;
  for (std::size_t c = 0; c < m; ++c) {
    means[c] = mean_of(chains[c]);
    centered[c].resize(n);
    for (std::size_t t = 0; t < n; ++t) centered[c][t] = chains[c][t] - means[c];
    w += sample_variance(chains[c], means[c]);
  }
  w /= static_cast<double>(m);
  if (!(w > 0)) return total;

  const double nn = static_cast<double>(n);
  const double b_over_n = m > 1 ? sample_variance(means, mean_of(means)) : 0.0;
  const double var_plus = (nn - 1.0) / nn * w + b_over_n;

  // Mean over chains of the biased lag-t autocovariance.
  auto mean_acov = [&](std::size_t lag) {
    double acc = 0.0;
    for (const auto& x : centered) {
      double s = 0.0;
      for (std::size_t t = 0; t + lag < n; ++t) s += x[t] * x[t + lag];
      acc += s / nn;
    }
    return acc / static_cast<double>(m);
  };
  auto rho = [&](std::size_t lag) { return 1.0 - (w - mean_acov(lag)) / var_plus; };

  std::vector<double> rho_hat(n + 1, 0.0);
  rho_hat[0] = 1.0;
  double rho_even = 1.0;
  double rho_odd = rho(1);
  rho_hat[1] = rho_odd;
  std::size_t s = 1;
  while (s + 4 < n && rho_even + rho_odd > 0) {
    rho_even = rho(s + 1);
    rho_odd = rho(s + 2);
    if (rho_even + rho_odd >= 0) {
      rho_hat[s + 1] = rho_even;
      rho_hat[s + 2] = rho_odd;
    }
    s += 2;
  }
  const std::size_t max_s = s;
  if (rho_even > 0 && max_s + 1 <= n) rho_hat[max_s + 1] = rho_even;

  // Initial monotone sequence.
  for (std::size_t k = 1; k + 3 <= max_s; k += 2) {
    if (rho_hat[k + 1] + rho_hat[k + 2] > rho_hat[k - 1] + rho_hat[k]) {
      rho_hat[k + 1] = 0.5 * (rho_hat[k - 1] + rho_hat[k]);
      rho_hat[k + 2] = rho_hat[k + 1];
    }
  }

  double tau = -1.0;
  for (std::size_t k = 0; k <= max_s; ++k) tau += 2.0 * rho_hat[k];
  if (max_s + 1 <= n) tau += rho_hat[max_s + 1];
  if (!(tau > 0)) return cap;
  return std::min(total / tau, cap);
}

/// P(W <= q) for W the Cramer-von Mises limit distribution, by the
/// four-term Bessel series.
double cramer_von_mises_cdf(double q) {
  if (!(q > 0)) return 0.0;
  const double log_eps = std::log(1e-5);
  double total = 0.0;
  for (int k = 0; k < 4; ++k) {
    const double kk = k;
    const double u = (4 * kk + 1) * (4 * kk + 1) / (16 * q);
    if (u > -log_eps) continue;
    const double z = std::tgamma(kk + 0.5) * std::sqrt(4 * kk + 1) /
                     (std::tgamma(kk + 1) * std::pow(std::numbers::pi, 1.5) * std::sqrt(q));
    total += z * std::exp(-u) * std::cyl_bessel_k(0.25, u);
  }
  return total;
}

}  // namespace

Eigen::VectorXd potential_scale_reduction(const ChainSet& chains) {
  if (chains.chains() < 1 || chains.iterations() < 4) {
    throw std::invalid_argument("split R-hat needs at least 4 draws per chain");
  }
  Eigen::VectorXd out(chains.dim());
  for (Eigen::Index j = 0; j < chains.dim(); ++j) out[j] = split_rhat(dimension_view(chains, j));
  return out;
}

Eigen::VectorXd effective_sample_size(const ChainSet& chains) {
  if (chains.chains() < 1 || chains.iterations() < 4) {
    throw std::invalid_argument("effective sample size needs at least 4 draws per chain");
  }
  Eigen::VectorXd out(chains.dim());
  for (Eigen::Index j = 0; j < chains.dim(); ++j) {
    out[j] = multi_chain_ess(dimension_view(chains, j));
  }
  return out;
}

ChainDiagnostics gate_chains(const ChainSet& chains) {
  ChainDiagnostics out;
  out.rhat = potential_scale_reduction(chains);
  out.n_eff = effective_sample_size(chains);
  const bool rhat_ok = (out.rhat.array() < kRhatThreshold).all();
  const bool neff_ok = (out.n_eff.array() > kNeffThreshold).all();
  out.pass = rhat_ok && neff_ok;
  return out;
}

double cramer_von_mises_critical(double alpha) {
  if (!(alpha > 0 && alpha < 1)) throw std::invalid_argument("alpha must lie in (0, 1)");
  double lo = 1e-3;
  double hi = 10.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (cramer_von_mises_cdf(mid) < 1.0 - alpha) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

double spectral_density_zero(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 2) return 0.0;
  const double m = mean_of(x);
  const auto window = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(n))));
  auto autocov = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t t = 0; t + lag < n; ++t) s += (x[t] - m) * (x[t + lag] - m);
    return s / static_cast<double>(n);
  };
  double s0 = autocov(0);
  for (std::size_t k = 1; k <= window && k < n; ++k) {
    s0 += 2.0 * (1.0 - static_cast<double>(k) / static_cast<double>(window + 1)) * autocov(k);
  }
  return std::max(s0, 0.0);
}

StationarityResult heidelberger_welch(std::span<const double> sequence, double alpha) {
  const std::size_t n = sequence.size();
  StationarityResult out;
  if (n < 10) return out;

  const auto [lo_it, hi_it] = std::minmax_element(sequence.begin(), sequence.end());
  if (*lo_it == *hi_it) {
    out.stationary = true;
    return out;
  }

  const double critical = cramer_von_mises_critical(alpha);
  const double s0 = spectral_density_zero(sequence.subspan(n / 2));

  for (std::size_t step = 0; step <= 5; ++step) {
    const std::size_t start = step * n / 10;
    auto y = sequence.subspan(start);
    const std::size_t len = y.size();
    const double ybar = mean_of(y);
    out.kept_from = start;

    if (!(s0 > 0)) {
      // Tail is flat: only a flat retained segment can pass.
      const auto [a, b] = std::minmax_element(y.begin(), y.end());
      out.statistic = *a == *b ? 0.0 : std::numeric_limits<double>::infinity();
    } else {
      double cumsum = 0.0;
      double bridge_sq = 0.0;
      for (std::size_t k = 0; k < len; ++k) {
        cumsum += y[k];
        const double b = cumsum - ybar * static_cast<double>(k + 1);
        bridge_sq += b * b;
      }
      const double ld = static_cast<double>(len);
      out.statistic = bridge_sq / (ld * s0) / ld;
    }
    if (out.statistic < critical) {
      out.stationary = true;
      return out;
    }
  }
  return out;
}

}  // namespace mpln
