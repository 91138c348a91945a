#include "mpln/criteria.hpp"

#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>

namespace mpln {

namespace {

double choose2(double x) { return 0.5 * x * (x - 1.0); }

bool same_partition(std::span<const int> a, std::span<const int> b) {
  std::map<int, int> forward;
  std::map<int, int> backward;
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto f = forward.emplace(a[i], b[i]).first;
    auto r = backward.emplace(b[i], a[i]).first;
    if (f->second != b[i] || r->second != a[i]) return false;
  }
  return true;
}

}  // namespace

std::string_view to_string(Criterion c) noexcept {
  switch (c) {
    case Criterion::aic: return "AIC";
    case Criterion::bic: return "BIC";
    case Criterion::aic3: return "AIC3";
    case Criterion::icl: return "ICL";
  }
  return "BIC";
}

Criterion parse_criterion(std::string_view name) {
  for (auto c : kAllCriteria) {
    auto canonical = to_string(c);
    if (name.size() != canonical.size()) continue;
    bool match = true;
    for (std::size_t i = 0; i < name.size(); ++i) {
      if (std::toupper(static_cast<unsigned char>(name[i])) != canonical[i]) match = false;
    }
    if (match) return c;
  }
  throw std::invalid_argument("unknown criterion '" + std::string(name) + "'");
}

double CriteriaSet::value(Criterion c) const noexcept {
  switch (c) {
    case Criterion::aic: return aic;
    case Criterion::bic: return bic;
    case Criterion::aic3: return aic3;
    case Criterion::icl: return icl;
  }
  return bic;
}

int count_free_params(int g, int d) {
  if (g < 1 || d < 1) throw std::invalid_argument("count_free_params needs g, d >= 1");
  return (g - 1) + g * d + g * d * (d + 1) / 2;
}

CriteriaSet information_criteria(double loglik, int g, int d, int n_obs,
                                 const Responsibilities& resp) {
  if (!std::isfinite(loglik)) throw std::invalid_argument("log-likelihood must be finite");
  if (n_obs < 1) throw std::invalid_argument("n_obs must be >= 1");
  CriteriaSet out;
  out.loglik = loglik;
  out.k_free = count_free_params(g, d);
  out.n_obs = n_obs;
  const double k = out.k_free;
  out.aic = -2.0 * loglik + 2.0 * k;
  out.bic = -2.0 * loglik + k * std::log(static_cast<double>(n_obs));
  out.aic3 = -2.0 * loglik + 3.0 * k;

  // sum_i sum_g MAP{z_ig} log z_ig: only the MAP entry of each row counts.
  double map_log_sum = 0.0;
  for (Eigen::Index i = 0; i < resp.n(); ++i) {
    const double z = resp.z(i, resp.map_labels[static_cast<std::size_t>(i)]);
    if (z > 0 && z < 1) map_log_sum += std::log(z);
  }
  out.icl = out.bic - 2.0 * map_log_sum;
  out.icl_printed = out.bic + 2.0 * map_log_sum;
  return out;
}

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw std::invalid_argument("label vectors differ in length");
  if (a.size() < 2) throw std::invalid_argument("adjusted Rand index needs n >= 2");

  std::map<std::pair<int, int>, double> table;
  std::map<int, double> rows;
  std::map<int, double> cols;
  for (std::size_t i = 0; i < a.size(); ++i) {
    table[{a[i], b[i]}] += 1.0;
    rows[a[i]] += 1.0;
    cols[b[i]] += 1.0;
  }
  double index = 0.0;
  for (const auto& [key, count] : table) index += choose2(count);
  double sum_a = 0.0;
  for (const auto& [key, count] : rows) sum_a += choose2(count);
  double sum_b = 0.0;
  for (const auto& [key, count] : cols) sum_b += choose2(count);

  // Scaled by C(n, 2) so numerator and denominator stay integers (exact for
  // n up to about 10^4) and the only rounding is the final division.
  const double pairs = choose2(static_cast<double>(a.size()));
  const double num = index * pairs - sum_a * sum_b;
  const double den = 0.5 * (sum_a + sum_b) * pairs - sum_a * sum_b;
  if (den == 0.0) return same_partition(a, b) ? 1.0 : 0.0;
  return num / den;
}

MapConsistency map_consistency_check(const Responsibilities& resp, int g) {
  std::set<int> distinct(resp.map_labels.begin(), resp.map_labels.end());
  MapConsistency out;
  out.effective = static_cast<int>(distinct.size());
  out.ok = out.effective == g;
  return out;
}

}  // namespace mpln
