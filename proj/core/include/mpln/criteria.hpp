#pragma once

#include "mpln/responsibilities.hpp"

#include <span>
#include <string_view>

namespace mpln {

enum class Criterion { aic, bic, aic3, icl };

std::string_view to_string(Criterion c) noexcept;
Criterion parse_criterion(std::string_view name);
inline constexpr Criterion kAllCriteria[] = {Criterion::bic, Criterion::icl, Criterion::aic,
                                             Criterion::aic3};

/// Information criteria under the minimization convention.
struct CriteriaSet {
  double loglik = 0.0;
  double aic = 0.0;
  double bic = 0.0;
  double aic3 = 0.0;
  /// BIC plus the nonnegative assignment-entropy penalty.
  double icl = 0.0;
  /// The formula exactly as often printed, BIC + 2 sum MAP{z} log z, which
  /// rewards uncertain assignments under minimization. Reported for audit only.
  double icl_printed = 0.0;
  int k_free = 0;
  int n_obs = 0;

  double value(Criterion c) const noexcept;
};

/// (G - 1) + G d + G d (d + 1) / 2.
int count_free_params(int g, int d);

/// AIC = -2 logL + 2K, BIC = -2 logL + K log n, AIC3 = -2 logL + 3K,
/// ICL = BIC - 2 sum_i sum_g MAP{z_ig} log z_ig.
CriteriaSet information_criteria(double loglik, int g, int d, int n_obs,
                                 const Responsibilities& resp);

/// Hubert-Arabie adjusted Rand index. Labels may be arbitrary integers.
/// When both partitions make the index undefined (expected = maximum), returns
/// 1 if the partitions are identical up to relabeling, else 0.
/// Throws std::invalid_argument on length mismatch or n < 2.
double adjusted_rand_index(std::span<const int> a, std::span<const int> b);

struct MapConsistency {
  int effective = 0;
  bool ok = false;
};

/// Number of distinct MAP labels, and whether it equals g.
MapConsistency map_consistency_check(const Responsibilities& resp, int g);

}  // namespace mpln
