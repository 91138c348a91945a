#pragma once

#include "mpln/criteria.hpp"
#include "mpln/em.hpp"

#include <span>
#include <vector>

namespace mpln {

struct RankedCandidate {
  int g = 0;
  double value = 0.0;
  /// Index into the candidate list passed to select_best.
  std::size_t index = 0;
};

struct Selection {
  Criterion criterion = Criterion::bic;
  int g_star = 0;
  /// Candidates with criteria, best first (ties broken toward smaller G).
  std::vector<RankedCandidate> ranking;
};

/// Minimizer of `criterion` over the fits that carry criteria. Throws
/// std::invalid_argument when no candidate has criteria.
Selection select_best(std::span<const FitResult> results, Criterion criterion);

}  // namespace mpln
