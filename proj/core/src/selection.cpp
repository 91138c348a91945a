#include "mpln/selection.hpp"

#include <algorithm>
#include <stdexcept>

namespace mpln {

Selection select_best(std::span<const FitResult> results, Criterion criterion) {
  Selection out;
  out.criterion = criterion;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    if (!r.criteria) continue;
    out.ranking.push_back({r.g, r.criteria->value(criterion), i});
  }
  if (out.ranking.empty()) throw std::invalid_argument("no fitted candidates to select from");
  std::stable_sort(out.ranking.begin(), out.ranking.end(),
                   [](const RankedCandidate& a, const RankedCandidate& b) {
                     if (a.value != b.value) return a.value < b.value;
                     return a.g < b.g;
                   });
  out.g_star = out.ranking.front().g;
  return out;
}

}  // namespace mpln
