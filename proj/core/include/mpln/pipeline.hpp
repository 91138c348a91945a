#pragma once

#include "mpln/count_data.hpp"
#include "mpln/em.hpp"
#include "mpln/selection.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mpln {

/// Everything needed to reproduce a batch fit over a range of G.
struct RunManifest {
  std::filesystem::path input;
  char delimiter = ',';
  NormMethod normalization = NormMethod::tmm;
  int g_min = 1;
  int g_max = 1;
  /// Template for every fit; g, seed and threads are set per G.
  FitConfig fit;
  std::filesystem::path out_dir;
  /// Threads across the whole run. Never affects the written results.
  int workers = 1;
  std::uint64_t seed = 1;
  /// Also write chains_G{g}.csv for the first gene under the final parameters.
  bool dump_chains = false;

  /// Throws std::invalid_argument unless 1 <= g_min <= g_max and workers >= 1.
  void validate() const;
};

struct RangeResult {
  /// One fit per G in [g_min, g_max], in increasing G.
  std::vector<FitResult> fits;
  /// One entry per criterion in kAllCriteria order; empty when no fit
  /// produced criteria.
  std::vector<Selection> selections;
};

/// Seed used for the fit with `g` components under run seed `seed`.
std::uint64_t seed_for_g(std::uint64_t seed, int g);

/// Fits every G in the range. Workers are spread across G first; when there
/// are more workers than values of G the rest go to the sampling grid inside
/// each E-step. A failing G is recorded in its FitResult and never stops the
/// others.
RangeResult fit_range(const CountMatrix& counts, const NormalizationFactors& s,
                      const FitConfig& tmpl, int g_min, int g_max, std::uint64_t seed,
                      int workers);

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int input_error = 1;
inline constexpr int none_converged = 2;
inline constexpr int internal_error = 3;
}  // namespace exit_code

struct RunReport {
  int exit_code = exit_code::ok;
  std::string message;
  /// Files written into out_dir, relative names.
  std::vector<std::string> files;
};

/// Loads counts, normalizes, fits the G range, selects per criterion and
/// writes results.json, criteria.csv, factors.csv, assignments_G{g}.csv and
/// trace_G{g}.csv into out_dir. Exit codes: 0 success, 1 bad input or
/// manifest, 2 no G converged (results still written), 3 internal failure.
/// Every failure also leaves error.json in out_dir when it is writable.
RunReport run(const RunManifest& manifest);

/// The results.json document for an in-memory run. Contains no timings or
/// thread counts, so it is a pure function of the manifest and the data.
std::string results_json(const RunManifest& manifest, const CountMatrix& counts,
                         const NormalizationFactors& s, const RangeResult& range,
                         const std::vector<std::string>& files);

}  // namespace mpln
