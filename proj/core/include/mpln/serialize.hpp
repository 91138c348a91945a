#pragma once

#include "mpln/em.hpp"
#include "mpln/sampler.hpp"
#include "mpln/simulate.hpp"

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mpln {

/// Gene ids and integer labels read from a (gene_id, label) CSV.
struct LabelTable {
  std::vector<std::string> ids;
  std::vector<int> labels;
};

/// Writes `gene_id,component` with 1-based components.
void write_labels_csv(std::ostream& out, const std::vector<std::string>& ids,
                      std::span<const int> labels);
/// Reads the first two columns of a labelled CSV (header row required).
LabelTable read_labels_csv(const std::filesystem::path& path);

/// ARI between two label tables matched by gene id. Throws DataError when
/// the id sets differ.
double compare_label_tables(const LabelTable& a, const LabelTable& b);

/// gene_id, map_label (1-based), z_1..z_G.
void write_assignments_csv(std::ostream& out, const FitResult& fit);
/// iter, loglik, rhat_max, neff_min, hw_pass.
void write_trace_csv(std::ostream& out, const FitResult& fit);
/// G, run, loglik, K, AIC, BIC, AIC3, ICL, effective_map_clusters, converged.
void write_criteria_csv(std::ostream& out, std::span<const FitResult> fits);
/// component, chain, iter, dim, value (all 1-based).
void write_chains_csv(std::ostream& out, const ChainSet& chains, int component,
                      bool header = true);

std::string sim_spec_to_json(const SimSpec& spec);
/// Throws DataError on malformed documents.
SimSpec sim_spec_from_json(std::string_view text);
SimSpec load_sim_spec(const std::filesystem::path& path);

}  // namespace mpln
