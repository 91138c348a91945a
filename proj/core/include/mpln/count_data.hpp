#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mpln {

using CountArray = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

/// Raised for malformed input files and invalid count data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Genes x samples matrix of nonnegative read counts.
struct CountMatrix {
  CountArray values;
  std::vector<std::string> row_ids;
  std::vector<std::string> col_ids;

  Eigen::Index rows() const noexcept { return values.rows(); }
  Eigen::Index cols() const noexcept { return values.cols(); }

  /// Throws DataError if the invariants (nonnegative entries, n, d >= 1,
  /// unique ids of matching length) do not hold.
  void validate() const;

  /// Counts of one observation converted to double.
  Eigen::VectorXd row_as_double(Eigen::Index i) const;

  /// Returns a copy with rows reordered so that row k is row order[k] of this.
  CountMatrix permute_rows(std::span<const Eigen::Index> order) const;
};

enum class NormMethod { none, libsize, tmm };

std::string_view to_string(NormMethod method) noexcept;
NormMethod parse_norm_method(std::string_view name);

/// Per-sample normalized library sizes s_j, scaled to geometric mean one.
struct NormalizationFactors {
  Eigen::VectorXd s;
  NormMethod method = NormMethod::none;
  /// Set by TMM when a column had no genes left after trimming and its
  /// factor fell back to 1.
  bool fallback_used = false;

  Eigen::Index size() const noexcept { return s.size(); }
  Eigen::VectorXd log_s() const { return s.array().log().matrix(); }

  static NormalizationFactors ones(Eigen::Index d);
};

CountMatrix parse_counts(std::istream& in, char delimiter = ',');
CountMatrix load_counts(const std::filesystem::path& path, char delimiter = ',');
void write_counts(std::ostream& out, const CountMatrix& counts, char delimiter = ',');
void save_counts(const CountMatrix& counts, const std::filesystem::path& path,
                 char delimiter = ',');

/// s_j = column_sum_j / geometric_mean(column sums).
NormalizationFactors libsize_factors(const CountMatrix& counts);

/// Trimmed mean of M-values. Each column is compared with a reference
/// column; genes with a zero in either column are dropped for that
/// comparison; log-ratios and mean log-abundances are trimmed by
/// `trim_m` and `trim_a` from each tail; the surviving log-ratios are
/// averaged with inverse-variance (delta method) weights. The result is
/// s_j = column_sum_j * factor_j rescaled to geometric mean one.
NormalizationFactors tmm_factors(const CountMatrix& counts, double trim_m = 0.30,
                                 double trim_a = 0.05);

/// Index of the value closest to the mean of `upper_quartiles` (first wins
/// on ties). Used to pick the TMM reference column.
std::size_t tmm_reference_column(std::span<const double> upper_quartiles);

/// Factors for `method`; `none` yields all ones.
NormalizationFactors compute_factors(const CountMatrix& counts, NormMethod method);

/// Two-column CSV: sample_id, s.
void write_factors(std::ostream& out, const NormalizationFactors& factors,
                   const std::vector<std::string>& col_ids);
void save_factors(const NormalizationFactors& factors, const std::vector<std::string>& col_ids,
                  const std::filesystem::path& path);

}  // namespace mpln
