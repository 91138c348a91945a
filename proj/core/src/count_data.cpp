#include "mpln/count_data.hpp"

#include "mpln/csv.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <unordered_set>

namespace mpln {

namespace {

std::string cell_name(std::size_t row, std::size_t col, const csv::Row& header,
                      const csv::Row& record) {
  std::string name = "row " + std::to_string(row + 1) + " (gene '" + record.front() + "')";
  name += ", column " + std::to_string(col + 1);
  if (col < header.size()) name += " (sample '" + header[col] + "')";
  return name;
}

std::int64_t parse_count(std::string_view text, const std::string& where) {
  auto first = text.find_first_not_of(" \t");
  auto last = text.find_last_not_of(" \t");
  if (first == std::string_view::npos) throw DataError("empty count at " + where);
  text = text.substr(first, last - first + 1);

  std::int64_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec == std::errc{} && ptr == text.data() + text.size()) {
    if (value < 0) {
      throw DataError("negative count '" + std::string(text) + "' at " + where);
    }
    return value;
  }
  if (ec == std::errc::result_out_of_range) {
    throw DataError("count out of range '" + std::string(text) + "' at " + where);
  }
  // Distinguish "2.5" (a number, but not an integer) from garbage.
  double as_double = 0.0;
  auto [dptr, dec] = std::from_chars(text.data(), text.data() + text.size(), as_double);
  if (dec == std::errc{} && dptr == text.data() + text.size()) {
    if (as_double < 0) {
      throw DataError("negative count '" + std::string(text) + "' at " + where);
    }
    // Some writers emit whole counts as "3.0" or "1e+05".
    if (std::isfinite(as_double) && as_double == std::floor(as_double) && as_double <= 0x1p53) {
      return static_cast<std::int64_t>(as_double);
    }
    throw DataError("non-integer count '" + std::string(text) + "' at " + where);
  }
  throw DataError("unparseable count '" + std::string(text) + "' at " + where);
}

void check_unique(const std::vector<std::string>& ids, const char* what) {
  std::unordered_set<std::string> seen;
  for (const auto& id : ids) {
    if (!seen.insert(id).second) {
      throw DataError(std::string("duplicate ") + what + " id '" + id + "'");
    }
  }
}

double geometric_mean(const Eigen::VectorXd& v) { return std::exp(v.array().log().mean()); }

Eigen::VectorXd column_sums(const CountMatrix& counts) {
  return counts.values.cast<double>().colwise().sum().transpose();
}

/// Type-7 sample quantile (linear interpolation between order statistics).
double quantile(std::vector<double> values, double p) {
  std::sort(values.begin(), values.end());
  double h = (static_cast<double>(values.size()) - 1.0) * p;
  auto lo = static_cast<std::size_t>(std::floor(h));
  auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

/// 1-based ranks, ties receive the average rank.
std::vector<double> average_ranks(const std::vector<double>& values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

struct TmmColumnFactor {
  double factor = 1.0;
  bool fallback = false;
};

TmmColumnFactor tmm_column(const CountMatrix& counts, Eigen::Index obs_col,
                           Eigen::Index ref_col, double trim_m, double trim_a) {
  const auto obs = counts.values.col(obs_col).cast<double>().eval();
  const auto ref = counts.values.col(ref_col).cast<double>().eval();
  const double n_obs = obs.sum();
  const double n_ref = ref.sum();

  std::vector<double> log_ratio, abundance, variance;
  for (Eigen::Index i = 0; i < obs.size(); ++i) {
    if (obs[i] <= 0 || ref[i] <= 0) continue;
    double p_obs = obs[i] / n_obs;
    double p_ref = ref[i] / n_ref;
    log_ratio.push_back(std::log2(p_obs / p_ref));
    abundance.push_back(0.5 * (std::log2(p_obs) + std::log2(p_ref)));
    variance.push_back((n_obs - obs[i]) / n_obs / obs[i] + (n_ref - ref[i]) / n_ref / ref[i]);
  }
  if (log_ratio.empty()) return {1.0, true};

  double max_abs = 0.0;
  for (double m : log_ratio) max_abs = std::max(max_abs, std::abs(m));
  if (max_abs < 1e-6) return {1.0, false};

  const auto n = static_cast<double>(log_ratio.size());
  const double lo_m = std::floor(n * trim_m) + 1.0;
  const double hi_m = n + 1.0 - lo_m;
  const double lo_a = std::floor(n * trim_a) + 1.0;
  const double hi_a = n + 1.0 - lo_a;
  const auto rank_m = average_ranks(log_ratio);
  const auto rank_a = average_ranks(abundance);

  double weighted = 0.0;
  double weight_total = 0.0;
  for (std::size_t k = 0; k < log_ratio.size(); ++k) {
    if (rank_m[k] < lo_m || rank_m[k] > hi_m) continue;
    if (rank_a[k] < lo_a || rank_a[k] > hi_a) continue;
    if (!(variance[k] > 0)) continue;
    weighted += log_ratio[k] / variance[k];
    weight_total += 1.0 / variance[k];
  }
  if (weight_total <= 0) return {1.0, true};
  return {std::exp2(weighted / weight_total), false};
}

}  // namespace

void CountMatrix::validate() const {
  if (rows() < 1 || cols() < 1) throw DataError("count matrix must have n >= 1 and d >= 1");
  if (static_cast<Eigen::Index>(row_ids.size()) != rows() ||
      static_cast<Eigen::Index>(col_ids.size()) != cols()) {
    throw DataError("id vectors do not match count matrix dimensions");
  }
  if ((values.array() < 0).any()) throw DataError("count matrix has negative entries");
  check_unique(row_ids, "gene");
  check_unique(col_ids, "sample");
}

Eigen::VectorXd CountMatrix::row_as_double(Eigen::Index i) const {
  return values.row(i).cast<double>().transpose();
}

CountMatrix CountMatrix::permute_rows(std::span<const Eigen::Index> order) const {
  CountMatrix out;
  out.values.resize(static_cast<Eigen::Index>(order.size()), cols());
  out.row_ids.reserve(order.size());
  out.col_ids = col_ids;
  for (std::size_t k = 0; k < order.size(); ++k) {
    out.values.row(static_cast<Eigen::Index>(k)) = values.row(order[k]);
    out.row_ids.push_back(row_ids[static_cast<std::size_t>(order[k])]);
  }
  return out;
}

std::string_view to_string(NormMethod method) noexcept {
  switch (method) {
    case NormMethod::none: return "none";
    case NormMethod::libsize: return "libsize";
    case NormMethod::tmm: return "tmm";
  }
  return "none";
}

NormMethod parse_norm_method(std::string_view raw) {
  std::string name(raw);
  std::transform(name.begin(), name.end(), name.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (name == "none") return NormMethod::none;
  if (name == "libsize") return NormMethod::libsize;
  if (name == "tmm") return NormMethod::tmm;
  throw std::invalid_argument("unknown normalization method '" + std::string(raw) + "'");
}

NormalizationFactors NormalizationFactors::ones(Eigen::Index d) {
  return {Eigen::VectorXd::Ones(d), NormMethod::none, false};
}

CountMatrix parse_counts(std::istream& in, char delimiter) {
  auto records = csv::read(in, delimiter);
  if (records.empty()) throw DataError("count file is empty");
  const csv::Row& header = records.front();
  if (header.size() < 2) throw DataError("header must contain a gene id column and at least one sample");
  const std::size_t d = header.size() - 1;
  const std::size_t n = records.size() - 1;
  if (n < 1) throw DataError("count file has no data rows");

  CountMatrix out;
  out.col_ids.assign(header.begin() + 1, header.end());
  out.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  out.row_ids.reserve(n);
  for (std::size_t r = 0; r < n; ++r) {
    const csv::Row& record = records[r + 1];
    if (record.size() != header.size()) {
      throw DataError("ragged row " + std::to_string(r + 1) + ": expected " +
                      std::to_string(header.size()) + " fields, found " +
                      std::to_string(record.size()));
    }
    out.row_ids.push_back(record.front());
    for (std::size_t c = 0; c < d; ++c) {
      out.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          parse_count(record[c + 1], cell_name(r, c, out.col_ids, record));
    }
  }
  out.validate();
  return out;
}

CountMatrix load_counts(const std::filesystem::path& path, char delimiter) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open count file: " + path.string());
  return parse_counts(in, delimiter);
}

void write_counts(std::ostream& out, const CountMatrix& counts, char delimiter) {
  csv::Row row;
  row.push_back("gene_id");
  row.insert(row.end(), counts.col_ids.begin(), counts.col_ids.end());
  csv::write_row(out, row, delimiter);
  for (Eigen::Index i = 0; i < counts.rows(); ++i) {
    row.clear();
    row.push_back(counts.row_ids[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < counts.cols(); ++j) {
      row.push_back(std::to_string(counts.values(i, j)));
    }
    csv::write_row(out, row, delimiter);
  }
}

void save_counts(const CountMatrix& counts, const std::filesystem::path& path, char delimiter) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write count file: " + path.string());
  write_counts(out, counts, delimiter);
}

NormalizationFactors libsize_factors(const CountMatrix& counts) {
  Eigen::VectorXd sums = column_sums(counts);
  for (Eigen::Index j = 0; j < sums.size(); ++j) {
    if (!(sums[j] > 0)) {
      throw DataError("sample '" + counts.col_ids[static_cast<std::size_t>(j)] +
                      "' has an all-zero column");
    }
  }
  return {sums / geometric_mean(sums), NormMethod::libsize, false};
}

std::size_t tmm_reference_column(std::span<const double> upper_quartiles) {
  if (upper_quartiles.empty()) throw std::invalid_argument("no columns to choose from");
  double mean = std::accumulate(upper_quartiles.begin(), upper_quartiles.end(), 0.0) /
                static_cast<double>(upper_quartiles.size());
  std::size_t best = 0;
  for (std::size_t j = 1; j < upper_quartiles.size(); ++j) {
    if (std::abs(upper_quartiles[j] - mean) < std::abs(upper_quartiles[best] - mean)) best = j;
  }
  return best;
}

NormalizationFactors tmm_factors(const CountMatrix& counts, double trim_m, double trim_a) {
  if (!(trim_m >= 0 && trim_m < 0.5) || !(trim_a >= 0 && trim_a < 0.5)) {
    throw std::invalid_argument("TMM trim fractions must lie in [0, 0.5)");
  }
  Eigen::VectorXd sums = column_sums(counts);
  for (Eigen::Index j = 0; j < sums.size(); ++j) {
    if (!(sums[j] > 0)) {
      throw DataError("sample '" + counts.col_ids[static_cast<std::size_t>(j)] +
                      "' has an all-zero column");
    }
  }

  // A lone sample is its own reference; rescaling leaves s = (1).
  if (counts.cols() == 1) return {Eigen::VectorXd::Ones(1), NormMethod::tmm, false};

  std::vector<double> quartiles;
  for (Eigen::Index j = 0; j < counts.cols(); ++j) {
    std::vector<double> proportions(static_cast<std::size_t>(counts.rows()));
    for (Eigen::Index i = 0; i < counts.rows(); ++i) {
      proportions[static_cast<std::size_t>(i)] = static_cast<double>(counts.values(i, j)) / sums[j];
    }
    quartiles.push_back(quantile(std::move(proportions), 0.75));
  }
  const auto ref = static_cast<Eigen::Index>(tmm_reference_column(quartiles));

  NormalizationFactors out;
  out.method = NormMethod::tmm;
  out.s.resize(counts.cols());
  for (Eigen::Index j = 0; j < counts.cols(); ++j) {
    auto col = tmm_column(counts, j, ref, trim_m, trim_a);
    out.fallback_used = out.fallback_used || col.fallback;
    out.s[j] = sums[j] * col.factor;
  }
  out.s /= geometric_mean(out.s);
  return out;
}

NormalizationFactors compute_factors(const CountMatrix& counts, NormMethod method) {
  switch (method) {
    case NormMethod::libsize: return libsize_factors(counts);
    case NormMethod::tmm: return tmm_factors(counts);
    case NormMethod::none: break;
  }
  return NormalizationFactors::ones(counts.cols());
}

void write_factors(std::ostream& out, const NormalizationFactors& factors,
                   const std::vector<std::string>& col_ids) {
  if (static_cast<Eigen::Index>(col_ids.size()) != factors.size()) {
    throw std::invalid_argument("factor count does not match sample ids");
  }
  csv::write_row(out, {"sample_id", "s"});
  for (Eigen::Index j = 0; j < factors.size(); ++j) {
    csv::write_row(out, {col_ids[static_cast<std::size_t>(j)], csv::format_double(factors.s[j])});
  }
}

void save_factors(const NormalizationFactors& factors, const std::vector<std::string>& col_ids,
                  const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write factors file: " + path.string());
  write_factors(out, factors, col_ids);
}

}  // namespace mpln
