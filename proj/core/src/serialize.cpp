#include "mpln/serialize.hpp"

#include "mpln/criteria.hpp"
#include "mpln/csv.hpp"

#include <json.hpp>

#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

namespace mpln {

using nlohmann::json;

namespace {

json vector_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

json matrix_json(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) out.push_back(vector_json(m.row(r).transpose()));
  return out;
}

Eigen::VectorXd vector_from(const json& j, const char* what) {
  if (!j.is_array()) throw DataError(std::string("'") + what + "' must be an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

Eigen::MatrixXd matrix_from(const json& j, const char* what) {
  if (!j.is_array() || j.empty()) throw DataError(std::string("'") + what + "' must be a nested array");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw DataError(std::string("'") + what + "' is ragged");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

}  // namespace

void write_labels_csv(std::ostream& out, const std::vector<std::string>& ids,
                      std::span<const int> labels) {
  if (ids.size() != labels.size()) throw std::invalid_argument("ids and labels differ in length");
  csv::write_row(out, {"gene_id", "component"});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    csv::write_row(out, {ids[i], std::to_string(labels[i] + 1)});
  }
}

LabelTable read_labels_csv(const std::filesystem::path& path) {
  std::vector<csv::Row> rows;
  try {
    rows = csv::read_file(path);
  } catch (const std::runtime_error& e) {
    throw DataError(e.what());
  }
  if (rows.size() < 2) throw DataError("label file has no data rows: " + path.string());
  LabelTable out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() < 2) throw DataError("label row " + std::to_string(r) + " has fewer than 2 fields");
    out.ids.push_back(rows[r][0]);
    try {
      std::size_t used = 0;
      int label = std::stoi(rows[r][1], &used);
      if (used != rows[r][1].size()) throw std::invalid_argument("trailing characters");
      out.labels.push_back(label);
    } catch (const std::exception&) {
      throw DataError("label row " + std::to_string(r) + " has a non-integer label '" + rows[r][1] + "'");
    }
  }
  return out;
}

double compare_label_tables(const LabelTable& a, const LabelTable& b) {
  if (a.ids.size() != b.ids.size()) throw DataError("label files have different numbers of genes");
  std::map<std::string, int> b_by_id;
  for (std::size_t i = 0; i < b.ids.size(); ++i) {
    if (!b_by_id.emplace(b.ids[i], b.labels[i]).second) {
      throw DataError("duplicate gene id '" + b.ids[i] + "' in label file");
    }
  }
  std::vector<int> matched;
  matched.reserve(a.ids.size());
  for (const auto& id : a.ids) {
    auto it = b_by_id.find(id);
    if (it == b_by_id.end()) throw DataError("gene id '" + id + "' missing from second label file");
    matched.push_back(it->second);
  }
  return adjusted_rand_index(a.labels, matched);
}

void write_assignments_csv(std::ostream& out, const FitResult& fit) {
  csv::Row header{"gene_id", "map_label"};
  for (Eigen::Index k = 0; k < fit.resp.g(); ++k) header.push_back("z_" + std::to_string(k + 1));
  csv::write_row(out, header);
  for (Eigen::Index i = 0; i < fit.resp.n(); ++i) {
    csv::Row row{fit.row_ids[static_cast<std::size_t>(i)],
                 std::to_string(fit.resp.map_labels[static_cast<std::size_t>(i)] + 1)};
    for (Eigen::Index k = 0; k < fit.resp.g(); ++k) row.push_back(csv::format_double(fit.resp.z(i, k)));
    csv::write_row(out, row);
  }
}

void write_trace_csv(std::ostream& out, const FitResult& fit) {
  csv::write_row(out, {"iter", "loglik", "rhat_max", "neff_min", "hw_pass"});
  for (const auto& s : fit.diagnostics_log) {
    csv::write_row(out, {std::to_string(s.iter), csv::format_double(s.loglik),
                         csv::format_double(s.rhat_max), csv::format_double(s.neff_min),
                         s.hw_tested ? (s.hw_pass ? "true" : "false") : "NA"});
  }
}

void write_criteria_csv(std::ostream& out, std::span<const FitResult> fits) {
  csv::write_row(out, {"G", "run", "loglik", "K", "AIC", "BIC", "AIC3", "ICL",
                       "effective_map_clusters", "converged"});
  for (const auto& fit : fits) {
    if (!fit.criteria) {
      csv::write_row(out, {std::to_string(fit.g), "NA", "NA", std::to_string(fit.k_free), "NA",
                           "NA", "NA", "NA", "NA", "false"});
      continue;
    }
    const auto& c = *fit.criteria;
    csv::write_row(out, {std::to_string(fit.g), std::to_string(fit.best_init_run + 1),
                         csv::format_double(c.loglik),
                         std::to_string(c.k_free), csv::format_double(c.aic),
                         csv::format_double(c.bic), csv::format_double(c.aic3),
                         csv::format_double(c.icl), std::to_string(fit.effective_map_clusters),
                         fit.converged ? "true" : "false"});
  }
}

void write_chains_csv(std::ostream& out, const ChainSet& chains, int component, bool header) {
  if (header) csv::write_row(out, {"component", "chain", "iter", "dim", "value"});
  for (int c = 0; c < chains.chains(); ++c) {
    const auto& draws = chains.draws[static_cast<std::size_t>(c)];
    for (Eigen::Index t = 0; t < draws.rows(); ++t) {
      for (Eigen::Index j = 0; j < draws.cols(); ++j) {
        csv::write_row(out, {std::to_string(component + 1), std::to_string(c + 1),
                             std::to_string(t + 1), std::to_string(j + 1),
                             csv::format_double(draws(t, j))});
      }
    }
  }
}

std::string sim_spec_to_json(const SimSpec& spec) {
  json doc;
  doc["schema_version"] = 1;
  doc["n"] = spec.n;
  doc["seed"] = spec.seed;
  doc["weights"] = vector_json(spec.weights);
  doc["mus"] = matrix_json(spec.mus);
  json sigmas = json::array();
  for (const auto& s : spec.sigmas) sigmas.push_back(matrix_json(s));
  doc["sigmas"] = std::move(sigmas);
  doc["s"] = vector_json(spec.s.s);
  return doc.dump(2) + "\n";
}

SimSpec sim_spec_from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("invalid simulation spec JSON: ") + e.what());
  }
  try {
    SimSpec spec;
    spec.n = doc.at("n").get<Eigen::Index>();
    spec.seed = doc.value("seed", std::uint64_t{1});
    spec.weights = vector_from(doc.at("weights"), "weights");
    spec.mus = matrix_from(doc.at("mus"), "mus");
    for (const auto& s : doc.at("sigmas")) spec.sigmas.push_back(matrix_from(s, "sigmas"));
    if (doc.contains("s")) {
      spec.s = {vector_from(doc["s"], "s"), NormMethod::none, false};
    } else {
      spec.s = NormalizationFactors::ones(spec.mus.cols());
    }
    spec.validate();
    return spec;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed simulation spec: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("invalid simulation spec: ") + e.what());
  }
}

SimSpec load_sim_spec(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open simulation spec: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return sim_spec_from_json(buffer.str());
}

}  // namespace mpln
