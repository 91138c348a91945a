#include "mpln/pipeline.hpp"

#include "mpln/parallel.hpp"
#include "mpln/rng.hpp"
#include "mpln/serialize.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <sstream>

namespace mpln {

using nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kChainDumpStream = 0xC4A1;

ordered_json vector_json(const Eigen::VectorXd& v) {
  ordered_json out = ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

ordered_json matrix_json(const Eigen::MatrixXd& m) {
  ordered_json out = ordered_json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) out.push_back(vector_json(m.row(r).transpose()));
  return out;
}

ordered_json manifest_json(const RunManifest& m) {
  const auto& f = m.fit;
  ordered_json sampler{{"chains", f.sampler.chains},
                       {"total_iters", f.sampler.total_iters},
                       {"warmup_fraction", f.sampler.warmup_fraction},
                       {"leapfrog_steps", f.sampler.leapfrog_steps},
                       {"target_accept", f.sampler.target_accept},
                       {"max_retries", f.sampler.max_retries}};
  ordered_json fit{{"init_method", std::string(to_string(f.init_method))},
                   {"init_runs", f.init_runs},
                   {"init_iters", f.init_iters},
                   {"init_base_iters", f.init_base_iters},
                   {"max_em_iters", f.max_em_iters},
                   {"min_em_iters", f.min_em_iters},
                   {"hw_alpha", f.hw_alpha},
                   {"sampler", std::move(sampler)}};
  return ordered_json{{"input", m.input.generic_string()},
                      {"delimiter", std::string(1, m.delimiter)},
                      {"normalization", std::string(to_string(m.normalization))},
                      {"g_min", m.g_min},
                      {"g_max", m.g_max},
                      {"seed", m.seed},
                      {"dump_chains", m.dump_chains},
                      {"fit", std::move(fit)}};
}

ordered_json fit_json(const FitResult& fit) {
  ordered_json out{{"g", fit.g}, {"ok", fit.ok()}};
  out["error"] = fit.error ? ordered_json(*fit.error) : ordered_json(nullptr);
  out["converged"] = fit.converged;
  out["em_iters_used"] = fit.em_iters_used;
  out["best_init_run"] = fit.best_init_run + 1;
  out["init_loglik"] = fit.init_loglik;
  out["k_free"] = fit.k_free;
  if (fit.criteria) {
    const auto& c = *fit.criteria;
    out["loglik"] = c.loglik;
    out["criteria"] = ordered_json{{"AIC", c.aic}, {"BIC", c.bic}, {"AIC3", c.aic3},
                                   {"ICL", c.icl}, {"ICL_printed", c.icl_printed}};
  } else {
    out["loglik"] = nullptr;
    out["criteria"] = nullptr;
  }
  out["effective_map_clusters"] = fit.effective_map_clusters;
  out["map_consistent"] = fit.ok() && fit.effective_map_clusters == fit.g;
  out["empty_components"] = fit.empty_components;
  if (fit.params.g() > 0) {
    ordered_json components = ordered_json::array();
    for (Eigen::Index k = 0; k < fit.params.g(); ++k) {
      const auto& comp = fit.params.components[static_cast<std::size_t>(k)];
      components.push_back(ordered_json{{"weight", fit.params.weights[k]},
                                        {"mu", vector_json(comp.mu())},
                                        {"sigma", matrix_json(comp.sigma())}});
    }
    out["components"] = std::move(components);
  } else {
    out["components"] = ordered_json::array();
  }
  out["loglik_trace"] = fit.loglik_trace;
  out["warnings"] = fit.warnings;
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

template <typename Writer>
void write_file(const std::filesystem::path& path, Writer&& writer) {
  std::ostringstream buffer;
  writer(buffer);
  write_text(path, buffer.str());
}

void write_error_report(const RunManifest& manifest, const RunReport& report) {
  if (manifest.out_dir.empty()) return;
  try {
    std::filesystem::create_directories(manifest.out_dir);
    ordered_json doc{{"schema_version", 1},
                     {"status", "error"},
                     {"exit_code", report.exit_code},
                     {"message", report.message}};
    write_text(manifest.out_dir / "error.json", doc.dump(2) + "\n");
  } catch (const std::exception&) {
    // The exit status still carries the failure.
  }
}

}  // namespace

void RunManifest::validate() const {
  if (g_min < 1) throw std::invalid_argument("g_min must be >= 1");
  if (g_max < g_min) throw std::invalid_argument("g_max must be >= g_min");
  if (workers < 1) throw std::invalid_argument("workers must be >= 1");
  if (out_dir.empty()) throw std::invalid_argument("an output directory is required");
  FitConfig probe = fit;
  probe.g = g_min;
  probe.validate();
}

std::uint64_t seed_for_g(std::uint64_t seed, int g) {
  return derive_seed(seed, {static_cast<std::uint64_t>(g)});
}

RangeResult fit_range(const CountMatrix& counts, const NormalizationFactors& s,
                      const FitConfig& tmpl, int g_min, int g_max, std::uint64_t seed,
                      int workers) {
  if (g_min < 1 || g_max < g_min) throw std::invalid_argument("invalid G range");
  const int width = g_max - g_min + 1;
  const int outer = std::clamp(workers, 1, width);
  const int inner = std::max(1, workers / outer);

  RangeResult out;
  out.fits.resize(static_cast<std::size_t>(width));
  parallel_for(static_cast<std::size_t>(width), outer, [&](std::size_t idx) {
    FitConfig cfg = tmpl;
    cfg.g = g_min + static_cast<int>(idx);
    cfg.seed = seed_for_g(seed, cfg.g);
    cfg.threads = inner;
    out.fits[idx] = fit_single_g(counts, s, cfg);
  });

  const bool any = std::any_of(out.fits.begin(), out.fits.end(),
                               [](const FitResult& f) { return f.criteria.has_value(); });
  if (any) {
    for (Criterion c : kAllCriteria) out.selections.push_back(select_best(out.fits, c));
  }
  return out;
}

std::string results_json(const RunManifest& manifest, const CountMatrix& counts,
                         const NormalizationFactors& s, const RangeResult& range,
                         const std::vector<std::string>& files) {
  ordered_json doc;
  doc["schema_version"] = 1;
  ordered_json echo = manifest_json(manifest);
  echo["files"] = files;
  doc["manifest"] = std::move(echo);
  doc["data"] = ordered_json{{"n", counts.rows()}, {"d", counts.cols()}};

  ordered_json factors = ordered_json::array();
  for (Eigen::Index j = 0; j < s.size(); ++j) {
    factors.push_back(ordered_json{{"sample_id", counts.col_ids[static_cast<std::size_t>(j)]},
                                   {"s", s.s[j]}});
  }
  doc["normalization"] = ordered_json{{"method", std::string(to_string(s.method))},
                                      {"fallback_used", s.fallback_used},
                                      {"factors", std::move(factors)}};

  ordered_json fits = ordered_json::array();
  for (const auto& fit : range.fits) fits.push_back(fit_json(fit));
  doc["fits"] = std::move(fits);

  ordered_json selection = ordered_json::object();
  for (const auto& sel : range.selections) {
    ordered_json ranking = ordered_json::array();
    for (const auto& r : sel.ranking) ranking.push_back(ordered_json{{"g", r.g}, {"value", r.value}});
    selection[std::string(to_string(sel.criterion))] =
        ordered_json{{"g_star", sel.g_star}, {"ranking", std::move(ranking)}};
  }
  doc["selection"] = std::move(selection);
  return doc.dump(2) + "\n";
}

RunReport run(const RunManifest& manifest) {
  RunReport report;
  CountMatrix counts;
  NormalizationFactors s;
  try {
    manifest.validate();
    counts = load_counts(manifest.input, manifest.delimiter);
    if (manifest.g_max > counts.rows()) {
      throw DataError("g_max exceeds the number of genes");
    }
    s = compute_factors(counts, manifest.normalization);
    std::filesystem::create_directories(manifest.out_dir);
  } catch (const std::exception& e) {
    report.exit_code = exit_code::input_error;
    report.message = e.what();
    write_error_report(manifest, report);
    return report;
  }

  try {
    RangeResult range = fit_range(counts, s, manifest.fit, manifest.g_min, manifest.g_max,
                                  manifest.seed, manifest.workers);
    const auto& dir = manifest.out_dir;

    std::vector<std::string> files{"results.json", "criteria.csv", "factors.csv"};
    for (const auto& fit : range.fits) {
      files.push_back("assignments_G" + std::to_string(fit.g) + ".csv");
      files.push_back("trace_G" + std::to_string(fit.g) + ".csv");
      if (manifest.dump_chains && fit.ok()) files.push_back("chains_G" + std::to_string(fit.g) + ".csv");
    }

    write_file(dir / "factors.csv", [&](std::ostream& o) { write_factors(o, s, counts.col_ids); });
    write_file(dir / "criteria.csv", [&](std::ostream& o) { write_criteria_csv(o, range.fits); });
    for (const auto& fit : range.fits) {
      const std::string g = std::to_string(fit.g);
      write_file(dir / ("assignments_G" + g + ".csv"),
                 [&](std::ostream& o) { write_assignments_csv(o, fit); });
      write_file(dir / ("trace_G" + g + ".csv"), [&](std::ostream& o) { write_trace_csv(o, fit); });
      if (manifest.dump_chains && fit.ok()) {
        const Eigen::VectorXd y = counts.row_as_double(0);
        write_file(dir / ("chains_G" + g + ".csv"), [&](std::ostream& o) {
          for (Eigen::Index k = 0; k < fit.params.g(); ++k) {
            const auto seed = derive_seed(seed_for_g(manifest.seed, fit.g),
                                          {kChainDumpStream, static_cast<std::uint64_t>(k)});
            ChainSet chains = sample_latent(y, s, fit.params.components[static_cast<std::size_t>(k)],
                                            manifest.fit.sampler, seed);
            write_chains_csv(o, chains, static_cast<int>(k), k == 0);
          }
        });
      }
    }
    write_text(dir / "results.json", results_json(manifest, counts, s, range, files));
    report.files = files;

    const bool any_converged = std::any_of(range.fits.begin(), range.fits.end(),
                                           [](const FitResult& f) { return f.ok() && f.converged; });
    if (!any_converged) {
      report.exit_code = exit_code::none_converged;
      report.message = "no value of G converged; partial results written";
      write_error_report(manifest, report);
    }
  } catch (const std::exception& e) {
    report.exit_code = exit_code::internal_error;
    report.message = e.what();
    write_error_report(manifest, report);
  }
  return report;
}

}  // namespace mpln
