// mpln: cluster count matrices with mixtures of multivariate Poisson-log
// normal distributions, simulate data, and score clusterings.

#include "mpln/count_data.hpp"
#include "mpln/csv.hpp"
#include "mpln/pipeline.hpp"
#include "mpln/serialize.hpp"
#include "mpln/simulate.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

char parse_delimiter(const std::string& text) {
  if (text == "\\t" || text == "tab") return '\t';
  if (text.size() != 1) throw CLI::ValidationError("--delimiter", "expected a single character or 'tab'");
  return text[0];
}

const std::vector<std::string> kNormNames{"none", "libsize", "tmm"};
const std::vector<std::string> kInitNames{"kmeans", "random"};

// Shortest round-trip form that still reads as a real number ("1.0", not "1").
std::string real_text(double value) {
  std::string text = mpln::csv::format_double(value);
  if (text.find_first_of(".eEni") == std::string::npos) text += ".0";
  return text;
}

int run_fit(const mpln::RunManifest& manifest) {
  const mpln::RunReport report = mpln::run(manifest);
  if (report.exit_code != mpln::exit_code::ok) {
    std::cerr << "mpln fit: " << report.message << " (exit " << report.exit_code << ")\n";
    return report.exit_code;
  }
  std::cout << "wrote " << report.files.size() << " files to " << manifest.out_dir.string() << "\n";
  return 0;
}

int run_simulate(const std::string& spec_path, const std::string& counts_path,
                 const std::string& labels_path, std::optional<std::uint64_t> seed) {
  mpln::SimSpec spec = mpln::load_sim_spec(spec_path);
  if (seed) spec.seed = *seed;
  const mpln::SimulatedData data = mpln::simulate(spec);
  mpln::save_counts(data.counts, counts_path);
  std::ofstream labels(labels_path, std::ios::binary);
  if (!labels) throw mpln::DataError("cannot write " + labels_path);
  mpln::write_labels_csv(labels, data.counts.row_ids, data.labels);
  if (data.rejections > 0) {
    std::cerr << "note: " << data.rejections << " latent draws exceeded the rate guard and were redrawn\n";
  }
  return 0;
}

int run_evaluate(const std::string& a, const std::string& b) {
  const double ari = mpln::compare_label_tables(mpln::read_labels_csv(a), mpln::read_labels_csv(b));
  std::cout << real_text(ari) << "\n";
  return 0;
}

int run_normalize(const std::string& input, char delimiter, mpln::NormMethod method,
                  const std::string& out_path) {
  const mpln::CountMatrix counts = mpln::load_counts(input, delimiter);
  const mpln::NormalizationFactors s = mpln::compute_factors(counts, method);
  if (out_path.empty() || out_path == "-") {
    mpln::write_factors(std::cout, s, counts.col_ids);
  } else {
    mpln::save_factors(s, counts.col_ids, out_path);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Model-based clustering of count data with MPLN mixtures"};
  app.require_subcommand(1);

  mpln::RunManifest manifest;
  std::string input;
  std::string out_dir;
  std::string delimiter = ",";
  auto* fit = app.add_subcommand("fit", "Fit mixtures over a range of G and select a model");
  fit->add_option("--input", input, "Count matrix CSV (genes x samples)")->required();
  fit->add_option("--delimiter", delimiter, "Field delimiter (single character or 'tab')");
  std::string normalization = "tmm";
  std::string init = "kmeans";
  fit->add_option("--normalization", normalization, "none, libsize or tmm")
      ->check(CLI::IsMember(kNormNames, CLI::ignore_case));
  fit->add_option("--g-min", manifest.g_min, "Smallest number of components")->check(CLI::PositiveNumber);
  fit->add_option("--g-max", manifest.g_max, "Largest number of components")->check(CLI::PositiveNumber);
  fit->add_option("--init", init, "kmeans or random")
      ->check(CLI::IsMember(kInitNames, CLI::ignore_case));
  fit->add_option("--init-runs", manifest.fit.init_runs, "Initialization runs per G")
      ->check(CLI::PositiveNumber);
  fit->add_option("--chains", manifest.fit.sampler.chains, "HMC chains per latent posterior")
      ->check(CLI::Range(2, 64));
  fit->add_option("--seed", manifest.seed, "Global seed");
  fit->add_option("--workers", manifest.workers, "Worker threads")->check(CLI::PositiveNumber);
  fit->add_option("--out", out_dir, "Output directory")->required();
  fit->add_flag("--dump-chains", manifest.dump_chains, "Also write chains for the first gene");

  std::string spec_path;
  std::string counts_path = "counts.csv";
  std::string labels_path = "labels.csv";
  std::optional<std::uint64_t> sim_seed;
  auto* sim = app.add_subcommand("simulate", "Draw counts from a simulation spec JSON");
  sim->add_option("--spec", spec_path, "Simulation spec (JSON)")->required()->check(CLI::ExistingFile);
  sim->add_option("--counts", counts_path, "Output count matrix CSV");
  sim->add_option("--labels", labels_path, "Output true labels CSV");
  sim->add_option("--seed", sim_seed, "Override the seed in the spec");

  std::string labels_a;
  std::string labels_b;
  auto* eval = app.add_subcommand("evaluate", "Adjusted Rand index between two label CSVs");
  eval->add_option("first", labels_a, "Label CSV (gene_id, label)")->required()->check(CLI::ExistingFile);
  eval->add_option("second", labels_b, "Label CSV (gene_id, label)")->required()->check(CLI::ExistingFile);

  std::string norm_input;
  std::string norm_out;
  std::string norm_delimiter = ",";
  std::string norm_method = "tmm";
  auto* norm = app.add_subcommand("normalize", "Write per-sample normalization factors");
  norm->add_option("--input", norm_input, "Count matrix CSV")->required();
  norm->add_option("--delimiter", norm_delimiter, "Field delimiter (single character or 'tab')");
  norm->add_option("--normalization", norm_method, "none, libsize or tmm")
      ->check(CLI::IsMember(kNormNames, CLI::ignore_case));
  norm->add_option("--out", norm_out, "Output CSV (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : mpln::exit_code::input_error;
  }

  try {
    if (*fit) {
      manifest.input = input;
      manifest.out_dir = out_dir;
      manifest.delimiter = parse_delimiter(delimiter);
      manifest.normalization = mpln::parse_norm_method(normalization);
      manifest.fit.init_method = mpln::parse_init_method(init);
      return run_fit(manifest);
    }
    if (*sim) return run_simulate(spec_path, counts_path, labels_path, sim_seed);
    if (*eval) return run_evaluate(labels_a, labels_b);
    if (*norm) return run_normalize(norm_input, parse_delimiter(norm_delimiter),
                                      mpln::parse_norm_method(norm_method), norm_out);
  } catch (const mpln::DataError& e) {
    std::cerr << "mpln: " << e.what() << "\n";
    return mpln::exit_code::input_error;
  } catch (const CLI::Error& e) {
    std::cerr << "mpln: " << e.what() << "\n";
    return mpln::exit_code::input_error;
  } catch (const std::invalid_argument& e) {
    std::cerr << "mpln: " << e.what() << "\n";
    return mpln::exit_code::input_error;
  } catch (const std::exception& e) {
    std::cerr << "mpln: " << e.what() << "\n";
    return mpln::exit_code::internal_error;
  }
  return mpln::exit_code::internal_error;
}
