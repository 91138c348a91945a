#include "mpln/densities.hpp"
#include "mpln/serialize.hpp"
#include "mpln/simulate.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <vector>

using namespace mpln;

namespace {

SimSpec single(Eigen::Index n, const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma,
               std::uint64_t seed) {
  SimSpec spec;
  spec.n = n;
  spec.seed = seed;
  spec.weights = Eigen::VectorXd::Ones(1);
  spec.mus = mu.transpose();
  spec.sigmas = {sigma};
  spec.s = NormalizationFactors::ones(mu.size());
  return spec;
}

// Rows of `m` whose label equals `g`.
Eigen::MatrixXd rows_with_label(const Eigen::MatrixXd& m, const std::vector<int>& labels, int g) {
  std::vector<Eigen::Index> keep;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == g) keep.push_back(static_cast<Eigen::Index>(i));
  Eigen::MatrixXd out(static_cast<Eigen::Index>(keep.size()), m.cols());
  for (std::size_t r = 0; r < keep.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = m.row(keep[r]);
  return out;
}

Eigen::MatrixXd sample_cov(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd c = x.rowwise() - x.colwise().mean();
  return c.transpose() * c / static_cast<double>(x.rows() - 1);
}

}  // namespace

TEST_CASE("random covariance with equal eigenvalues is a scaled identity") {
  Eigen::MatrixXd s = random_pd_covariance(5, 0.8, 0.8, 3);
  CHECK((s - 0.8 * Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("random covariance recovers its drawn eigenvalues") {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const int d = 1 + static_cast<int>(seed % 8);
    Eigen::VectorXd lambda;
    Eigen::MatrixXd s = random_pd_covariance(d, 0.5, 1.5, seed, &lambda);
    CHECK(Eigen::LLT<Eigen::MatrixXd>(s).info() == Eigen::Success);
    CHECK((s - s.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    Eigen::VectorXd got = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(s).eigenvalues();
    std::sort(lambda.data(), lambda.data() + lambda.size());
    CHECK((got - lambda).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(lambda.minCoeff() >= 0.5);
    CHECK(lambda.maxCoeff() <= 1.5);
  }
  CHECK(random_pd_covariance(6, 0.5, 1.5, 9) == random_pd_covariance(6, 0.5, 1.5, 9));
  CHECK(random_pd_covariance(6, 0.5, 1.5, 9) != random_pd_covariance(6, 0.5, 1.5, 10));
}

TEST_CASE("simulation is a pure function of the spec") {
  auto spec = two_component_design(300, 17);
  auto a = simulate(spec);
  auto b = simulate(spec);
  CHECK(a.counts.values == b.counts.values);
  CHECK(a.labels == b.labels);
  CHECK(a.theta == b.theta);
  spec.seed = 18;
  CHECK(simulate(spec).counts.values != a.counts.values);
  CHECK(a.counts.row_ids.front() == "gene_1");
  CHECK(a.counts.col_ids.back() == "sample_6");
}

TEST_CASE("vanishing covariance gives Poisson(1) counts") {
  auto spec = single(100000, Eigen::VectorXd::Zero(1), 1e-12 * Eigen::MatrixXd::Identity(1, 1), 4);
  auto sim = simulate(spec);
  const double mean = sim.counts.values.cast<double>().mean();
  CHECK(std::abs(mean - 1.0) < 4.0 * std::sqrt(1.0 / 100000));
}

TEST_CASE("two-component design") {
  auto sim = simulate(two_component_design(1000, 1));
  const double n = 1000;
  const double p1 = static_cast<double>(std::count(sim.labels.begin(), sim.labels.end(), 0)) / n;
  CHECK(std::abs(p1 - 0.79) < 4.0 * std::sqrt(0.79 * 0.21 / n));

  // The high component's counts should sit in the same range as the
  // real-data 5-95% band of 205 to 3652. The printed band comes from a
  // different dataset, so only its centre and overlap are checked.
  std::vector<double> high;
  for (std::size_t i = 0; i < sim.labels.size(); ++i)
    if (sim.labels[i] == 0)
      for (Eigen::Index j = 0; j < 6; ++j) high.push_back(static_cast<double>(sim.counts.values(static_cast<Eigen::Index>(i), j)));
  std::sort(high.begin(), high.end());
  const double q05 = high[high.size() * 5 / 100];
  const double q50 = high[high.size() / 2];
  const double q95 = high[high.size() * 95 / 100];
  MESSAGE("high component 5/50/95%: " << q05 << " " << q50 << " " << q95);
  CHECK(q50 > 205);
  CHECK(q50 < 3652);
  CHECK(q05 < 3652);
  CHECK(q95 > 205);
}

TEST_CASE("marginal moments match the closed form") {
  auto spec = two_component_design(60000, 5);
  auto sim = simulate(spec);
  auto y1 = rows_with_label(sim.counts.values.cast<double>(), sim.labels, 1);
  ComponentParams p(spec.mus.row(1).transpose(), spec.sigmas[1]);
  auto mom = mpln_marginal_moments(p, spec.s);
  const double m = static_cast<double>(y1.rows());
  for (Eigen::Index j = 0; j < 6; ++j) {
    Eigen::VectorXd col = y1.col(j);
    const double mean = col.mean();
    const double var = (col.array() - mean).square().sum() / (m - 1);
    CHECK(std::abs(mean - mom.mean[j]) < 4.0 * std::sqrt(mom.variance[j] / m));
    // SE of a sample variance from the sample fourth central moment.
    const double m4 = (col.array() - mean).pow(4).mean();
    const double se_var = std::sqrt((m4 - var * var) / m);
    CHECK(std::abs(var - mom.variance[j]) < 4.0 * se_var);
  }
}

TEST_CASE("latent draws converge to the component Gaussian") {
  Eigen::MatrixXd sigma = random_pd_covariance(6, 0.5, 1.5, 21);
  Eigen::VectorXd mu = Eigen::VectorXd::LinSpaced(6, 1.0, 3.0);
  auto sim = simulate(single(100000, mu, sigma, 22));
  Eigen::VectorXd mean = sim.theta.colwise().mean().transpose();
  CHECK((mean - mu).cwiseAbs().maxCoeff() < 0.02);
  CHECK(oracle::frobenius_rel(sample_cov(sim.theta), sigma) < 0.05);
}

TEST_CASE("counts are overdispersed") {
  auto spec = three_component_design(40000, 8);
  auto sim = simulate(spec);
  for (int g = 0; g < 3; ++g) {
    auto y = rows_with_label(sim.counts.values.cast<double>(), sim.labels, g);
    REQUIRE(y.rows() >= 7000);
    for (Eigen::Index j = 0; j < 6; ++j) {
      Eigen::VectorXd col = y.col(j);
      const double mean = col.mean();
      const double var = (col.array() - mean).square().sum() / static_cast<double>(y.rows() - 1);
      CHECK(var > mean);
    }
  }
}

TEST_CASE("rate guard") {
  auto spec = single(10, Eigen::VectorXd::Constant(2, 40.0), 0.01 * Eigen::MatrixXd::Identity(2, 2), 1);
  CHECK_THROWS_AS(simulate(spec), SimulationError);

  // A guard that only bites in the tail is absorbed by redraws.
  auto tail = single(2000, Eigen::VectorXd::Constant(1, 31.5), 4.0 * Eigen::MatrixXd::Identity(1, 1), 2);
  auto sim = simulate(tail);
  CHECK(sim.rejections > 0);
  CHECK((sim.theta.array() <= std::log(kMaxPoissonRate)).all());
}

TEST_CASE("spec validation") {
  auto spec = two_component_design(10, 1);
  CHECK_NOTHROW(spec.validate());
  auto bad = spec;
  bad.weights << 0.5, 0.6;
  CHECK_THROWS(bad.validate());
  bad = spec;
  bad.sigmas[0](0, 0) = -1;
  CHECK_THROWS(bad.validate());
  bad = spec;
  bad.mus.conservativeResize(2, 5);
  CHECK_THROWS(bad.validate());
}

TEST_CASE("SimSpec JSON round trip") {
  auto spec = three_component_design(250, 99);
  spec.s.s << 0.5, 0.8, 1.0, 1.2, 1.5, 1.1;
  auto back = sim_spec_from_json(sim_spec_to_json(spec));
  CHECK(back.n == spec.n);
  CHECK(back.seed == spec.seed);
  CHECK(back.weights == spec.weights);
  CHECK(back.mus == spec.mus);
  REQUIRE(back.sigmas.size() == 3);
  for (int g = 0; g < 3; ++g) CHECK(back.sigmas[static_cast<std::size_t>(g)] == spec.sigmas[static_cast<std::size_t>(g)]);
  CHECK(back.s.s == spec.s.s);
  CHECK(simulate(back).counts.values == simulate(spec).counts.values);

  CHECK_THROWS_AS(sim_spec_from_json("{"), DataError);
  CHECK_THROWS_AS(sim_spec_from_json(R"({"n": 3})"), DataError);
}

TEST_CASE("labels CSV") {
  auto sim = simulate(two_component_design(40, 3));
  auto dir = oracle::scratch_dir("sim_labels");
  {
    std::ofstream out(dir / "labels.csv");
    write_labels_csv(out, sim.counts.row_ids, sim.labels);
  }
  auto table = read_labels_csv(dir / "labels.csv");
  CHECK(table.ids == sim.counts.row_ids);
  for (std::size_t i = 0; i < table.labels.size(); ++i) CHECK(table.labels[i] == sim.labels[i] + 1);
  CHECK(compare_label_tables(table, table) == 1.0);
}
