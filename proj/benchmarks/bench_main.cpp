// Hot paths of a fit: the latent gradient, one chain set, one E-step.

#include "mpln/densities.hpp"
#include "mpln/em.hpp"
#include "mpln/sampler.hpp"
#include "mpln/simulate.hpp"

#include <benchmark/benchmark.h>

#include <span>

namespace {

mpln::ComponentParams component(int d) {
  return mpln::ComponentParams(Eigen::VectorXd::Constant(d, 4.0),
                               mpln::random_pd_covariance(d, 0.5, 1.5, 7));
}

void BM_LatentGradient(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  const auto params = component(d);
  const auto s = mpln::NormalizationFactors::ones(d);
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(d, 60.0);
  mpln::LatentTarget target(y, s, params);
  Eigen::VectorXd theta = Eigen::VectorXd::Constant(d, 4.1);
  Eigen::VectorXd grad(d);
  for (auto _ : state) {
    benchmark::DoNotOptimize(target.log_density_grad(std::span<const double>(theta.data(), d), std::span<double>(grad.data(), d)));
    benchmark::ClobberMemory();
  }
}
BENCHMARK(BM_LatentGradient)->Arg(2)->Arg(6)->Arg(12);

void BM_SampleLatent(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  const auto params = component(d);
  const auto s = mpln::NormalizationFactors::ones(d);
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(d, 60.0);
  mpln::SamplerConfig cfg;
  std::uint64_t seed = 1;
  for (auto _ : state) {
    auto chains = mpln::sample_latent(y, s, params, cfg, seed++);
    benchmark::DoNotOptimize(chains.draws.data());
  }
}
BENCHMARK(BM_SampleLatent)->Arg(2)->Arg(6)->Unit(benchmark::kMillisecond);

void BM_EStep(benchmark::State& state) {
  const auto spec = mpln::two_component_design(state.range(0), 3);
  const auto sim = mpln::simulate(spec);
  mpln::MixtureParams params;
  params.weights = spec.weights;
  for (Eigen::Index g = 0; g < spec.g(); ++g)
    params.components.emplace_back(spec.mus.row(g).transpose(), spec.sigmas[static_cast<std::size_t>(g)]);
  mpln::EStepSettings es;
  es.sampler.total_iters = 200;
  es.base_iters = 200;
  for (auto _ : state) {
    auto e = mpln::e_step(sim.counts, spec.s, params, es);
    benchmark::DoNotOptimize(e.row_loglik.data());
    ++es.seed;
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * spec.g());
}
BENCHMARK(BM_EStep)->Arg(50)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
