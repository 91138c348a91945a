#include "mpln/sampler.hpp"

#include "mpln/rng.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace mpln {

namespace {

// Energy error beyond which a trajectory counts as divergent.
constexpr double kDivergenceThreshold = 1000.0;

struct PhaseState {
  std::vector<double> theta;
  std::vector<double> grad;
  double logp = 0.0;
};

struct TransitionResult {
  double accept_prob = 0.0;
  double energy_error = 0.0;
  bool accepted = false;
  bool divergent = false;
};

/// Leapfrog integrator with a fixed mass matrix M; owns scratch space so
/// transitions do not allocate. Momenta are drawn as L z with M = L L^T and
/// positions move along M^{-1} p.
class Hamiltonian {
 public:
  Hamiltonian(const LatentTarget& target, int leapfrog_steps, const Eigen::MatrixXd& mass)
      : target_(target),
        steps_(leapfrog_steps),
        d_(static_cast<std::size_t>(target.dim())),
        q_(d_),
        p_(d_),
        g_(d_),
        v_(d_),
        z_(d_),
        inv_mass_(d_ * d_),
        chol_(d_ * d_) {
    Eigen::LLT<Eigen::MatrixXd> llt(mass);
    const Eigen::MatrixXd lower = llt.matrixL();
    const Eigen::MatrixXd inverse = llt.solve(Eigen::MatrixXd::Identity(mass.rows(), mass.cols()));
    for (std::size_t r = 0; r < d_; ++r) {
      for (std::size_t c = 0; c < d_; ++c) {
        const auto er = static_cast<Eigen::Index>(r);
        const auto ec = static_cast<Eigen::Index>(c);
        inv_mass_[r * d_ + c] = 0.5 * (inverse(er, ec) + inverse(ec, er));
        chol_[r * d_ + c] = lower(er, ec);
      }
    }
  }

  TransitionResult transition(PhaseState& state, double eps, Engine& rng) {
    for (auto& v : z_) v = normal_(rng);
    draw_momentum();
    const double h0 = -state.logp + 0.5 * kinetic();
    std::copy(state.theta.begin(), state.theta.end(), q_.begin());
    std::copy(state.grad.begin(), state.grad.end(), g_.begin());

    double logp = state.logp;
    bool finite = true;
    for (std::size_t j = 0; j < d_; ++j) p_[j] += 0.5 * eps * g_[j];
    for (int l = 0; l < steps_; ++l) {
      velocity();
      for (std::size_t j = 0; j < d_; ++j) q_[j] += eps * v_[j];
      logp = target_.log_density_grad(q_, g_);
      if (!std::isfinite(logp)) {
        finite = false;
        break;
      }
      const double scale = (l + 1 == steps_) ? 0.5 * eps : eps;
      for (std::size_t j = 0; j < d_; ++j) p_[j] += scale * g_[j];
    }

    TransitionResult out;
    const double h1 = finite ? -logp + 0.5 * kinetic() : std::numeric_limits<double>::infinity();
    out.energy_error = h1 - h0;
    if (!std::isfinite(out.energy_error) || out.energy_error > kDivergenceThreshold) {
      out.divergent = true;
      out.accept_prob = 0.0;
    } else {
      out.accept_prob = out.energy_error <= 0 ? 1.0 : std::exp(-out.energy_error);
    }
    if (!out.divergent && uniform_(rng) < out.accept_prob) {
      out.accepted = true;
      std::copy(q_.begin(), q_.end(), state.theta.begin());
      std::copy(g_.begin(), g_.end(), state.grad.begin());
      state.logp = logp;
    }
    return out;
  }

  /// One leapfrog step from `state` with fixed standard-normal draws `z`;
  /// returns the Metropolis ratio exp(H0 - H1) (0 when the step blows up).
  double single_step_ratio(const PhaseState& state, const std::vector<double>& z, double eps) {
    std::copy(z.begin(), z.end(), z_.begin());
    draw_momentum();
    const double h0 = -state.logp + 0.5 * kinetic();
    for (std::size_t j = 0; j < d_; ++j) p_[j] += 0.5 * eps * state.grad[j];
    velocity();
    for (std::size_t j = 0; j < d_; ++j) q_[j] = state.theta[j] + eps * v_[j];
    const double logp = target_.log_density_grad(q_, g_);
    if (!std::isfinite(logp)) return 0.0;
    for (std::size_t j = 0; j < d_; ++j) p_[j] += 0.5 * eps * g_[j];
    const double ratio = std::exp(h0 - (-logp + 0.5 * kinetic()));
    return std::isfinite(ratio) ? ratio : 0.0;
  }

 private:
  void draw_momentum() {
    for (std::size_t r = 0; r < d_; ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c <= r; ++c) acc += chol_[r * d_ + c] * z_[c];
      p_[r] = acc;
    }
  }

  void velocity() {
    for (std::size_t r = 0; r < d_; ++r) {
      const double* row = inv_mass_.data() + r * d_;
      double acc = 0.0;
      for (std::size_t c = 0; c < d_; ++c) acc += row[c] * p_[c];
      v_[r] = acc;
    }
  }

  double kinetic() {
    velocity();
    double k = 0.0;
    for (std::size_t j = 0; j < d_; ++j) k += p_[j] * v_[j];
    return k;
  }

  const LatentTarget& target_;
  int steps_;
  std::size_t d_;
  std::vector<double> q_, p_, g_, v_, z_;
  std::vector<double> inv_mass_;  // row-major M^{-1}
  std::vector<double> chol_;      // row-major lower factor of M
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

/// Step-size search that doubles or halves until the one-step acceptance
/// ratio crosses 1/2.
double initial_step_size(Hamiltonian& ham, const PhaseState& state, std::size_t d,
                         Engine& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> momentum(d);
  for (auto& v : momentum) v = normal(rng);

  double eps = 1.0;
  double ratio = ham.single_step_ratio(state, momentum, eps);
  const double direction = ratio > 0.5 ? 1.0 : -1.0;
  for (int k = 0; k < 60; ++k) {
    if (direction > 0 ? !(ratio > 0.5) : !(ratio < 0.5)) break;
    const double next = eps * std::pow(2.0, direction);
    if (next < 1e-10 || next > 1e3) break;
    eps = next;
    ratio = ham.single_step_ratio(state, momentum, eps);
  }
  return eps;
}

class DualAveraging {
 public:
  DualAveraging(double eps0, double target) : mu_(std::log(10.0 * eps0)), target_(target) {}

  double update(double accept_prob) {
    ++m_;
    const double eta = 1.0 / (m_ + kT0);
    h_bar_ = (1.0 - eta) * h_bar_ + eta * (target_ - accept_prob);
    const double log_eps = mu_ - std::sqrt(m_) / kGamma * h_bar_;
    const double w = std::pow(m_, -kKappa);
    log_eps_bar_ = w * log_eps + (1.0 - w) * log_eps_bar_;
    return std::exp(log_eps);
  }

  double final_step() const { return std::exp(log_eps_bar_); }

 private:
  static constexpr double kGamma = 0.05;
  static constexpr double kT0 = 10.0;
  static constexpr double kKappa = 0.75;

  double mu_;
  double target_;
  double h_bar_ = 0.0;
  double log_eps_bar_ = 0.0;
  double m_ = 0.0;
};

struct ChainRun {
  Eigen::MatrixXd draws;
  ChainStats stats;
};

ChainRun run_chain(const LatentTarget& target, const Eigen::VectorXd& init,
                   const SamplerConfig& cfg, std::uint64_t seed, int chain) {
  const auto d = static_cast<std::size_t>(target.dim());
  const auto c = static_cast<std::uint64_t>(chain);
  Engine warm_rng(derive_seed(seed, {c, 0}));
  Eigen::MatrixXd mass = Eigen::MatrixXd::Identity(target.dim(), target.dim());
  if (cfg.mass == MassMatrix::curvature) {
    Eigen::MatrixXd h = target.curvature(init);
    if (h.allFinite() && Eigen::LLT<Eigen::MatrixXd>(h).info() == Eigen::Success) mass = h;
  }
  Hamiltonian ham(target, cfg.leapfrog_steps, mass);

  PhaseState state;
  state.theta.resize(d);
  state.grad.resize(d);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t j = 0; j < d; ++j) {
    state.theta[j] = init[static_cast<Eigen::Index>(j)] + 0.1 * normal(warm_rng);
  }
  state.logp = target.log_density_grad(state.theta, state.grad);
  if (!std::isfinite(state.logp)) {
    throw SamplerError("latent log posterior is not finite at the starting point");
  }

  double eps = initial_step_size(ham, state, d, warm_rng);
  const int warmup = cfg.warmup_iters();
  if (warmup > 0) {
    DualAveraging adapt(eps, cfg.target_accept);
    for (int it = 0; it < warmup; ++it) {
      auto t = ham.transition(state, eps, warm_rng);
      eps = adapt.update(t.accept_prob);
    }
    eps = adapt.final_step();
  }

  const PhaseState start = state;
  const int kept = cfg.kept_iters();
  ChainRun run;
  run.draws.resize(kept, static_cast<Eigen::Index>(d));
  for (int halvings = 0;; ++halvings) {
    state = start;
    Engine rng(derive_seed(seed, {c, 1, static_cast<std::uint64_t>(halvings)}));
    std::uniform_real_distribution<double> jitter(0.2, 1.0);
    int accepted = 0;
    int divergent = 0;
    double abs_energy = 0.0;
    for (int it = 0; it < kept; ++it) {
      auto t = ham.transition(state, eps * jitter(rng), rng);
      if (t.divergent) ++divergent;
      if (t.accepted) {
        ++accepted;
        abs_energy += std::abs(t.energy_error);
      }
      for (std::size_t j = 0; j < d; ++j) run.draws(it, static_cast<Eigen::Index>(j)) = state.theta[j];
    }
    run.stats.step_size = eps;
    run.stats.accept_rate = static_cast<double>(accepted) / kept;
    run.stats.divergence_rate = static_cast<double>(divergent) / kept;
    run.stats.mean_abs_energy_error = accepted > 0 ? abs_energy / accepted : 0.0;
    run.stats.step_halvings = halvings;
    if (run.stats.divergence_rate <= 0.5) break;
    if (halvings >= cfg.max_retries) {
      throw SamplerError("more than half of the transitions diverged after " +
                         std::to_string(halvings) + " step-size halvings");
    }
    eps *= 0.5;
  }
  return run;
}

}  // namespace

void SamplerConfig::validate() const {
  if (chains < 2) throw std::invalid_argument("sampler needs at least two chains");
  if (total_iters < 100) throw std::invalid_argument("total_iters must be >= 100");
  if (!(warmup_fraction > 0 && warmup_fraction < 1)) {
    throw std::invalid_argument("warmup_fraction must lie in (0, 1)");
  }
  if (leapfrog_steps < 1) throw std::invalid_argument("leapfrog_steps must be >= 1");
  if (!(target_accept > 0 && target_accept < 1)) {
    throw std::invalid_argument("target_accept must lie in (0, 1)");
  }
  if (max_retries < 0) throw std::invalid_argument("max_retries must be >= 0");
}

int SamplerConfig::warmup_iters() const noexcept {
  return static_cast<int>(std::floor(total_iters * warmup_fraction));
}

ChainSet sample_target(const LatentTarget& target, const Eigen::VectorXd& init,
                       const SamplerConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (init.size() != target.dim()) throw std::invalid_argument("init has the wrong dimension");
  ChainSet out;
  out.warmup_len = cfg.warmup_iters();
  out.base_seed = seed;
  out.draws.reserve(static_cast<std::size_t>(cfg.chains));
  out.stats.reserve(static_cast<std::size_t>(cfg.chains));
  for (int c = 0; c < cfg.chains; ++c) {
    auto run = run_chain(target, init, cfg, seed, c);
    out.draws.push_back(std::move(run.draws));
    out.stats.push_back(run.stats);
  }
  return out;
}

ChainSet sample_latent(const Eigen::VectorXd& y, const NormalizationFactors& s,
                       const ComponentParams& params, const SamplerConfig& cfg,
                       std::uint64_t seed) {
  LatentTarget target(y, s, params);
  return sample_target(target, target.initial_point(), cfg, seed);
}

Eigen::VectorXd posterior_mean(const ChainSet& chains) {
  if (chains.draws.empty() || chains.iterations() == 0) {
    throw std::invalid_argument("posterior_mean of an empty chain set");
  }
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(chains.dim());
  Eigen::Index count = 0;
  for (const auto& chain : chains.draws) {
    sum += chain.colwise().sum().transpose();
    count += chain.rows();
  }
  return sum / static_cast<double>(count);
}

Eigen::MatrixXd posterior_scatter(const ChainSet& chains, const Eigen::VectorXd& center) {
  if (chains.draws.empty() || chains.iterations() == 0) {
    throw std::invalid_argument("posterior_scatter of an empty chain set");
  }
  if (center.size() != chains.dim()) throw std::invalid_argument("center has the wrong dimension");
  Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(chains.dim(), chains.dim());
  Eigen::Index count = 0;
  for (const auto& chain : chains.draws) {
    Eigen::MatrixXd centered = chain.rowwise() - center.transpose();
    scatter.noalias() += centered.transpose() * centered;
    count += chain.rows();
  }
  scatter /= static_cast<double>(count);
  return 0.5 * (scatter + scatter.transpose());
}

int grow_schedule(int em_iter, int base, int failures) {
  if (em_iter < 1) throw std::invalid_argument("em_iter must be >= 1");
  return base + 10 * (em_iter - 1) + 100 * failures;
}

}  // namespace mpln
