#include "mpln/em.hpp"
#include "mpln/rng.hpp"

#include <algorithm>
#include <limits>
#include <random>
#include <stdexcept>

namespace mpln {

namespace {

double squared_distance(const Eigen::MatrixXd& points, Eigen::Index i,
                        const Eigen::MatrixXd& centers, Eigen::Index k) {
  return (points.row(i) - centers.row(k)).squaredNorm();
}

/// k-means++: first center uniform, then proportional to squared distance.
Eigen::MatrixXd seed_centers(const Eigen::MatrixXd& points, int k, Engine& rng) {
  const auto n = points.rows();
  Eigen::MatrixXd centers(k, points.cols());
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  centers.row(0) = points.row(pick(rng));
  std::vector<double> dist(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  std::vector<bool> chosen(static_cast<std::size_t>(n), false);
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      auto& di = dist[static_cast<std::size_t>(i)];
      di = std::min(di, squared_distance(points, i, centers, c - 1));
      total += di;
    }
    Eigen::Index next = 0;
    if (total > 0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng);
      double acc = 0.0;
      next = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += dist[static_cast<std::size_t>(i)];
        if (acc >= target && dist[static_cast<std::size_t>(i)] > 0) {
          next = i;
          break;
        }
      }
    } else {
      // All remaining points coincide with a center; take the next unused row.
      next = c % n;
    }
    centers.row(c) = points.row(next);
  }
  return centers;
}

}  // namespace

std::vector<int> kmeans(const Eigen::MatrixXd& points, int k, int iters, std::uint64_t seed) {
  const auto n = points.rows();
  if (k < 1) throw std::invalid_argument("kmeans needs k >= 1");
  if (k > n) throw std::invalid_argument("kmeans needs k <= number of points");
  Engine rng(seed);
  Eigen::MatrixXd centers = seed_centers(points, k, rng);
  std::vector<int> labels(static_cast<std::size_t>(n), -1);

  auto assign = [&] {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = squared_distance(points, i, centers, 0);
      for (int c = 1; c < k; ++c) {
        double dc = squared_distance(points, i, centers, c);
        if (dc < best_d) {
          best_d = dc;
          best = c;
        }
      }
      auto& li = labels[static_cast<std::size_t>(i)];
      changed = changed || li != best;
      li = best;
    }
    return changed;
  };

  assign();
  for (int sweep = 0; sweep < std::max(iters, 1); ++sweep) {
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, points.cols());
    std::vector<Eigen::Index> sizes(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int c = labels[static_cast<std::size_t>(i)];
      sums.row(c) += points.row(i);
      ++sizes[static_cast<std::size_t>(c)];
    }
    for (int c = 0; c < k; ++c) {
      if (sizes[static_cast<std::size_t>(c)] > 0) {
        centers.row(c) = sums.row(c) / static_cast<double>(sizes[static_cast<std::size_t>(c)]);
        continue;
      }
      // Re-seed an empty cluster at the point farthest from its own center,
      // taken from a cluster that can spare it.
      Eigen::Index far = -1;
      double far_d = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const int li = labels[static_cast<std::size_t>(i)];
        if (sizes[static_cast<std::size_t>(li)] < 2) continue;
        double di = squared_distance(points, i, centers, li);
        if (di > far_d) {
          far_d = di;
          far = i;
        }
      }
      if (far < 0) throw std::runtime_error("kmeans could not re-seed an empty cluster");
      --sizes[static_cast<std::size_t>(labels[static_cast<std::size_t>(far)])];
      labels[static_cast<std::size_t>(far)] = c;
      sizes[static_cast<std::size_t>(c)] = 1;
      centers.row(c) = points.row(far);
    }
    if (!assign() && sweep > 0) break;
  }

  // A final assignment can still leave a cluster empty when points coincide;
  // hand each empty cluster one point from the largest cluster.
  std::vector<Eigen::Index> sizes(static_cast<std::size_t>(k), 0);
  for (int l : labels) ++sizes[static_cast<std::size_t>(l)];
  for (int c = 0; c < k; ++c) {
    if (sizes[static_cast<std::size_t>(c)] > 0) continue;
    auto donor = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
    for (Eigen::Index i = n - 1; i >= 0; --i) {
      if (labels[static_cast<std::size_t>(i)] == donor) {
        labels[static_cast<std::size_t>(i)] = c;
        --sizes[static_cast<std::size_t>(donor)];
        ++sizes[static_cast<std::size_t>(c)];
        break;
      }
    }
  }
  return labels;
}

}  // namespace mpln
