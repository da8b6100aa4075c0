#include "corsma/association.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace corsma {

double wcss_of(const MatX& cs_positions, const std::vector<int>& cs_to_uav,
               const MatX& centroids) {
  double acc = 0.0;
  for (int k = 0; k < cs_positions.rows(); ++k) {
    const Vec2 d = cs_positions.row(k) - centroids.row(cs_to_uav[k]);
    acc += d.squaredNorm();
  }
  return acc;
}

MatX centroids_of(const MatX& cs_positions, const std::vector<int>& cs_to_uav, int U) {
  MatX c = MatX::Zero(U, 2);
  std::vector<int> count(U, 0);
  for (int k = 0; k < cs_positions.rows(); ++k) {
    c.row(cs_to_uav[k]) += cs_positions.row(k);
    count[cs_to_uav[k]]++;
  }
  for (int u = 0; u < U; ++u)
    if (count[u] > 0) c.row(u) /= count[u];
  return c;
}

namespace {

std::vector<int> assign_nearest(const MatX& cs, const MatX& centroids) {
  std::vector<int> label(cs.rows());
  for (int k = 0; k < cs.rows(); ++k) {
    double best = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (int u = 0; u < centroids.rows(); ++u) {
      const double d = (cs.row(k) - centroids.row(u)).squaredNorm();
      if (d < best - 1e-12) {  // strict improvement keeps lowest-index ties
        best = d;
        arg = u;
      }
    }
    label[k] = arg;
  }
  return label;
}

// Moves the CS farthest from its centroid into each empty cluster.
void repair_empty(const MatX& cs, std::vector<int>& label, const MatX& centroids, int U) {
  std::vector<int> count(U, 0);
  for (int lab : label) count[lab]++;
  for (int u = 0; u < U; ++u) {
    if (count[u] > 0) continue;
    double worst = -1.0;
    int victim = -1;
    for (int k = 0; k < cs.rows(); ++k) {
      if (count[label[k]] <= 1) continue;
      const double d = (cs.row(k) - centroids.row(label[k])).squaredNorm();
      if (d > worst) {
        worst = d;
        victim = k;
      }
    }
    if (victim >= 0) {
      count[label[victim]]--;
      label[victim] = u;
      count[u] = 1;
    }
  }
}

Association lloyd_run(const Scenario& sc, MatX centroids, int max_iter) {
  Association a;
  a.centroids = centroids;
  std::vector<int> label;
  for (int it = 1; it <= max_iter; ++it) {
    label = assign_nearest(sc.cs_positions, a.centroids);
    repair_empty(sc.cs_positions, label, a.centroids, sc.U);
    MatX next = centroids_of(sc.cs_positions, label, sc.U);
    a.iterations = it;
    if (a.cs_to_uav == label && (next - a.centroids).cwiseAbs().maxCoeff() < 1e-12) {
      a.centroids = next;
      break;
    }
    a.cs_to_uav = label;
    a.centroids = next;
  }
  a.cs_to_uav = label;
  a.clusters.assign(sc.U, {});
  for (int k = 0; k < sc.K; ++k) a.clusters[a.cs_to_uav[k]].push_back(k);
  a.wcss = wcss_of(sc.cs_positions, a.cs_to_uav, a.centroids);
  return a;
}

}  // namespace

Association kmeans_associate(const Scenario& sc, std::uint64_t seed, int max_iter, int restarts) {
  if (sc.U > sc.K)
    throw std::invalid_argument("kmeans_associate: need at least one CS per UAV (U <= K)");

  // Sort positions lexicographically so initialization depends only on the
  // position multiset, not on CS ordering.
  std::vector<int> order(sc.K);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (sc.cs_positions(a, 0) != sc.cs_positions(b, 0))
      return sc.cs_positions(a, 0) < sc.cs_positions(b, 0);
    return sc.cs_positions(a, 1) < sc.cs_positions(b, 1);
  });

  Association best;
  best.wcss = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(1, restarts); ++r) {
    std::mt19937_64 rng(mix_seed(seed, 0xA550 + r));
    std::vector<int> pick(order);
    std::shuffle(pick.begin(), pick.end(), rng);
    MatX init(sc.U, 2);
    for (int u = 0; u < sc.U; ++u) init.row(u) = sc.cs_positions.row(pick[u]);
    Association a = lloyd_run(sc, init, max_iter);
    if (a.wcss < best.wcss - 1e-12) best = a;
  }
  return best;
}

}  // namespace corsma
