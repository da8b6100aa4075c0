#pragma once

#include <cstdint>
#include <vector>

#include "corsma/scenario.hpp"
#include "corsma/types.hpp"

namespace corsma {

struct Association {
  std::vector<int> cs_to_uav;              // size K, values in [0, U)
  std::vector<std::vector<int>> clusters;  // J_u, ascending CS indices
  MatX centroids;                          // U x 2
  double wcss = 0.0;                       // within-cluster sum of squared distances
  int iterations = 0;
};

// Within-cluster sum of squared ground distances for a given labeling.
double wcss_of(const MatX& cs_positions, const std::vector<int>& cs_to_uav,
               const MatX& centroids);

// Centroids as cluster means of the labeled points.
MatX centroids_of(const MatX& cs_positions, const std::vector<int>& cs_to_uav, int U);

// Lloyd iteration on CS ground positions. Initial centroids are U distinct
// CS positions drawn from the lexicographically sorted position list (so the
// result is invariant to CS index permutations). Empty clusters are repaired
// by moving in the CS farthest from its current centroid; assignment ties
// break toward the lowest UAV index. Runs `restarts` seeded starts and keeps
// the lowest-WCSS fixed point.
Association kmeans_associate(const Scenario& sc, std::uint64_t seed, int max_iter = 100,
                             int restarts = 16);

}  // namespace corsma
