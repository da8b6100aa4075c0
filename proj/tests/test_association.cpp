#include <doctest.h>

#include <algorithm>
#include <random>

#include "corsma/association.hpp"

using namespace corsma;

TEST_CASE("kmeans recovers well separated clusters") {
  Scenario sc = make_default_scenario(2, 6);
  sc.cs_positions.resize(6, 2);
  sc.cs_positions << 10, 10, 12, 11, 11, 13, 410, 400, 412, 399, 408, 402;
  Association a = kmeans_associate(sc, 3);
  CHECK(a.cs_to_uav[0] == a.cs_to_uav[1]);
  CHECK(a.cs_to_uav[1] == a.cs_to_uav[2]);
  CHECK(a.cs_to_uav[3] == a.cs_to_uav[4]);
  CHECK(a.cs_to_uav[4] == a.cs_to_uav[5]);
  CHECK(a.cs_to_uav[0] != a.cs_to_uav[3]);
  CHECK(a.clusters[0].size() + a.clusters[1].size() == 6);
  // Centroid of the first group.
  const int g = a.cs_to_uav[0];
  CHECK(a.centroids(g, 0) == doctest::Approx(11.0));
  CHECK(a.centroids(g, 1) == doctest::Approx(34.0 / 3.0));
}

TEST_CASE("every cluster is non-empty and memberships partition the set") {
  Scenario sc = make_default_scenario(3, 7);
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    randomize_cs_positions(sc, seed);
    Association a = kmeans_associate(sc, seed);
    int total = 0;
    for (int u = 0; u < sc.U; ++u) {
      CHECK(!a.clusters[u].empty());
      total += static_cast<int>(a.clusters[u].size());
      for (int k : a.clusters[u]) CHECK(a.cs_to_uav[k] == u);
    }
    CHECK(total == sc.K);
  }
}

TEST_CASE("deterministic under seed") {
  Scenario sc = make_default_scenario(3, 8);
  randomize_cs_positions(sc, 5);
  Association a = kmeans_associate(sc, 17);
  Association b = kmeans_associate(sc, 17);
  CHECK(a.cs_to_uav == b.cs_to_uav);
  CHECK(a.wcss == doctest::Approx(b.wcss));
}

TEST_CASE("label equivariance under CS permutation") {
  Scenario sc = make_default_scenario(3, 7);
  randomize_cs_positions(sc, 9);
  Association a = kmeans_associate(sc, 33);

  std::vector<int> perm(sc.K);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(4);
  std::shuffle(perm.begin(), perm.end(), rng);
  Scenario sp = sc;
  for (int k = 0; k < sc.K; ++k) sp.cs_positions.row(k) = sc.cs_positions.row(perm[k]);
  Association b = kmeans_associate(sp, 33);

  // Same partition of the position multiset, up to cluster relabeling.
  CHECK(b.wcss == doctest::Approx(a.wcss).epsilon(1e-12));
  for (int k1 = 0; k1 < sc.K; ++k1)
    for (int k2 = 0; k2 < sc.K; ++k2) {
      const bool same_a = a.cs_to_uav[perm[k1]] == a.cs_to_uav[perm[k2]];
      const bool same_b = b.cs_to_uav[k1] == b.cs_to_uav[k2];
      CHECK(same_a == same_b);
    }
}

TEST_CASE("wcss at fixed point beats random partitions") {
  Scenario sc = make_default_scenario(3, 6);
  std::mt19937_64 rng(2024);
  for (int inst = 0; inst < 5; ++inst) {
    randomize_cs_positions(sc, 100 + inst);
    Association a = kmeans_associate(sc, inst);
    double best_random = 1e300;
    for (int t = 0; t < 1000; ++t) {
      std::vector<int> label(sc.K);
      bool ok = false;
      while (!ok) {
        for (int k = 0; k < sc.K; ++k) label[k] = static_cast<int>(rng() % sc.U);
        std::vector<int> cnt(sc.U, 0);
        for (int lab : label) cnt[lab]++;
        ok = *std::min_element(cnt.begin(), cnt.end()) > 0;
      }
      const MatX cent = centroids_of(sc.cs_positions, label, sc.U);
      best_random = std::min(best_random, wcss_of(sc.cs_positions, label, cent));
    }
    CHECK(a.wcss <= best_random + 1e-9);
  }
}

TEST_CASE("rejects more UAVs than stations") {
  Scenario sc = make_default_scenario(4, 3);
  randomize_cs_positions(sc, 0);
  CHECK_THROWS_AS(kmeans_associate(sc, 0), std::invalid_argument);
}
