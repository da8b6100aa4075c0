#include "corsma/baselines.hpp"

#include <cmath>

namespace corsma::baselines {

namespace {

double stream_power(const CVecX& h, const CVecX& p) {
  if (p.size() == 0) return 0.0;
  return std::norm((h.adjoint() * p).value());
}

}  // namespace

double sdma_rate(const Scenario& sc, const Channels& channels, const BeamformingState& state,
                 const Association& assoc, int k) {
  const int u = assoc.cs_to_uav[k];
  const double sig = stream_power(channels[u].col(k), state.private_beams[k]);
  double den = sc.noise_power;
  for (int j = 0; j < sc.K; ++j) {
    if (j == k) continue;
    den += stream_power(channels[assoc.cs_to_uav[j]].col(k), state.private_beams[j]);
  }
  return sc.bandwidth * std::log2(1.0 + sig / den);
}

VecX noma_rates(const Scenario& sc, const Channels& channels, const BeamformingState& state,
                const Association& assoc) {
  const double bw = sc.bandwidth / sc.U;
  const double noise = sc.noise_power / sc.U;
  VecX norms(sc.K);
  for (int k = 0; k < sc.K; ++k) norms[k] = channels[assoc.cs_to_uav[k]].col(k).squaredNorm();
  VecX rates(sc.K);
  for (int k = 0; k < sc.K; ++k) {
    const int u = assoc.cs_to_uav[k];
    const double sig = stream_power(channels[u].col(k), state.private_beams[k]);
    double den = noise;
    for (int j : assoc.clusters[u]) {
      if (j == k) continue;
      if (norms[j] > norms[k] || (norms[j] == norms[k] && j < k))
        den += stream_power(channels[u].col(k), state.private_beams[j]);
    }
    rates[k] = bw * std::log2(1.0 + sig / den);
  }
  return rates;
}

double oma_rate(const Scenario& sc, const Channels& channels, const BeamformingState& state,
                const Association& assoc, int k) {
  const double bw = sc.bandwidth / sc.K;
  const double noise = sc.noise_power / sc.K;
  const int u = assoc.cs_to_uav[k];
  const double sig = stream_power(channels[u].col(k), state.private_beams[k]);
  return bw * std::log2(1.0 + sig / noise);
}

Solution optimize_baseline(Scheme scheme, const Scenario& sc, const PipelineOptions& opts) {
  PipelineOptions o = opts;
  o.scheme = scheme;
  o.beamforming.scheme = scheme;
  return run_pipeline(sc, o);
}

}  // namespace corsma::baselines
