#pragma once

#include <cstdint>
#include <vector>

#include "corsma/association.hpp"
#include "corsma/channel.hpp"
#include "corsma/scenario.hpp"
#include "corsma/types.hpp"

namespace corsma {

// One complete transmit design: beams per UAV plus the common-rate split.
// private_beams[k] lives at the serving UAV of CS k.
struct BeamformingState {
  MatX uav_positions;               // U x 2
  std::vector<CVecX> common;        // size U (may be zero vectors)
  std::vector<CVecX> private_beams; // size K
  std::vector<CVecX> sensing;       // size U
  VecX common_alloc;                // C_k, size K [b/s]
};

struct RateOptions {
  // The sensing beam is known at every CS and cancelled before decoding; set
  // true to keep it as interference instead (ablation).
  bool sensing_as_interference = false;
};

struct RateReport {
  VecX common_sinr;    // per k
  VecX private_sinr;   // per k
  VecX common_rate;    // R_k^c [b/s]
  VecX private_rate;   // R_k^p [b/s]
  double common_rate_min = 0.0;  // R^c = min_k R_k^c
  VecX total_rate;     // C_k + R_k^p
  double wsr = 0.0;
  double sensing_snr = 0.0;
  bool common_alloc_feasible = true;  // sum_k C_k <= R^c
};

// Per-UAV transmit covariance implied by the beams of `state`.
std::vector<CMatX> transmit_covariances(const Scenario& sc, const Association& assoc,
                                        const BeamformingState& state);

double common_sinr(const Scenario& sc, const Association& assoc, const Channels& ch,
                   const BeamformingState& state, int k, const RateOptions& opts = {});
double private_sinr(const Scenario& sc, const Association& assoc, const Channels& ch,
                    const BeamformingState& state, int k, const RateOptions& opts = {});

// Closed-form sensing SNR: beta0 / (r^2(o_0,q_0) sigma^2) *
// sum_u a(o_u,q_0)^H R_u a(o_u,q_0) / r^2(o_u,q_0).
double sensing_snr(const Scenario& sc, const MatX& uav_positions,
                   const std::vector<CMatX>& covariances);
double sensing_snr(const Scenario& sc, const Association& assoc, const BeamformingState& state);

// Simulation estimate of the sensing SNR: echoes of unit-power symbol blocks
// (the common stream is shared across UAVs) with per-UAV uniform reflection
// phases and AWGN at the receive array; returns mean ||signal||^2 / mean ||noise||^2.
double sensing_snr_monte_carlo(const Scenario& sc, const Association& assoc,
                               const BeamformingState& state, int block_len, int draws,
                               std::uint64_t seed);

RateReport evaluate_rates(const Scenario& sc, const Association& assoc, const Channels& ch,
                          const BeamformingState& state, const RateOptions& opts = {});

}  // namespace corsma
