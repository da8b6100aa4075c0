#pragma once

#include "corsma/pipeline.hpp"

namespace corsma::baselines {

// Rate of CS k when every stream except its own private beam is interference
// (no common stream, no SIC).
double sdma_rate(const Scenario& sc, const Channels& channels, const BeamformingState& state,
                 const Association& assoc, int k);

// Per-CS rates with bandwidth B/U and in-cluster SIC in ascending channel
// norm order: a CS only sees the private streams of same-cluster CSs with a
// larger channel norm; the strongest CS decodes interference free.
VecX noma_rates(const Scenario& sc, const Channels& channels, const BeamformingState& state,
                const Association& assoc);

// Orthogonal slice of bandwidth B/K, interference free.
double oma_rate(const Scenario& sc, const Channels& channels, const BeamformingState& state,
                const Association& assoc, int k);

// Shared pipeline with the scheme's rate model in the beamforming stage.
Solution optimize_baseline(Scheme scheme, const Scenario& sc, const PipelineOptions& opts = {});

}  // namespace corsma::baselines
