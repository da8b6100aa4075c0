#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "corsma/association.hpp"
#include "corsma/beamforming.hpp"
#include "corsma/channel.hpp"
#include "corsma/deployment.hpp"
#include "corsma/rates.hpp"
#include "corsma/scenario.hpp"

namespace corsma {

struct PipelineOptions {
  Scheme scheme = Scheme::CORSMA;
  std::uint64_t seed = 1;           // drives association restarts, channels, randomization
  ChannelMode mode = ChannelMode::LOS_ONES;
  int max_outer = 20;
  double tol = 1e-3;                // relative WSR change across outer iterations
  bool optimize_positions = true;   // false keeps UAVs at the cluster centroids
  deploy::DeployOptions deploy;
  beamform::BeamformingOptions beamforming;
};

struct StageTrace {
  int outer = 0;
  std::string stage;  // "beamforming" or "deployment"
  std::vector<double> objective;
};

struct Solution {
  Scheme scheme = Scheme::CORSMA;
  Scenario scenario;
  std::uint64_t seed = 0;
  Association association;
  BeamformingState state;
  RateReport report;                // exact final metrics
  double wsr = 0.0;
  double sensing_snr = 0.0;
  std::vector<double> outer_trace;  // exact WSR after each completed outer iteration
  std::vector<StageTrace> stage_traces;
  std::vector<MatX> position_history;  // deployment path, one U x 2 entry per accepted stage
  int outer_iterations = 0;
  bool converged = false;
  bool feasible = true;
  std::string message;
  double runtime_seconds = 0.0;
  std::uint64_t scenario_hash = 0;
};

// Stop once the relative WSR change drops below eps or the history reaches
// max_len entries.
bool convergence_check(const std::vector<double>& history, double eps, int max_len);

Solution run_pipeline(const Scenario& sc, const PipelineOptions& opts = {});

}  // namespace corsma
