#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "corsma/association.hpp"
#include "corsma/channel.hpp"
#include "corsma/conic_solver.hpp"
#include "corsma/rates.hpp"
#include "corsma/scenario.hpp"

namespace corsma {

enum class Scheme { CORSMA, SDMA, NOMA, OMA };

std::string scheme_name(Scheme s);
Scheme scheme_from_name(const std::string& name);

namespace beamform {

// Covariance blocks in the full antenna dimension.
struct CovarianceSet {
  std::vector<CMatX> common;   // per UAV (empty matrices for schemes without a common stream)
  std::vector<CMatX> priv;     // per CS, held by its serving UAV
  std::vector<CMatX> sensing;  // per UAV
  CMatX total(int u, const Association& assoc) const;
};

struct Rank1 {
  CVecX p;
  double dominance = 1.0;  // lambda_max / trace
};
// Principal component scaled so that p p^H has the trace of M.
Rank1 extract_rank1(const CMatX& M);

// Feasible starting beams: maximum ratio transmission with a fixed power
// split (half common toward the cluster mean channel, 40% private spread
// equally, 10% sensing toward the target steering vector).
BeamformingState mrt_initial_state(const Scenario& sc, const Association& assoc,
                                   const MatX& positions, const Channels& channels);

struct BeamformingOptions {
  Scheme scheme = Scheme::CORSMA;
  int max_iterations = 20;
  double tol = 1e-3;  // relative model WSR change between SCA steps
  double evd_threshold = 0.99;
  int randomization_samples = 100;
  std::uint64_t seed = 1;
  // Maximize the sensing SNR instead of the WSR, keeping every constraint;
  // used for sensing-headroom studies.
  bool probe_sensing = false;
  // Give every scheme a dedicated sensing beam; set false to force the
  // communication beams to carry the sensing duty alone.
  bool sensing_beam = true;
  conic::SolveOptions solver;
  BeamformingOptions() {
    // The SCA tolerance is 1e-3, so the subproblems gain nothing beyond
    // 1e-6, and the degenerate late iterates are cheaper to leave alone.
    solver.feas_tol = 1e-6;
    solver.gap_tol = 1e-6;
    solver.max_iterations = 60;
  }
};

struct BeamformingResult {
  BeamformingState state;     // extracted rank-one beams, allocations refit
  CovarianceSet covariances;  // final relaxation blocks
  double sdp_objective = 0.0; // final relaxation objective (bits/s, or SNR when probing)
  double exact_wsr = 0.0;
  double sensing_snr = 0.0;
  std::vector<double> trace;  // model objective per SCA iteration
  int iterations = 0;
  bool converged = false;
  bool feasible = true;
  std::string message;
  double min_dominance = 1.0;
  std::string extraction;  // "evd" or "randomization"
};

BeamformingResult optimize_beamforming(const Scenario& sc, const Association& assoc,
                                       const MatX& positions, const Channels& channels,
                                       const BeamformingOptions& opts = {},
                                       conic::ExpCutCarry* carry = nullptr);

}  // namespace beamform
}  // namespace corsma
