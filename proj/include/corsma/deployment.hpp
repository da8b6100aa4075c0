#pragma once

#include <string>
#include <vector>

#include "corsma/association.hpp"
#include "corsma/conic_solver.hpp"
#include "corsma/rates.hpp"
#include "corsma/scenario.hpp"

namespace corsma::deploy {

// The deployment stage works in the all-ones channel surrogate: every channel
// is sqrt(eps0)/r times the all-ones vector, so rates depend on positions only
// through distances. In LOS_ONES mode this surrogate matches the exact rates.

// |1^T p|^2 of a beam.
double ones_power(const CVecX& p);

// r^2(o_i, q_k) for every UAV/CS pair (U x K).
MatX squared_distances(const Scenario& sc, const MatX& positions);

// Private rate of CS k under the surrogate, with interfering UAV distances
// replaced by the lower bounds rhat (tight values reproduce the exact rate).
double surrogate_private_rate(const Scenario& sc, const Association& assoc,
                              const BeamformingState& state, const MatX& positions,
                              const MatX& rhat, int k);

// Weighted sum of surrogate private rates (the deployment objective).
double deployment_objective(const Scenario& sc, const Association& assoc,
                            const BeamformingState& state, const MatX& positions);

struct RateExpansion {
  double value = 0.0;  // rate at the expansion point (bits/s)
  Vec2 gradient;       // d rate / d o_{u(k)} (bits/s per meter)
};
RateExpansion taylor_private_rate(const Scenario& sc, const Association& assoc,
                                  const BeamformingState& state, const MatX& positions,
                                  const MatX& rhat, int k);

// QoS requirement of CS k in two algebraically equivalent margin forms
// (positive means satisfied): the direct rate-threshold form and the
// rearranged ball form on ||o_u - q_k||^2.
double qos_raw_margin(const Scenario& sc, const Association& assoc,
                      const BeamformingState& state, const MatX& positions,
                      const MatX& rhat, int k);
double qos_ball_margin(const Scenario& sc, const Association& assoc,
                       const BeamformingState& state, const MatX& positions,
                       const MatX& rhat, int k);
// RHS of the ball form; requires common_alloc[k] < rate threshold.
double prop1_ball_bound(const Scenario& sc, const Association& assoc,
                        const BeamformingState& state, const MatX& rhat, int k);

// Sensing pieces for one UAV with total covariance R.
double sensing_term(const Scenario& sc, const CMatX& R, const Vec2& o);        // tr(R A)/r^2
Vec2 sensing_term_gradient(const Scenario& sc, const CMatX& R, const Vec2& o); // its gradient
Vec2 steering_trace_gradient(const Scenario& sc, const CMatX& R, const Vec2& o); // d tr(R A)/d o

struct DeployOptions {
  int max_iterations = 30;
  double tol = 1e-3;           // relative objective change
  double trust_radius = 120.0; // meters, stabilizes the linearization
  double trust_shrink = 0.5;
  double trust_min = 0.25;
  double trust_grow = 1.5;
  conic::SolveOptions solver;
  DeployOptions() {
    solver.feas_tol = 1e-9;
    solver.gap_tol = 1e-9;
  }
};

struct DeployResult {
  MatX positions;
  std::vector<double> trace;  // objective at accepted iterates, non-decreasing
  int iterations = 0;
  bool converged = false;
  bool feasible = true;  // false if no iterate satisfying the exact constraints was reached
  std::string message;
};

DeployResult optimize_deployment(const Scenario& sc, const Association& assoc,
                                 const BeamformingState& state, const MatX& init_positions,
                                 const DeployOptions& opts = {});

}  // namespace corsma::deploy
