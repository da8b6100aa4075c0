#include "corsma/pipeline.hpp"

#include <chrono>
#include <cmath>

#include "corsma/baselines.hpp"

namespace corsma {

namespace {

// Scheme-exact per-CS totals, weighted sum and sensing SNR for a state.
struct FinalMetrics {
  VecX totals;
  VecX common_rate;
  VecX private_rate;
  double wsr = 0.0;
  double sensing = 0.0;
  bool feasible = true;
};

FinalMetrics final_metrics(Scheme scheme, const Scenario& sc, const Association& assoc,
                           const Channels& channels, const BeamformingState& state) {
  FinalMetrics m;
  m.common_rate = VecX::Zero(sc.K);
  if (scheme == Scheme::CORSMA) {
    const RateReport rep = evaluate_rates(sc, assoc, channels, state);
    m.totals = rep.total_rate;
    m.private_rate = rep.private_rate;
    m.common_rate = state.common_alloc;
    m.wsr = rep.wsr;
    m.feasible = rep.common_alloc_feasible;
  } else if (scheme == Scheme::NOMA) {
    m.totals = baselines::noma_rates(sc, channels, state, assoc);
  } else {
    m.totals = VecX::Zero(sc.K);
    for (int k = 0; k < sc.K; ++k)
      m.totals[k] = scheme == Scheme::SDMA
                        ? baselines::sdma_rate(sc, channels, state, assoc, k)
                        : baselines::oma_rate(sc, channels, state, assoc, k);
  }
  if (scheme != Scheme::CORSMA) {
    m.private_rate = m.totals;
    for (int k = 0; k < sc.K; ++k) m.wsr += sc.weights[k] * m.totals[k];
  }
  m.sensing = sensing_snr(sc, assoc, state);
  if (m.sensing < sc.sensing_threshold * (1.0 - 1e-9)) m.feasible = false;
  for (int k = 0; k < sc.K; ++k)
    if (m.totals[k] < sc.rate_thresholds[k] - 1e-6 * std::max(1.0, sc.rate_thresholds[k]))
      m.feasible = false;
  const auto covs = transmit_covariances(sc, assoc, state);
  for (int u = 0; u < sc.U; ++u)
    if (covs[u].trace().real() > sc.p_max * (1.0 + 1e-9)) m.feasible = false;
  return m;
}

}  // namespace

bool convergence_check(const std::vector<double>& history, double eps, int max_len) {
  if (static_cast<int>(history.size()) >= max_len) return true;
  if (history.size() < 2) return false;
  const double last = history.back();
  const double prev = history[history.size() - 2];
  return std::abs(last - prev) / std::max(last, 1.0) < eps;
}

Solution run_pipeline(const Scenario& scenario_in, const PipelineOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();

  Scenario sc = scenario_in;
  sc.apply_defaults();
  sc.validate();

  Solution sol;
  sol.scheme = opts.scheme;
  sol.scenario = sc;
  sol.seed = opts.seed;
  sol.scenario_hash = scenario_hash(sc);

  sol.association = kmeans_associate(sc, opts.seed);
  MatX positions = sol.association.centroids;
  sol.position_history.push_back(positions);

  beamform::BeamformingOptions bf_opts = opts.beamforming;
  bf_opts.scheme = opts.scheme;
  bf_opts.seed = opts.seed;
  conic::ExpCutCarry carry;

  double wsr_prev = 0.0;
  Channels channels;
  bool have_state = false;

  for (int outer = 1; outer <= opts.max_outer; ++outer) {
    channels = all_channels(sc, positions, opts.mode, opts.seed);
    const auto bf = beamform::optimize_beamforming(sc, sol.association, positions, channels,
                                                   bf_opts, &carry);
    sol.state = bf.state;
    sol.state.uav_positions = positions;
    have_state = true;
    sol.outer_iterations = outer;
    sol.stage_traces.push_back({outer, "beamforming", bf.trace});
    if (!bf.message.empty()) sol.message = bf.message;

    const double wsr = bf.exact_wsr;
    if (outer > 1 && wsr < wsr_prev - 1e-6 * std::max(std::abs(wsr_prev), 1.0))
      sol.message = "outer wsr decreased at iteration " + std::to_string(outer);
    sol.outer_trace.push_back(wsr);
    if (convergence_check(sol.outer_trace, opts.tol, opts.max_outer)) {
      sol.converged = sol.outer_trace.size() >= 2 &&
                      std::abs(wsr - wsr_prev) / std::max(wsr, 1.0) < opts.tol;
      break;
    }
    wsr_prev = wsr;

    if (opts.optimize_positions) {
      const auto dep =
          deploy::optimize_deployment(sc, sol.association, sol.state, positions, opts.deploy);
      sol.stage_traces.push_back({outer, "deployment", dep.trace});
      if ((dep.positions - positions).cwiseAbs().maxCoeff() > 0.0) {
        positions = dep.positions;
        sol.position_history.push_back(positions);
      }
    }
  }

  if (have_state) {
    channels = all_channels(sc, positions, opts.mode, opts.seed);
    const FinalMetrics m = final_metrics(opts.scheme, sc, sol.association, channels, sol.state);
    sol.wsr = m.wsr;
    sol.sensing_snr = m.sensing;
    sol.feasible = m.feasible;
    RateReport rep;
    if (opts.scheme == Scheme::CORSMA) {
      rep = evaluate_rates(sc, sol.association, channels, sol.state);
    } else {
      rep.private_rate = m.private_rate;
      rep.common_rate = VecX::Zero(sc.K);
      rep.common_sinr = VecX::Zero(sc.K);
      rep.private_sinr = VecX::Zero(sc.K);
      rep.total_rate = m.totals;
      rep.wsr = m.wsr;
      rep.sensing_snr = m.sensing;
    }
    sol.report = rep;
  } else {
    sol.feasible = false;
    if (sol.message.empty()) sol.message = "no beamforming stage completed";
  }

  sol.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return sol;
}

}  // namespace corsma
