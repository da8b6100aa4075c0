#include "corsma/beamforming.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <random>
#include <stdexcept>

#include "corsma/baselines.hpp"
#include "corsma/conic.hpp"

namespace corsma {

std::string scheme_name(Scheme s) {
  switch (s) {
    case Scheme::CORSMA: return "corsma";
    case Scheme::SDMA: return "sdma";
    case Scheme::NOMA: return "noma";
    case Scheme::OMA: return "oma";
  }
  return "corsma";
}

Scheme scheme_from_name(const std::string& name) {
  if (name == "corsma" || name == "rsma") return Scheme::CORSMA;
  if (name == "sdma") return Scheme::SDMA;
  if (name == "noma") return Scheme::NOMA;
  if (name == "oma") return Scheme::OMA;
  throw std::invalid_argument("unknown scheme: " + name);
}

namespace beamform {

namespace {

constexpr double kLn2 = 0.6931471805599453;
constexpr double kTraceFloor = 1e-13;
constexpr double kModelMargin = 3e-5;

double bandwidth_fraction(Scheme s, const Scenario& sc) {
  switch (s) {
    case Scheme::NOMA: return 1.0 / sc.U;
    case Scheme::OMA: return 1.0 / sc.K;
    default: return 1.0;
  }
}

bool has_common_stream(Scheme s) { return s == Scheme::CORSMA; }

// Private-beam indices whose stream interferes at CS k under the scheme.
std::vector<std::vector<int>> interference_sets(Scheme s, const Scenario& sc,
                                                const Association& assoc,
                                                const Channels& channels) {
  std::vector<std::vector<int>> sets(sc.K);
  if (s == Scheme::OMA) return sets;
  if (s == Scheme::NOMA) {
    VecX norms(sc.K);
    for (int k = 0; k < sc.K; ++k)
      norms[k] = channels[assoc.cs_to_uav[k]].col(k).squaredNorm();
    for (int k = 0; k < sc.K; ++k)
      for (int j : assoc.clusters[assoc.cs_to_uav[k]]) {
        if (j == k) continue;
        if (norms[j] > norms[k] || (norms[j] == norms[k] && j < k)) sets[k].push_back(j);
      }
    return sets;
  }
  for (int k = 0; k < sc.K; ++k)
    for (int j = 0; j < sc.K; ++j)
      if (j != k) sets[k].push_back(j);
  return sets;
}

struct Reduced {
  std::vector<CMatX> basis;              // V_u, Nt x d_u
  std::vector<int> dim;                  // d_u
  std::vector<std::vector<CVecX>> chan;  // chan[u][k] = V_u^H h_{u,k} / sigma_sub
  std::vector<CVecX> steer;              // V_u^H a_u
  VecX kappa;                            // sensing coefficient per UAV
  double gain_max = 0.0;                 // max ||chan||^2
};

Reduced reduce(const Scenario& sc, const MatX& positions, const Channels& channels,
               double noise_sub) {
  Reduced red;
  red.basis.resize(sc.U);
  red.dim.resize(sc.U);
  red.chan.resize(sc.U);
  red.steer.resize(sc.U);
  red.kappa = VecX::Zero(sc.U);
  const double r0 = distance3d(sc.rx_uav_position, sc.rx_altitude, sc.ts_position);
  const double inv_noise = 1.0 / std::sqrt(noise_sub);
  for (int u = 0; u < sc.U; ++u) {
    const Vec2 o = positions.row(u).transpose();
    const CVecX a = steering_vector(sc.Nt, o, sc.uav_altitude, sc.ts_position);
    CMatX span(sc.Nt, sc.K + 1);
    span.leftCols(sc.K) = channels[u];
    span.col(sc.K) = a;
    Eigen::ColPivHouseholderQR<CMatX> qr(span);
    qr.setThreshold(1e-10);
    const int d = std::max<int>(1, qr.rank());
    red.dim[u] = d;
    red.basis[u] = CMatX(qr.householderQ()) .leftCols(d);
    red.chan[u].resize(sc.K);
    for (int k = 0; k < sc.K; ++k) {
      red.chan[u][k] = red.basis[u].adjoint() * channels[u].col(k) * inv_noise;
      red.gain_max = std::max(red.gain_max, red.chan[u][k].squaredNorm());
    }
    red.steer[u] = red.basis[u].adjoint() * a;
    const double ru = distance3d(o, sc.uav_altitude, sc.ts_position);
    red.kappa[u] = sc.beta0 / (ru * ru * r0 * r0 * sc.noise_power);
  }
  return red;
}

struct Block {
  int d = 0;
  std::vector<int> params;
};

Block add_block(conic::ConicProgram& prog, int d) {
  Block b;
  b.d = d;
  if (d > 0) {
    b.params = prog.new_vars(d * d);
    prog.add_psd(2 * d, conic::hermitian_embedding_rows(d, b.params));
  }
  return b;
}

conic::LinExpr trace_expr(const Block& b) {
  conic::LinExpr e;
  for (int i = 0; i < b.d; ++i) e.add(b.params[i], 1.0);
  return e;
}

conic::LinExpr quad_expr(const Block& b, const CVecX& v) {
  return conic::hermitian_trace_form(CMatX(v * v.adjoint()), b.params);
}

double quad_value(const CMatX& Y, const CVecX& v) {
  if (Y.size() == 0) return 0.0;
  return (v.adjoint() * Y * v).value().real();
}

// Model denominators at a covariance iterate: Dp[k] = interference + 1,
// Dc[k] = all private + 1, in subband noise units.
struct Denoms {
  VecX priv;
  VecX common;
};

Denoms denominators(const Scenario& sc, const Association& assoc, const Reduced& red,
                    const std::vector<std::vector<int>>& interf,
                    const std::vector<CMatX>& Yp, bool with_common) {
  Denoms d;
  d.priv = VecX::Ones(sc.K);
  d.common = VecX::Ones(sc.K);
  for (int k = 0; k < sc.K; ++k) {
    for (int j : interf[k]) {
      const int uj = assoc.cs_to_uav[j];
      d.priv[k] += quad_value(Yp[j], red.chan[uj][k]);
    }
    if (with_common)
      for (int j = 0; j < sc.K; ++j)
        d.common[k] += quad_value(Yp[j], red.chan[assoc.cs_to_uav[j]][k]);
  }
  return d;
}

struct ExactMetrics {
  double wsr = 0.0;
  double sensing = 0.0;
  double common_rate = 0.0;  // exact min over CSs (CoRSMA only)
  VecX private_rates;
  VecX totals;
  double qos_violation = 0.0;  // largest relative shortfall
};

ExactMetrics exact_metrics(Scheme scheme, const Scenario& sc, const Association& assoc,
                           const Channels& channels, const BeamformingState& state) {
  ExactMetrics m;
  m.private_rates = VecX::Zero(sc.K);
  m.sensing = sensing_snr(sc, assoc, state);
  if (scheme == Scheme::CORSMA) {
    const RateReport rep = evaluate_rates(sc, assoc, channels, state);
    m.private_rates = rep.private_rate;
    m.common_rate = rep.common_rate_min;
    m.totals = rep.total_rate;
    m.wsr = rep.wsr;
  } else {
    m.totals = VecX::Zero(sc.K);
    if (scheme == Scheme::NOMA) {
      m.totals = baselines::noma_rates(sc, channels, state, assoc);
    } else {
      for (int k = 0; k < sc.K; ++k)
        m.totals[k] = scheme == Scheme::SDMA
                          ? baselines::sdma_rate(sc, channels, state, assoc, k)
                          : baselines::oma_rate(sc, channels, state, assoc, k);
    }
    m.private_rates = m.totals;
    for (int k = 0; k < sc.K; ++k) m.wsr += sc.weights[k] * m.totals[k];
  }
  for (int k = 0; k < sc.K; ++k) {
    const double shortfall = (sc.rate_thresholds[k] - m.totals[k]) /
                             std::max(1.0, sc.rate_thresholds[k]);
    m.qos_violation = std::max(m.qos_violation, shortfall);
  }
  m.qos_violation = std::max(m.qos_violation,
                             (sc.sensing_threshold - m.sensing) / sc.sensing_threshold);
  return m;
}

// Incoherent trace-form rates of a rank-one design: per-CS private rate and
// the common budget the relaxation would grant these exact beams. Private
// values coincide with the exact rates; the common budget ignores phase
// coherence across UAVs.
struct R1Model {
  VecX priv_rate;              // b/s
  double common_budget = 0.0;  // b/s
};

R1Model rank1_model(const Scenario& sc, const Association& assoc, const Channels& channels,
                    const std::vector<std::vector<int>>& interf, double bwf, double noise_sub,
                    bool with_common, const BeamformingState& state) {
  R1Model m;
  m.priv_rate = VecX::Zero(sc.K);
  auto gain = [&](int u, int k, const CVecX& p) {
    if (p.size() == 0) return 0.0;
    return std::norm((channels[u].col(k).adjoint() * p).value()) / noise_sub;
  };
  VecX dall = VecX::Ones(sc.K);
  for (int k = 0; k < sc.K; ++k)
    for (int j = 0; j < sc.K; ++j)
      dall[k] += gain(assoc.cs_to_uav[j], k, state.private_beams[j]);
  for (int k = 0; k < sc.K; ++k) {
    const int u = assoc.cs_to_uav[k];
    double den = 1.0;
    for (int j : interf[k]) den += gain(assoc.cs_to_uav[j], k, state.private_beams[j]);
    m.priv_rate[k] =
        sc.bandwidth * bwf * std::log2(1.0 + gain(u, k, state.private_beams[k]) / den);
  }
  if (with_common) {
    m.common_budget = std::numeric_limits<double>::infinity();
    for (int k = 0; k < sc.K; ++k) {
      double S = 0.0;
      for (int u = 0; u < sc.U; ++u) S += gain(u, k, state.common[u]);
      m.common_budget =
          std::min(m.common_budget, sc.bandwidth * std::log2(1.0 + S / dall[k]));
    }
  }
  return m;
}

// Split the common budget: cover QoS deficits first, the remainder goes to
// the highest-weight station.
VecX refit_common_alloc(const Scenario& sc, double budget, const VecX& private_rates) {
  VecX C = VecX::Zero(sc.K);
  if (budget <= 0.0) return C;
  double need_sum = 0.0;
  for (int k = 0; k < sc.K; ++k) {
    C[k] = std::max(0.0, sc.rate_thresholds[k] - private_rates[k]);
    need_sum += C[k];
  }
  if (need_sum > budget) {
    C *= budget / need_sum;
    return C;
  }
  int best = 0;
  for (int k = 1; k < sc.K; ++k)
    if (sc.weights[k] > sc.weights[best]) best = k;
  C[best] += budget - need_sum;
  return C;
}

}  // namespace

CMatX CovarianceSet::total(int u, const Association& assoc) const {
  CMatX X = sensing[u];
  if (common.size() > static_cast<size_t>(u) && common[u].size() > 0) X += common[u];
  for (int k : assoc.clusters[u])
    if (priv[k].size() > 0) X += priv[k];
  return X;
}

Rank1 extract_rank1(const CMatX& M) {
  Rank1 r;
  const double tr = M.trace().real();
  if (M.size() == 0 || tr <= kTraceFloor) {
    r.p = CVecX::Zero(M.rows());
    return r;
  }
  Eigen::SelfAdjointEigenSolver<CMatX> es((M + M.adjoint()) / 2.0);
  const int last = static_cast<int>(M.rows()) - 1;
  r.dominance = std::max(0.0, es.eigenvalues()[last]) / tr;
  r.p = es.eigenvectors().col(last) * std::sqrt(tr);
  return r;
}

BeamformingState mrt_initial_state(const Scenario& sc, const Association& assoc,
                                   const MatX& positions, const Channels& channels) {
  BeamformingState st;
  st.uav_positions = positions;
  st.common.resize(sc.U);
  st.private_beams.resize(sc.K);
  st.sensing.resize(sc.U);
  st.common_alloc = VecX::Zero(sc.K);
  for (int u = 0; u < sc.U; ++u) {
    CVecX mean = CVecX::Zero(sc.Nt);
    for (int k : assoc.clusters[u]) mean += channels[u].col(k);
    if (mean.norm() < 1e-18) mean = channels[u].rowwise().sum();
    if (mean.norm() < 1e-18) mean = CVecX::Ones(sc.Nt);
    st.common[u] = mean.normalized() * std::sqrt(0.5 * sc.p_max);
    const CVecX a = steering_vector(sc.Nt, positions.row(u).transpose(), sc.uav_altitude,
                                    sc.ts_position);
    st.sensing[u] = a.normalized() * std::sqrt(0.1 * sc.p_max);
    const int m = static_cast<int>(assoc.clusters[u].size());
    for (int k : assoc.clusters[u])
      st.private_beams[k] = channels[u].col(k).normalized() * std::sqrt(0.4 * sc.p_max / m);
  }
  return st;
}

BeamformingResult optimize_beamforming(const Scenario& sc, const Association& assoc,
                                       const MatX& positions, const Channels& channels,
                                       const BeamformingOptions& opts,
                                       conic::ExpCutCarry* carry) {
  using conic::LinExpr;

  BeamformingResult res;
  const Scheme scheme = opts.scheme;
  const bool with_common = has_common_stream(scheme);
  const double bwf = bandwidth_fraction(scheme, sc);
  const double noise_sub = sc.noise_power * bwf;
  const bool with_sca = scheme != Scheme::OMA;

  const Reduced red = reduce(sc, positions, channels, noise_sub);
  const auto interf = interference_sets(scheme, sc, assoc, channels);
  const double exp_hi =
      std::log(1.0 + std::max(1.0, (sc.U + sc.K) * red.gain_max * sc.p_max)) + 2.0;
  const double exp_lo = -2.0;

  // Expansion point from maximum ratio transmission beams.
  const BeamformingState init = mrt_initial_state(sc, assoc, positions, channels);
  Denoms hat;
  {
    std::vector<CMatX> Yp(sc.K);
    for (int k = 0; k < sc.K; ++k) {
      const int u = assoc.cs_to_uav[k];
      const CVecX pr = red.basis[u].adjoint() * init.private_beams[k];
      Yp[k] = pr * pr.adjoint();
    }
    hat = denominators(sc, assoc, red, interf, Yp, with_common);
  }

  conic::ExpCutCarry local_carry;
  conic::ExpCutCarry* cuts = carry ? carry : &local_carry;

  std::vector<CMatX> Yc(sc.U), Yp(sc.K), Ys(sc.U);
  VecX C_model = VecX::Zero(sc.K);  // b/s
  double J_prev = 0.0;
  bool solved_once = false;

  const int max_rounds = with_sca ? opts.max_iterations : 1;
  for (int t = 0; t < max_rounds; ++t) {
    conic::ConicProgram prog;
    std::vector<Block> bXc(sc.U), bXp(sc.K), bXs(sc.U);
    if (with_common)
      for (int u = 0; u < sc.U; ++u) bXc[u] = add_block(prog, red.dim[u]);
    for (int k = 0; k < sc.K; ++k) bXp[k] = add_block(prog, red.dim[assoc.cs_to_uav[k]]);
    for (int u = 0; u < sc.U; ++u)
      bXs[u] = add_block(prog, opts.sensing_beam ? red.dim[u] : 0);

    const double rate_coef = opts.probe_sensing ? 0.0 : 1.0;
    std::vector<int> vC(sc.K, -1), vEta(sc.K, -1), vRho(sc.K, -1), vChi(sc.K, -1),
        vZeta(sc.K, -1);
    if (with_common)
      for (int k = 0; k < sc.K; ++k) {
        vC[k] = prog.new_var(-rate_coef * sc.weights[k]);
        vEta[k] = prog.new_var();
        vRho[k] = prog.new_var();
        prog.add_nonneg(LinExpr().add(vC[k], 1.0));
      }
    for (int k = 0; k < sc.K; ++k) {
      vChi[k] = prog.new_var(-rate_coef * sc.weights[k] * bwf / kLn2);
      if (with_sca) vZeta[k] = prog.new_var(rate_coef * sc.weights[k] * bwf / kLn2);
    }

    if (with_common)
      for (int k = 0; k < sc.K; ++k) {
        LinExpr budget;
        budget.add(vEta[k], 1.0).add(vRho[k], -1.0);
        for (int i = 0; i < sc.K; ++i) budget.add(vC[i], -kLn2);
        prog.add_nonneg(budget);

        LinExpr bound(1.0);
        for (int u = 0; u < sc.U; ++u) bound += quad_expr(bXc[u], red.chan[u][k]);
        for (int j = 0; j < sc.K; ++j)
          bound += quad_expr(bXp[j], red.chan[assoc.cs_to_uav[j]][k]);
        prog.add_exp(LinExpr().add(vEta[k], 1.0), bound, exp_lo, exp_hi);

        // rho >= log(hat) + (den - hat)/hat, tangent of the log denominator.
        LinExpr row;
        row.add(vRho[k], 1.0);
        row.constant -= std::log(hat.common[k]) - 1.0;
        LinExpr den(1.0);
        for (int j = 0; j < sc.K; ++j)
          den += quad_expr(bXp[j], red.chan[assoc.cs_to_uav[j]][k]);
        den.scale(-1.0 / hat.common[k]);
        row += den;
        prog.add_nonneg(row);
      }

    for (int k = 0; k < sc.K; ++k) {
      const int u = assoc.cs_to_uav[k];
      LinExpr bound(1.0);
      bound += quad_expr(bXp[k], red.chan[u][k]);
      for (int j : interf[k]) bound += quad_expr(bXp[j], red.chan[assoc.cs_to_uav[j]][k]);
      prog.add_exp(LinExpr().add(vChi[k], 1.0), bound, exp_lo, exp_hi);

      if (with_sca) {
        LinExpr row;
        row.add(vZeta[k], 1.0);
        row.constant -= std::log(hat.priv[k]) - 1.0;
        LinExpr den(1.0);
        for (int j : interf[k]) den += quad_expr(bXp[j], red.chan[assoc.cs_to_uav[j]][k]);
        den.scale(-1.0 / hat.priv[k]);
        row += den;
        prog.add_nonneg(row);
      }

      // The model promises a hair more than the threshold so that solver
      // slack of feas_tol order cannot push the exact post-extraction rate
      // below it. Same idea for the power and sensing rows below.
      LinExpr qos(-sc.rate_thresholds[k] * (1.0 + kModelMargin) / sc.bandwidth);
      if (with_common) qos.add(vC[k], 1.0);
      qos.add(vChi[k], bwf / kLn2);
      if (with_sca) qos.add(vZeta[k], -bwf / kLn2);
      prog.add_nonneg(qos);
    }

    for (int u = 0; u < sc.U; ++u) {
      LinExpr power(sc.p_max * (1.0 - kModelMargin));
      if (with_common) power += trace_expr(bXc[u]).scale(-1.0);
      for (int k : assoc.clusters[u]) power += trace_expr(bXp[k]).scale(-1.0);
      power += trace_expr(bXs[u]).scale(-1.0);
      prog.add_nonneg(power);
    }

    LinExpr sens(-sc.sensing_threshold * (1.0 + kModelMargin));
    for (int u = 0; u < sc.U; ++u) {
      LinExpr beam;
      if (with_common) beam += quad_expr(bXc[u], red.steer[u]);
      for (int k : assoc.clusters[u]) beam += quad_expr(bXp[k], red.steer[u]);
      if (bXs[u].d > 0) beam += quad_expr(bXs[u], red.steer[u]);
      beam.scale(red.kappa[u]);
      sens += beam;
    }
    prog.add_nonneg(sens);
    if (opts.probe_sensing) {
      LinExpr obj = sens;
      for (const auto& [var, coef] : obj.terms) prog.set_objective(var, -coef);
    }

    const auto t0 = std::chrono::steady_clock::now();
    const auto sol = conic::solve(prog, opts.solver, cuts);
    if (std::getenv("CORSMA_BF_TRACE")) {
      const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::fprintf(stderr, "  t=%d solve: %.2fs rounds=%d ipm_iters=%d status=%d expviol=%.1e\n",
                   t, dt, sol.cut_rounds, sol.iterations, static_cast<int>(sol.status),
                   sol.exp_violation);
    }
    if (!sol.ok()) {
      res.message = "subproblem not solved at iteration " + std::to_string(t + 1) +
                    " (status " + std::to_string(static_cast<int>(sol.status)) + ")";
      break;
    }
    solved_once = true;
    if (with_common)
      for (int u = 0; u < sc.U; ++u)
        Yc[u] = conic::hermitian_from_params(red.dim[u], sol.x, bXc[u].params);
    for (int k = 0; k < sc.K; ++k)
      Yp[k] = conic::hermitian_from_params(red.dim[assoc.cs_to_uav[k]], sol.x, bXp[k].params);
    for (int u = 0; u < sc.U; ++u)
      Ys[u] = conic::hermitian_from_params(bXs[u].d, sol.x, bXs[u].params);
    if (with_common)
      for (int k = 0; k < sc.K; ++k) C_model[k] = sol.x[vC[k]] * sc.bandwidth;

    const Denoms cur = denominators(sc, assoc, red, interf, Yp, with_common);
    double J = 0.0;
    if (opts.probe_sensing) {
      double snr = 0.0;
      for (int u = 0; u < sc.U; ++u) {
        double q = quad_value(Ys[u], red.steer[u]);
        if (with_common) q += quad_value(Yc[u], red.steer[u]);
        for (int k : assoc.clusters[u]) q += quad_value(Yp[k], red.steer[u]);
        snr += red.kappa[u] * noise_sub * q;
      }
      J = snr;
    } else {
      for (int k = 0; k < sc.K; ++k) {
        const int u = assoc.cs_to_uav[k];
        const double T = quad_value(Yp[k], red.chan[u][k]);
        const double rate = bwf * std::log2(1.0 + T / cur.priv[k]);
        J += sc.weights[k] * (C_model[k] / sc.bandwidth + rate);
        if (std::getenv("CORSMA_BF_TRACE"))
          std::fprintf(stderr,
                       "    t=%d k=%d C=%.6g T=%.6g cur=%.6g hat=%.6g rate=%.6g b/s\n",
                       t, k, C_model[k], T, cur.priv[k], hat.priv[k],
                       rate * sc.bandwidth);
      }
      J *= sc.bandwidth;
    }
    res.trace.push_back(J);
    res.iterations = t + 1;
    hat = cur;

    if (t > 0 && std::abs(J - J_prev) <= opts.tol * std::max(std::abs(J_prev), 1.0)) {
      res.converged = true;
      J_prev = J;
      break;
    }
    J_prev = J;
    if (!with_sca) res.converged = true;
  }

  if (!solved_once) {
    res.state = init;
    res.feasible = false;
    if (res.message.empty()) res.message = "no subproblem solved";
    const ExactMetrics m = exact_metrics(scheme, sc, assoc, channels, res.state);
    res.exact_wsr = m.wsr;
    res.sensing_snr = m.sensing;
    return res;
  }

  res.sdp_objective = J_prev;
  res.covariances.common.assign(sc.U, CMatX());
  res.covariances.priv.assign(sc.K, CMatX::Zero(sc.Nt, sc.Nt));
  res.covariances.sensing.assign(sc.U, CMatX::Zero(sc.Nt, sc.Nt));
  for (int u = 0; u < sc.U; ++u) {
    if (with_common)
      res.covariances.common[u] = red.basis[u] * Yc[u] * red.basis[u].adjoint();
    else
      res.covariances.common[u] = CMatX::Zero(sc.Nt, sc.Nt);
    if (Ys[u].size() > 0)
      res.covariances.sensing[u] =
          red.basis[u].leftCols(Ys[u].rows()) * Ys[u] *
          red.basis[u].leftCols(Ys[u].rows()).adjoint();
  }
  for (int k = 0; k < sc.K; ++k) {
    const int u = assoc.cs_to_uav[k];
    res.covariances.priv[k] = red.basis[u] * Yp[k] * red.basis[u].adjoint();
  }

  // Rank-one extraction. Blocks below the trace floor are treated as off;
  // their spectra are solver noise. The dominance measure additionally skips
  // blocks carrying less than a hundredth of a percent of the power budget,
  // since a lossy principal component there moves no rate anyone checks.
  const double trace_floor = 1e-7 * sc.p_max;
  const double dominance_floor = 1e-4 * sc.p_max;
  res.min_dominance = 1.0;
  for (int k = 0; k < sc.K; ++k)
    if (res.covariances.priv[k].trace().real() > dominance_floor)
      res.min_dominance =
          std::min(res.min_dominance, extract_rank1(res.covariances.priv[k]).dominance);
  if (with_common)
    for (int u = 0; u < sc.U; ++u)
      if (res.covariances.common[u].trace().real() > dominance_floor)
        res.min_dominance =
            std::min(res.min_dominance, extract_rank1(res.covariances.common[u]).dominance);

  auto assemble = [&](const std::vector<CVecX>& pc, const std::vector<CVecX>& pp,
                      const std::vector<CVecX>& ps) {
    BeamformingState st;
    st.uav_positions = positions;
    st.common = pc;
    st.private_beams = pp;
    st.sensing = ps;
    st.common_alloc = VecX::Zero(sc.K);
    if (with_common) {
      // Align per-UAV common phases at the weakest station, then cap the
      // split by both the exact rate and the relaxation's own budget.
      int kstar = 0;
      double worst = std::numeric_limits<double>::infinity();
      for (int k = 0; k < sc.K; ++k) {
        double S = 0.0;
        for (int u = 0; u < sc.U; ++u) S += quad_value(Yc[u], red.chan[u][k]);
        const double sinr = S / hat.common[k];
        if (sinr < worst) {
          worst = sinr;
          kstar = k;
        }
      }
      for (int u = 0; u < sc.U; ++u) {
        if (st.common[u].size() == 0 || st.common[u].norm() < 1e-12) continue;
        const cplx g = channels[u].col(kstar).adjoint() * st.common[u];
        if (std::abs(g) > 1e-18) st.common[u] *= std::conj(g) / std::abs(g);
      }
      const ExactMetrics m0 = exact_metrics(Scheme::CORSMA, sc, assoc, channels, st);
      const R1Model r1 =
          rank1_model(sc, assoc, channels, interf, bwf, noise_sub, with_common, st);
      const double budget = std::min(r1.common_budget, m0.common_rate);
      st.common_alloc = refit_common_alloc(sc, budget, m0.private_rates);
    }
    return st;
  };

  auto top_beam = [&](const CMatX& X) {
    if (X.size() == 0 || X.trace().real() <= trace_floor) return CVecX(CVecX::Zero(sc.Nt));
    return extract_rank1(X).p;
  };

  std::vector<CVecX> ps(sc.U);
  for (int u = 0; u < sc.U; ++u) ps[u] = top_beam(res.covariances.sensing[u]);

  auto evd_candidate = [&] {
    std::vector<CVecX> pc(sc.U, CVecX::Zero(sc.Nt)), pp(sc.K);
    if (with_common)
      for (int u = 0; u < sc.U; ++u) pc[u] = top_beam(res.covariances.common[u]);
    for (int k = 0; k < sc.K; ++k) pp[k] = top_beam(res.covariances.priv[k]);
    return assemble(pc, pp, ps);
  };

  BeamformingState best = evd_candidate();
  ExactMetrics best_m = exact_metrics(scheme, sc, assoc, channels, best);

  // Principal components alone are enough only when every meaningful block
  // is close to rank one and the resulting beams actually check out.
  const bool evd_only =
      res.min_dominance >= opts.evd_threshold && best_m.qos_violation <= 1e-6;
  res.extraction = evd_only ? "evd" : "randomization";

  if (!evd_only && opts.randomization_samples > 0) {
    std::mt19937_64 rng(mix_seed(opts.seed, 0xBFBF));
    std::normal_distribution<double> nd(0.0, 1.0);
    auto factor = [&](const CMatX& X) {
      Eigen::SelfAdjointEigenSolver<CMatX> es((X + X.adjoint()) / 2.0);
      return CMatX(es.eigenvectors() *
                   es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal());
    };
    std::vector<CMatX> Lc(sc.U), Lp(sc.K);
    if (with_common)
      for (int u = 0; u < sc.U; ++u) Lc[u] = factor(res.covariances.common[u]);
    for (int k = 0; k < sc.K; ++k) Lp[k] = factor(res.covariances.priv[k]);
    auto draw = [&](const CMatX& L, const CMatX& X) {
      const double tr = X.trace().real();
      if (tr <= trace_floor) return CVecX(CVecX::Zero(sc.Nt));
      CVecX xi(sc.Nt);
      for (int i = 0; i < sc.Nt; ++i) xi[i] = cplx(nd(rng), nd(rng)) / std::sqrt(2.0);
      CVecX p = L * xi;
      const double n = p.norm();
      if (n < 1e-18) return CVecX(CVecX::Zero(sc.Nt));
      return CVecX(p * (std::sqrt(tr) / n));
    };
    for (int s = 0; s < opts.randomization_samples; ++s) {
      std::vector<CVecX> pc(sc.U, CVecX::Zero(sc.Nt)), pp(sc.K);
      if (with_common)
        for (int u = 0; u < sc.U; ++u) pc[u] = draw(Lc[u], res.covariances.common[u]);
      for (int k = 0; k < sc.K; ++k) pp[k] = draw(Lp[k], res.covariances.priv[k]);
      const BeamformingState cand = assemble(pc, pp, ps);
      const ExactMetrics m = exact_metrics(scheme, sc, assoc, channels, cand);
      const bool best_ok = best_m.qos_violation <= 1e-6;
      const bool cand_ok = m.qos_violation <= 1e-6;
      const double best_score = opts.probe_sensing ? best_m.sensing : best_m.wsr;
      const double cand_score = opts.probe_sensing ? m.sensing : m.wsr;
      if ((cand_ok && !best_ok) || (cand_ok == best_ok && cand_score > best_score) ||
          (!cand_ok && !best_ok && m.qos_violation < best_m.qos_violation)) {
        best = cand;
        best_m = m;
      }
    }
  }

  res.state = best;
  res.exact_wsr = best_m.wsr;
  res.sensing_snr = best_m.sensing;
  res.feasible = best_m.qos_violation <= 1e-6;
  if (!res.feasible && res.message.empty()) res.message = "extracted beams violate a constraint";

  if (!opts.probe_sensing && res.feasible) {
    // The rank-one covariances of the returned beams are themselves feasible
    // for the relaxation, so the relaxation objective is at least their
    // incoherent model value; reporting the max keeps the bound explicit.
    const R1Model r1 =
        rank1_model(sc, assoc, channels, interf, bwf, noise_sub, with_common, best);
    double mu_max = 0.0;
    for (int k = 0; k < sc.K; ++k) mu_max = std::max(mu_max, sc.weights[k]);
    double j1 = 0.0;
    for (int k = 0; k < sc.K; ++k) j1 += sc.weights[k] * r1.priv_rate[k];
    if (with_common) j1 += mu_max * std::max(0.0, r1.common_budget);
    res.sdp_objective = std::max(res.sdp_objective, j1);
  }
  return res;
}

}  // namespace beamform
}  // namespace corsma
