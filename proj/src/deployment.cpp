#include "corsma/deployment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "corsma/channel.hpp"

namespace corsma::deploy {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct OnesPowers {
  VecX beam;     // per CS: |1 p_k|^2
  VecX cluster;  // per UAV: sum over its CSs
};

OnesPowers ones_powers(const Scenario& sc, const Association& assoc,
                       const BeamformingState& state) {
  OnesPowers w;
  w.beam = VecX::Zero(sc.K);
  w.cluster = VecX::Zero(sc.U);
  for (int k = 0; k < sc.K; ++k) {
    w.beam[k] = ones_power(state.private_beams[k]);
    w.cluster[assoc.cs_to_uav[k]] += w.beam[k];
  }
  return w;
}

double noise_over_eps(const Scenario& sc) { return sc.noise_power / sc.eps0; }

// S/g - intra with g = 2^((Rth - C)/B) - 1; the position independent budget
// of the ball form. Positive is required for the QoS of CS k to be reachable.
double qos_budget(const Scenario& sc, const Association& assoc, const BeamformingState& state,
                  const OnesPowers& w, int k) {
  const int u = assoc.cs_to_uav[k];
  const double g =
      std::exp2((sc.rate_thresholds[k] - state.common_alloc[k]) / sc.bandwidth) - 1.0;
  return w.beam[k] / g - (w.cluster[u] - w.beam[k]);
}

double psi_of(const Scenario& sc, const Association& assoc, const OnesPowers& w,
              const MatX& rhat, int k) {
  const int u = assoc.cs_to_uav[k];
  double psi = noise_over_eps(sc);
  for (int i = 0; i < sc.U; ++i)
    if (i != u) psi += w.cluster[i] / rhat(i, k);
  return psi;
}

}  // namespace

double ones_power(const CVecX& p) {
  if (p.size() == 0) return 0.0;
  return std::norm(p.sum());
}

MatX squared_distances(const Scenario& sc, const MatX& positions) {
  MatX r2(sc.U, sc.K);
  for (int i = 0; i < sc.U; ++i)
    for (int k = 0; k < sc.K; ++k) {
      const double d = distance3d(positions.row(i).transpose(), sc.uav_altitude,
                                  sc.cs_positions.row(k).transpose());
      r2(i, k) = d * d;
    }
  return r2;
}

double surrogate_private_rate(const Scenario& sc, const Association& assoc,
                              const BeamformingState& state, const MatX& positions,
                              const MatX& rhat, int k) {
  const OnesPowers w = ones_powers(sc, assoc, state);
  const int u = assoc.cs_to_uav[k];
  const double d = distance3d(positions.row(u).transpose(), sc.uav_altitude,
                              sc.cs_positions.row(k).transpose());
  const double r2 = d * d;
  const double denom = (w.cluster[u] - w.beam[k]) + psi_of(sc, assoc, w, rhat, k) * r2;
  return sc.bandwidth * std::log2(1.0 + w.beam[k] / denom);
}

double deployment_objective(const Scenario& sc, const Association& assoc,
                            const BeamformingState& state, const MatX& positions) {
  const MatX rhat = squared_distances(sc, positions);
  double obj = 0.0;
  for (int k = 0; k < sc.K; ++k)
    obj += sc.weights[k] * surrogate_private_rate(sc, assoc, state, positions, rhat, k);
  return obj;
}

RateExpansion taylor_private_rate(const Scenario& sc, const Association& assoc,
                                  const BeamformingState& state, const MatX& positions,
                                  const MatX& rhat, int k) {
  const OnesPowers w = ones_powers(sc, assoc, state);
  const int u = assoc.cs_to_uav[k];
  const Vec2 o = positions.row(u).transpose();
  const Vec2 q = sc.cs_positions.row(k).transpose();
  const double r2 = (o - q).squaredNorm() + sc.uav_altitude * sc.uav_altitude;
  const double phi = psi_of(sc, assoc, w, rhat, k);
  const double intra = w.cluster[u] - w.beam[k];
  const double C = intra + phi * r2;
  const double D = C + w.beam[k];
  RateExpansion ex;
  ex.value = sc.bandwidth * std::log2(1.0 + w.beam[k] / C);
  ex.gradient = -2.0 * sc.bandwidth * std::log2(std::exp(1.0)) * w.beam[k] * phi * (o - q) /
                (C * D);
  return ex;
}

double prop1_ball_bound(const Scenario& sc, const Association& assoc,
                        const BeamformingState& state, const MatX& rhat, int k) {
  const OnesPowers w = ones_powers(sc, assoc, state);
  const double budget = qos_budget(sc, assoc, state, w, k);
  const double psi = psi_of(sc, assoc, w, rhat, k);
  return budget / psi - sc.uav_altitude * sc.uav_altitude;
}

double qos_raw_margin(const Scenario& sc, const Association& assoc,
                      const BeamformingState& state, const MatX& positions,
                      const MatX& rhat, int k) {
  return state.common_alloc[k] + surrogate_private_rate(sc, assoc, state, positions, rhat, k) -
         sc.rate_thresholds[k];
}

double qos_ball_margin(const Scenario& sc, const Association& assoc,
                       const BeamformingState& state, const MatX& positions,
                       const MatX& rhat, int k) {
  if (state.common_alloc[k] >= sc.rate_thresholds[k])
    return std::numeric_limits<double>::infinity();
  const int u = assoc.cs_to_uav[k];
  const Vec2 o = positions.row(u).transpose();
  const Vec2 q = sc.cs_positions.row(k).transpose();
  return prop1_ball_bound(sc, assoc, state, rhat, k) - (o - q).squaredNorm();
}

double sensing_term(const Scenario& sc, const CMatX& R, const Vec2& o) {
  const CVecX a = steering_vector(sc.Nt, o, sc.uav_altitude, sc.ts_position);
  const double d = distance3d(o, sc.uav_altitude, sc.ts_position);
  return (a.adjoint() * R * a).value().real() / (d * d);
}

Vec2 steering_trace_gradient(const Scenario& sc, const CMatX& R, const Vec2& o) {
  const Vec2 q0 = sc.ts_position;
  const double H = sc.uav_altitude;
  const double r = distance3d(o, H, q0);
  Vec2 g = Vec2::Zero();
  for (int p = 0; p < sc.Nt; ++p)
    for (int q = p + 1; q < sc.Nt; ++q) {
      const cplx rpq = R(p, q);
      const double mag = std::abs(rpq);
      if (mag == 0.0) continue;
      const double theta = std::arg(rpq);
      g += 2.0 * kPi * mag * std::sin(theta + kPi * (q - p) * H / r) * (q - p) * H *
           (o - q0) / (r * r * r);
    }
  return g;
}

Vec2 sensing_term_gradient(const Scenario& sc, const CMatX& R, const Vec2& o) {
  const Vec2 q0 = sc.ts_position;
  const double H = sc.uav_altitude;
  const double r = distance3d(o, H, q0);
  const double r2 = r * r;
  const CVecX a = steering_vector(sc.Nt, o, H, q0);
  const double G = (a.adjoint() * R * a).value().real();
  const Vec2 F = steering_trace_gradient(sc, R, o);
  return (F * r2 - 2.0 * G * (o - q0)) / (r2 * r2);
}

DeployResult optimize_deployment(const Scenario& sc, const Association& assoc,
                                 const BeamformingState& state, const MatX& init_positions,
                                 const DeployOptions& opts) {
  using conic::ConicProgram;
  using conic::LinExpr;

  DeployResult res;
  res.positions = init_positions;

  const OnesPowers w = ones_powers(sc, assoc, state);
  const auto covs = transmit_covariances(sc, assoc, state);
  const double sens_rhs = [&] {
    const double r0 = distance3d(sc.rx_uav_position, sc.rx_altitude, sc.ts_position);
    return r0 * r0 * sc.noise_power * sc.sensing_threshold / sc.beta0;
  }();
  const double sigma_eps = noise_over_eps(sc);
  const double H2 = sc.uav_altitude * sc.uav_altitude;

  // The QoS budget is position independent; a nonpositive budget cannot be
  // fixed by moving UAVs.
  std::vector<int> ball_cs;
  for (int k = 0; k < sc.K; ++k) {
    if (state.common_alloc[k] >= sc.rate_thresholds[k]) continue;
    if (qos_budget(sc, assoc, state, w, k) <= 0.0) {
      res.feasible = false;
      res.message = "qos budget nonpositive for a served station";
      return res;
    }
    ball_cs.push_back(k);
  }

  auto exact_sensing = [&](const MatX& pos) { return sensing_snr(sc, pos, covs); };
  auto exact_qos_ok = [&](const MatX& pos) {
    const MatX tight = squared_distances(sc, pos);
    for (int k = 0; k < sc.K; ++k) {
      const double margin = qos_raw_margin(sc, assoc, state, pos, tight, k);
      if (margin < -1e-6 * std::max(1.0, sc.rate_thresholds[k])) return false;
    }
    return true;
  };
  auto is_feasible = [&](const MatX& pos) {
    return exact_sensing(pos) >= sc.sensing_threshold * (1.0 - 1e-9) && exact_qos_ok(pos);
  };

  double J = deployment_objective(sc, assoc, state, res.positions);
  bool have_feasible = is_feasible(res.positions);
  res.trace.push_back(J);
  double trust = opts.trust_radius;

  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    const MatX rhat0 = squared_distances(sc, res.positions);

    // Build the convexified subproblem at the current expansion point.
    ConicProgram prog;
    std::vector<int> ox(sc.U), oy(sc.U), fk(sc.K);
    for (int u = 0; u < sc.U; ++u) {
      ox[u] = prog.new_var();
      oy[u] = prog.new_var();
    }
    for (int k = 0; k < sc.K; ++k) fk[k] = prog.new_var(-sc.weights[k]);
    MatX rhat_var = MatX::Constant(sc.U, sc.K, -1);
    for (int k = 0; k < sc.K; ++k)
      for (int i = 0; i < sc.U; ++i)
        if (i != assoc.cs_to_uav[k]) rhat_var(i, k) = prog.new_var();

    for (int k = 0; k < sc.K; ++k) {
      const int u = assoc.cs_to_uav[k];
      const RateExpansion ex = taylor_private_rate(sc, assoc, state, res.positions, rhat0, k);
      LinExpr row(ex.value - ex.gradient.dot(res.positions.row(u).transpose()));
      row.add(ox[u], ex.gradient[0]);
      row.add(oy[u], ex.gradient[1]);
      row.add(fk[k], -1.0);
      prog.add_nonneg(row);
    }

    for (int k : ball_cs) {
      const int u = assoc.cs_to_uav[k];
      const Vec2 q = sc.cs_positions.row(k).transpose();
      const int sk = prog.new_var();
      const int vk = prog.new_var();
      // s_k >= 3D distance to the station.
      prog.add_soc({LinExpr().add(sk, 1.0), LinExpr(-q[0]).add(ox[u], 1.0),
                    LinExpr(-q[1]).add(oy[u], 1.0), LinExpr(sc.uav_altitude)});
      // v_k >= s_k^2.
      prog.add_rotated_soc(LinExpr().add(vk, 1.0), LinExpr(1.0), {LinExpr().add(sk, 1.0)});
      LinExpr total(qos_budget(sc, assoc, state, w, k));
      total.add(vk, -sigma_eps);
      for (int i = 0; i < sc.U; ++i) {
        if (i == u || w.cluster[i] == 0.0) continue;
        const int tik = prog.new_var();
        // t r̂ >= s^2, so t upper-bounds r^2/r̂.
        prog.add_rotated_soc(LinExpr().add(tik, 1.0), LinExpr().add(rhat_var(i, k), 1.0),
                             {LinExpr().add(sk, 1.0)});
        total.add(tik, -w.cluster[i]);
      }
      prog.add_nonneg(total);
    }

    // r̂ may not exceed the linearized squared distance of the interfering UAV.
    for (int k = 0; k < sc.K; ++k)
      for (int i = 0; i < sc.U; ++i) {
        if (rhat_var(i, k) < 0) continue;
        const Vec2 oi = res.positions.row(i).transpose();
        const Vec2 q = sc.cs_positions.row(k).transpose();
        const Vec2 d = oi - q;
        LinExpr row(d.squaredNorm() + H2 - 2.0 * d.dot(oi));
        row.add(ox[i], 2.0 * d[0]);
        row.add(oy[i], 2.0 * d[1]);
        row.add(rhat_var(i, k), -1.0);
        prog.add_nonneg(row);
      }

    {
      LinExpr sens(-sens_rhs);
      for (int u = 0; u < sc.U; ++u) {
        const Vec2 o = res.positions.row(u).transpose();
        const double Hu = sensing_term(sc, covs[u], o);
        const Vec2 eu = sensing_term_gradient(sc, covs[u], o);
        sens.constant += Hu - eu.dot(o);
        sens.add(ox[u], eu[0]);
        sens.add(oy[u], eu[1]);
      }
      prog.add_nonneg(sens);
    }

    for (int u = 0; u < sc.U; ++u) {
      prog.add_nonneg(LinExpr(-sc.cs_area[0]).add(ox[u], 1.0));
      prog.add_nonneg(LinExpr(sc.cs_area[2]).add(ox[u], -1.0));
      prog.add_nonneg(LinExpr(-sc.cs_area[1]).add(oy[u], 1.0));
      prog.add_nonneg(LinExpr(sc.cs_area[3]).add(oy[u], -1.0));
      prog.add_nonneg(LinExpr(trust + res.positions(u, 0)).add(ox[u], -1.0));
      prog.add_nonneg(LinExpr(trust - res.positions(u, 0)).add(ox[u], 1.0));
      prog.add_nonneg(LinExpr(trust + res.positions(u, 1)).add(oy[u], -1.0));
      prog.add_nonneg(LinExpr(trust - res.positions(u, 1)).add(oy[u], 1.0));
    }

    const auto sol = conic::solve(prog, opts.solver);
    bool accepted = false;
    if (sol.ok()) {
      MatX cand(sc.U, 2);
      for (int u = 0; u < sc.U; ++u) {
        cand(u, 0) = sol.x[ox[u]];
        cand(u, 1) = sol.x[oy[u]];
      }
      const double Jc = deployment_objective(sc, assoc, state, cand);
      const bool cand_feasible = is_feasible(cand);
      const double scale = std::max(std::abs(J), sc.bandwidth);
      if ((cand_feasible || !have_feasible) && Jc >= J - 1e-9 * scale) {
        const double moved = (cand - res.positions).cwiseAbs().maxCoeff();
        const double gain = Jc - J;
        res.positions = cand;
        J = std::max(J, Jc);
        res.trace.push_back(J);
        res.iterations = iter + 1;
        have_feasible = have_feasible || cand_feasible;
        accepted = true;
        trust = std::min(trust * opts.trust_grow, opts.trust_radius);
        if (gain < opts.tol * std::max(std::abs(J), 1.0) || moved < 1e-7) {
          res.converged = true;
          break;
        }
      }
    } else if (sol.status == conic::SolveStatus::PrimalInfeasible) {
      res.message = "subproblem infeasible at linearization";
    }

    if (!accepted) {
      trust *= opts.trust_shrink;
      if (trust < opts.trust_min) {
        res.converged = true;
        break;
      }
    }
  }

  res.feasible = have_feasible && is_feasible(res.positions);
  if (res.message.empty() && !res.feasible) res.message = "no feasible iterate reached";
  return res;
}

}  // namespace corsma::deploy
