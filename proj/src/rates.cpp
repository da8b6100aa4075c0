#include "corsma/rates.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace corsma {

namespace {

double log2_rate(double bandwidth, double sinr) { return bandwidth * std::log2(1.0 + sinr); }

bool nonzero(const CVecX& v) { return v.size() > 0 && v.squaredNorm() > 0.0; }

}  // namespace

std::vector<CMatX> transmit_covariances(const Scenario& sc, const Association& assoc,
                                        const BeamformingState& state) {
  std::vector<CMatX> R(sc.U, CMatX::Zero(sc.Nt, sc.Nt));
  for (int u = 0; u < sc.U; ++u) {
    if (nonzero(state.common[u])) R[u] += state.common[u] * state.common[u].adjoint();
    if (nonzero(state.sensing[u])) R[u] += state.sensing[u] * state.sensing[u].adjoint();
  }
  for (int k = 0; k < sc.K; ++k) {
    const int u = assoc.cs_to_uav[k];
    if (nonzero(state.private_beams[k]))
      R[u] += state.private_beams[k] * state.private_beams[k].adjoint();
  }
  return R;
}

double common_sinr(const Scenario& sc, const Association& assoc, const Channels& ch,
                   const BeamformingState& state, int k, const RateOptions& opts) {
  cplx num(0.0, 0.0);
  double interference = 0.0;
  for (int u = 0; u < sc.U; ++u) {
    const CVecX h = ch[u].col(k);
    if (nonzero(state.common[u])) num += h.dot(state.common[u]);
    if (opts.sensing_as_interference && nonzero(state.sensing[u]))
      interference += std::norm(h.dot(state.sensing[u]));
  }
  for (int j = 0; j < sc.K; ++j) {
    const int uj = assoc.cs_to_uav[j];
    if (nonzero(state.private_beams[j]))
      interference += std::norm(ch[uj].col(k).dot(state.private_beams[j]));
  }
  return std::norm(num) / (interference + sc.noise_power);
}

double private_sinr(const Scenario& sc, const Association& assoc, const Channels& ch,
                    const BeamformingState& state, int k, const RateOptions& opts) {
  const int u = assoc.cs_to_uav[k];
  const double num = nonzero(state.private_beams[k])
                         ? std::norm(ch[u].col(k).dot(state.private_beams[k]))
                         : 0.0;
  double interference = 0.0;
  for (int j = 0; j < sc.K; ++j) {
    if (j == k) continue;
    const int uj = assoc.cs_to_uav[j];
    if (nonzero(state.private_beams[j]))
      interference += std::norm(ch[uj].col(k).dot(state.private_beams[j]));
  }
  if (opts.sensing_as_interference)
    for (int i = 0; i < sc.U; ++i)
      if (nonzero(state.sensing[i])) interference += std::norm(ch[i].col(k).dot(state.sensing[i]));
  return num / (interference + sc.noise_power);
}

double sensing_snr(const Scenario& sc, const MatX& uav_positions,
                   const std::vector<CMatX>& covariances) {
  const double r0 = distance3d(sc.rx_uav_position, sc.rx_altitude, sc.ts_position);
  double acc = 0.0;
  for (int u = 0; u < sc.U; ++u) {
    const Vec2 o_u = uav_positions.row(u);
    const double ru = distance3d(o_u, sc.uav_altitude, sc.ts_position);
    const CVecX a = steering_vector(sc.Nt, o_u, sc.uav_altitude, sc.ts_position);
    const double energy = std::real(a.dot(covariances[u] * a));  // a^H R a
    acc += energy / (ru * ru);
  }
  return sc.beta0 / (r0 * r0 * sc.noise_power) * acc;
}

double sensing_snr(const Scenario& sc, const Association& assoc, const BeamformingState& state) {
  return sensing_snr(sc, state.uav_positions, transmit_covariances(sc, assoc, state));
}

double sensing_snr_monte_carlo(const Scenario& sc, const Association& assoc,
                               const BeamformingState& state, int block_len, int draws,
                               std::uint64_t seed) {
  if (block_len < 1 || draws < 1)
    throw std::invalid_argument("sensing_snr_monte_carlo: block_len and draws must be >= 1");
  std::mt19937_64 rng(mix_seed(seed, 0x5EBB));
  std::normal_distribution<double> g(0.0, std::sqrt(0.5));
  std::uniform_real_distribution<double> uph(0.0, 2.0 * M_PI);

  const double r0 = distance3d(sc.rx_uav_position, sc.rx_altitude, sc.ts_position);
  std::vector<CVecX> a_tx(sc.U);
  std::vector<double> beta_mag(sc.U);
  for (int u = 0; u < sc.U; ++u) {
    const Vec2 o_u = state.uav_positions.row(u);
    a_tx[u] = steering_vector(sc.Nt, o_u, sc.uav_altitude, sc.ts_position);
    const double ru = distance3d(o_u, sc.uav_altitude, sc.ts_position);
    beta_mag[u] = std::sqrt(sc.beta0) / (ru * r0);
  }
  const CVecX b_rx =
      steering_vector(sc.Nr, sc.rx_uav_position, sc.rx_altitude, sc.ts_position);

  // Effective scalar gains per stream: a^H p.
  std::vector<cplx> g_common(sc.U, cplx(0, 0)), g_sens(sc.U, cplx(0, 0));
  std::vector<cplx> g_priv(sc.K, cplx(0, 0));
  for (int u = 0; u < sc.U; ++u) {
    if (nonzero(state.common[u])) g_common[u] = a_tx[u].dot(state.common[u]);
    if (nonzero(state.sensing[u])) g_sens[u] = a_tx[u].dot(state.sensing[u]);
  }
  for (int k = 0; k < sc.K; ++k)
    if (nonzero(state.private_beams[k]))
      g_priv[k] = a_tx[assoc.cs_to_uav[k]].dot(state.private_beams[k]);

  const double b_energy = b_rx.squaredNorm();  // ||b||^2 = Nr
  double sig_acc = 0.0, noise_acc = 0.0;
  const double noise_sigma = std::sqrt(sc.noise_power);
  for (int d = 0; d < draws; ++d) {
    std::vector<cplx> phase(sc.U);
    for (int u = 0; u < sc.U; ++u) {
      const double ph = uph(rng);
      phase[u] = cplx(std::cos(ph), std::sin(ph));
    }
    for (int l = 0; l < block_len; ++l) {
      const cplx s_common(g(rng), g(rng));  // shared by every UAV
      cplx y(0.0, 0.0);                     // received signal along b / ||b||
      for (int u = 0; u < sc.U; ++u) {
        cplx x = g_common[u] * s_common;
        x += g_sens[u] * cplx(g(rng), g(rng));
        for (int k : assoc.clusters[u]) x += g_priv[k] * cplx(g(rng), g(rng));
        y += beta_mag[u] * phase[u] * x;
      }
      // ||b y||^2 = ||b||^2 |y|^2; noise energy drawn across all Nr antennas.
      sig_acc += b_energy * std::norm(y);
      for (int n = 0; n < sc.Nr; ++n)
        noise_acc += std::norm(cplx(noise_sigma * g(rng), noise_sigma * g(rng)));
    }
  }
  return sig_acc / noise_acc;
}

RateReport evaluate_rates(const Scenario& sc, const Association& assoc, const Channels& ch,
                          const BeamformingState& state, const RateOptions& opts) {
  RateReport rep;
  rep.common_sinr = VecX::Zero(sc.K);
  rep.private_sinr = VecX::Zero(sc.K);
  rep.common_rate = VecX::Zero(sc.K);
  rep.private_rate = VecX::Zero(sc.K);
  rep.total_rate = VecX::Zero(sc.K);
  for (int k = 0; k < sc.K; ++k) {
    rep.common_sinr[k] = common_sinr(sc, assoc, ch, state, k, opts);
    rep.private_sinr[k] = private_sinr(sc, assoc, ch, state, k, opts);
    rep.common_rate[k] = log2_rate(sc.bandwidth, rep.common_sinr[k]);
    rep.private_rate[k] = log2_rate(sc.bandwidth, rep.private_sinr[k]);
  }
  rep.common_rate_min = rep.common_rate.minCoeff();
  const double alloc_sum = state.common_alloc.sum();
  rep.common_alloc_feasible = alloc_sum <= rep.common_rate_min * (1.0 + 1e-9) + 1e-9;
  rep.total_rate = state.common_alloc + rep.private_rate;
  rep.wsr = sc.weights.dot(rep.total_rate);
  rep.sensing_snr = sensing_snr(sc, assoc, state);
  return rep;
}

}  // namespace corsma
