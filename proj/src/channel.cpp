#include "corsma/channel.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace corsma {

double distance3d(const Vec2& a, double alt, const Vec2& b) {
  return std::sqrt((a - b).squaredNorm() + alt * alt);
}

CVecX steering_vector(int n_antennas, const Vec2& pos, double alt, const Vec2& target) {
  const double r = distance3d(pos, alt, target);
  const double cos_theta = alt / r;
  CVecX a(n_antennas);
  for (int n = 0; n < n_antennas; ++n) {
    const double phase = M_PI * n * cos_theta;
    a[n] = cplx(std::cos(phase), std::sin(phase));
  }
  return a;
}

CVecX comm_channel(const Scenario& sc, int u, int k, const MatX& uav_positions,
                   ChannelMode mode, std::uint64_t seed) {
  if (u < 0 || u >= sc.U) throw std::invalid_argument("comm_channel: UAV index out of range");
  if (k < 0 || k >= sc.K) throw std::invalid_argument("comm_channel: CS index out of range");
  if (uav_positions.rows() != sc.U || uav_positions.cols() != 2)
    throw std::invalid_argument("comm_channel: uav_positions must be U x 2");

  const Vec2 o_u = uav_positions.row(u);
  const Vec2 q_k = sc.cs_positions.row(k);
  const double r = distance3d(o_u, sc.uav_altitude, q_k);
  const double amp = std::sqrt(sc.eps0) / r;

  CVecX h(sc.Nt);
  switch (mode) {
    case ChannelMode::LOS_ONES:
      h.setOnes();
      break;
    case ChannelMode::LOS_STEERING:
      h = steering_vector(sc.Nt, o_u, sc.uav_altitude, q_k);
      break;
    case ChannelMode::RAYLEIGH: {
      std::mt19937_64 rng(mix_seed(seed, 0x9A00 + static_cast<std::uint64_t>(u) * 4096 + k));
      std::normal_distribution<double> g(0.0, std::sqrt(0.5));
      for (int n = 0; n < sc.Nt; ++n) h[n] = cplx(g(rng), g(rng));
      break;
    }
  }
  return amp * h;
}

Channels all_channels(const Scenario& sc, const MatX& uav_positions, ChannelMode mode,
                      std::uint64_t seed) {
  Channels ch(sc.U, CMatX(sc.Nt, sc.K));
  for (int u = 0; u < sc.U; ++u)
    for (int k = 0; k < sc.K; ++k) ch[u].col(k) = comm_channel(sc, u, k, uav_positions, mode, seed);
  return ch;
}

double sensing_gain(const Scenario& sc, const Vec2& uav_pos) {
  const double r_u = distance3d(uav_pos, sc.uav_altitude, sc.ts_position);
  const double r_0 = distance3d(sc.rx_uav_position, sc.rx_altitude, sc.ts_position);
  return std::sqrt(sc.beta0 / (r_u * r_u * r_0 * r_0));
}

}  // namespace corsma
