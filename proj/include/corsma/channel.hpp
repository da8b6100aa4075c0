#pragma once

#include <cstdint>

#include "corsma/scenario.hpp"
#include "corsma/types.hpp"

namespace corsma {

// Small-scale model for the UAV-to-CS links. LOS_ONES keeps every entry at
// unit value, LOS_STEERING uses transmit steering phases toward the CS,
// RAYLEIGH draws CN(0,1) entries from the seed.
enum class ChannelMode { LOS_ONES, LOS_STEERING, RAYLEIGH };

// Slant range sqrt(||a - b||^2 + alt^2) between a point at altitude alt above
// `a` and a ground point `b`.
double distance3d(const Vec2& a, double alt, const Vec2& b);

// Half-wavelength ULA steering vector with elevation cosine alt / range.
CVecX steering_vector(int n_antennas, const Vec2& pos, double alt, const Vec2& target);

// h_{u,k} = sqrt(eps0 / r^2) * h_tilde.
CVecX comm_channel(const Scenario& sc, int u, int k, const MatX& uav_positions,
                   ChannelMode mode, std::uint64_t seed);

// All UAV-to-CS channels; channels[u].col(k) = h_{u,k}.
Channels all_channels(const Scenario& sc, const MatX& uav_positions, ChannelMode mode,
                      std::uint64_t seed);

// Round-trip reflection amplitude sqrt(beta0 / (r^2(o_u, q_0) r^2(o_0, q_0))).
double sensing_gain(const Scenario& sc, const Vec2& uav_pos);

}  // namespace corsma
