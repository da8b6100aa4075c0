#pragma once

#include <cstdint>
#include <string>

#include "corsma/types.hpp"

namespace corsma {

// Static description of one network instance: a set of communication
// stations (CS) on the ground, transmit UAVs at a common altitude, one
// receive UAV listening for echoes of a ground target (TS).
struct Scenario {
  int U = 3;   // transmit UAVs
  int K = 5;   // communication stations
  int Nt = 8;  // transmit antennas per UAV
  int Nr = 8;  // receive antennas at the receive UAV

  MatX cs_positions;  // K x 2 [m]
  Vec2 ts_position{250.0, 250.0};
  Vec2 rx_uav_position{250.0, 250.0};  // defaults to the target position
  double uav_altitude = 100.0;         // shared transmit-UAV altitude [m]
  double rx_altitude = 100.0;          // receive-UAV altitude [m]

  Eigen::Vector4d cs_area{0.0, 0.0, 500.0, 500.0};  // xmin ymin xmax ymax

  double eps0 = 1e-6;         // reference channel gain at 1 m
  double beta0 = 1e-5;        // sensing reflection gain constant
  double noise_power = 1e-14; // sigma^2 [W]
  double bandwidth = 1e6;     // B [Hz]
  double p_max = dbm_to_watts(25.0);  // per-UAV power budget [W]

  VecX rate_thresholds;        // per-CS QoS [b/s], default uniform 1e6
  double sensing_threshold = 2.0;  // required sensing SNR (linear)
  VecX weights;                // mu_k, default 1/K

  void apply_defaults();       // fill rate_thresholds/weights if empty
  void validate() const;       // throws std::invalid_argument
};

Scenario make_default_scenario(int U = 3, int K = 5);

// Draws K CS positions uniformly in cs_area.
void randomize_cs_positions(Scenario& sc, std::uint64_t seed);

// FNV-1a over a canonical text serialization; stable across runs.
std::uint64_t scenario_hash(const Scenario& sc);

std::string scenario_to_json(const Scenario& sc);
Scenario scenario_from_json(const std::string& text);

}  // namespace corsma
