#include "corsma/scenario.hpp"

#include <json.hpp>

#include <random>
#include <sstream>
#include <stdexcept>

namespace corsma {

void Scenario::apply_defaults() {
  if (rate_thresholds.size() == 0) rate_thresholds = VecX::Constant(K, 1e6);
  if (weights.size() == 0) weights = VecX::Constant(K, 1.0 / K);
}

void Scenario::validate() const {
  if (U < 1) throw std::invalid_argument("scenario: U must be >= 1");
  if (K < 1) throw std::invalid_argument("scenario: K must be >= 1");
  if (Nt < 1 || Nr < 1) throw std::invalid_argument("scenario: antenna counts must be >= 1");
  if (cs_positions.rows() != K || cs_positions.cols() != 2)
    throw std::invalid_argument("scenario: cs_positions must be K x 2");
  if (uav_altitude <= 0.0 || rx_altitude <= 0.0)
    throw std::invalid_argument("scenario: altitudes must be positive");
  if (eps0 <= 0.0 || beta0 <= 0.0) throw std::invalid_argument("scenario: gains must be positive");
  if (noise_power <= 0.0) throw std::invalid_argument("scenario: noise_power must be positive");
  if (bandwidth <= 0.0) throw std::invalid_argument("scenario: bandwidth must be positive");
  if (p_max <= 0.0) throw std::invalid_argument("scenario: p_max must be positive");
  if (rate_thresholds.size() != K)
    throw std::invalid_argument("scenario: rate_thresholds must have K entries");
  if (rate_thresholds.minCoeff() < 0.0)
    throw std::invalid_argument("scenario: rate_thresholds must be nonnegative");
  if (sensing_threshold < 0.0)
    throw std::invalid_argument("scenario: sensing_threshold must be nonnegative");
  if (weights.size() != K) throw std::invalid_argument("scenario: weights must have K entries");
  if (weights.minCoeff() < 0.0) throw std::invalid_argument("scenario: weights must be nonnegative");
  if (cs_area[2] <= cs_area[0] || cs_area[3] <= cs_area[1])
    throw std::invalid_argument("scenario: cs_area must have positive extent");
}

Scenario make_default_scenario(int U, int K) {
  Scenario sc;
  sc.U = U;
  sc.K = K;
  sc.cs_positions = MatX::Zero(K, 2);
  sc.apply_defaults();
  return sc;
}

void randomize_cs_positions(Scenario& sc, std::uint64_t seed) {
  std::mt19937_64 rng(mix_seed(seed, 0xC5));
  std::uniform_real_distribution<double> ux(sc.cs_area[0], sc.cs_area[2]);
  std::uniform_real_distribution<double> uy(sc.cs_area[1], sc.cs_area[3]);
  sc.cs_positions = MatX::Zero(sc.K, 2);
  for (int k = 0; k < sc.K; ++k) {
    sc.cs_positions(k, 0) = ux(rng);
    sc.cs_positions(k, 1) = uy(rng);
  }
}

namespace {

using nlohmann::json;

json scenario_json(const Scenario& sc) {
  json j;
  j["U"] = sc.U;
  j["K"] = sc.K;
  j["Nt"] = sc.Nt;
  j["Nr"] = sc.Nr;
  std::vector<std::vector<double>> cs;
  for (int k = 0; k < sc.cs_positions.rows(); ++k)
    cs.push_back({sc.cs_positions(k, 0), sc.cs_positions(k, 1)});
  j["cs_positions"] = cs;
  j["ts_position"] = {sc.ts_position[0], sc.ts_position[1]};
  j["rx_uav_position"] = {sc.rx_uav_position[0], sc.rx_uav_position[1]};
  j["uav_altitude"] = sc.uav_altitude;
  j["rx_altitude"] = sc.rx_altitude;
  j["cs_area"] = {sc.cs_area[0], sc.cs_area[1], sc.cs_area[2], sc.cs_area[3]};
  j["eps0"] = sc.eps0;
  j["beta0"] = sc.beta0;
  j["noise_power"] = sc.noise_power;
  j["bandwidth"] = sc.bandwidth;
  j["p_max"] = sc.p_max;
  j["rate_thresholds"] = std::vector<double>(sc.rate_thresholds.data(),
                                             sc.rate_thresholds.data() + sc.rate_thresholds.size());
  j["sensing_threshold"] = sc.sensing_threshold;
  j["weights"] = std::vector<double>(sc.weights.data(), sc.weights.data() + sc.weights.size());
  return j;
}

}  // namespace

std::string scenario_to_json(const Scenario& sc) { return scenario_json(sc).dump(2); }

Scenario scenario_from_json(const std::string& text) {
  json j = json::parse(text);
  Scenario sc;
  sc.U = j.value("U", sc.U);
  sc.K = j.value("K", sc.K);
  sc.Nt = j.value("Nt", sc.Nt);
  sc.Nr = j.value("Nr", sc.Nr);
  if (j.contains("ts_position")) {
    sc.ts_position[0] = j["ts_position"][0];
    sc.ts_position[1] = j["ts_position"][1];
  }
  // The receive UAV sits over the target unless placed explicitly.
  sc.rx_uav_position = sc.ts_position;
  if (j.contains("rx_uav_position")) {
    sc.rx_uav_position[0] = j["rx_uav_position"][0];
    sc.rx_uav_position[1] = j["rx_uav_position"][1];
  }
  sc.uav_altitude = j.value("uav_altitude", sc.uav_altitude);
  sc.rx_altitude = j.value("rx_altitude", sc.rx_altitude);
  if (j.contains("cs_area"))
    for (int i = 0; i < 4; ++i) sc.cs_area[i] = j["cs_area"][i];

  // Power-like keys accept linear values or an explicit _db/_dbm suffix.
  if (j.contains("eps0_db")) sc.eps0 = db_to_linear(j["eps0_db"].get<double>());
  else sc.eps0 = j.value("eps0", sc.eps0);
  if (j.contains("beta0_db")) sc.beta0 = db_to_linear(j["beta0_db"].get<double>());
  else sc.beta0 = j.value("beta0", sc.beta0);
  if (j.contains("noise_power_dbm")) sc.noise_power = dbm_to_watts(j["noise_power_dbm"].get<double>());
  else sc.noise_power = j.value("noise_power", sc.noise_power);
  if (j.contains("p_max_dbm")) sc.p_max = dbm_to_watts(j["p_max_dbm"].get<double>());
  else sc.p_max = j.value("p_max", sc.p_max);

  sc.bandwidth = j.value("bandwidth", sc.bandwidth);
  sc.sensing_threshold = j.value("sensing_threshold", sc.sensing_threshold);
  if (j.contains("sensing_threshold_db"))
    sc.sensing_threshold = db_to_linear(j["sensing_threshold_db"].get<double>());

  if (j.contains("rate_thresholds")) {
    auto v = j["rate_thresholds"].get<std::vector<double>>();
    sc.rate_thresholds = Eigen::Map<VecX>(v.data(), v.size());
  } else if (j.contains("rate_threshold")) {
    sc.rate_thresholds = VecX::Constant(sc.K, j["rate_threshold"].get<double>());
  }
  if (j.contains("weights")) {
    auto v = j["weights"].get<std::vector<double>>();
    sc.weights = Eigen::Map<VecX>(v.data(), v.size());
  }

  if (j.contains("cs_positions")) {
    auto cs = j["cs_positions"].get<std::vector<std::vector<double>>>();
    sc.cs_positions = MatX::Zero(static_cast<int>(cs.size()), 2);
    for (size_t k = 0; k < cs.size(); ++k) {
      sc.cs_positions(static_cast<int>(k), 0) = cs[k][0];
      sc.cs_positions(static_cast<int>(k), 1) = cs[k][1];
    }
  } else {
    sc.cs_positions = MatX::Zero(sc.K, 2);  // caller draws them per seed
  }
  sc.apply_defaults();
  return sc;
}

std::uint64_t scenario_hash(const Scenario& sc) {
  std::ostringstream os;
  os.precision(17);
  os << sc.U << '|' << sc.K << '|' << sc.Nt << '|' << sc.Nr << '|';
  for (int k = 0; k < sc.cs_positions.rows(); ++k)
    os << sc.cs_positions(k, 0) << ',' << sc.cs_positions(k, 1) << ';';
  os << sc.ts_position[0] << ',' << sc.ts_position[1] << '|' << sc.rx_uav_position[0] << ','
     << sc.rx_uav_position[1] << '|' << sc.uav_altitude << '|' << sc.rx_altitude << '|' << sc.eps0
     << '|' << sc.beta0 << '|' << sc.noise_power << '|' << sc.bandwidth << '|' << sc.p_max << '|';
  for (int k = 0; k < sc.rate_thresholds.size(); ++k) os << sc.rate_thresholds[k] << ';';
  os << sc.sensing_threshold << '|';
  for (int k = 0; k < sc.weights.size(); ++k) os << sc.weights[k] << ';';
  const std::string s = os.str();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace corsma
