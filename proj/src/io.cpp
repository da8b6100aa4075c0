#include "corsma/io.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace corsma::io {

namespace {

nlohmann::json vec_to_json(const VecX& v) {
  nlohmann::json a = nlohmann::json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

nlohmann::json mat_to_json(const MatX& m) {
  nlohmann::json a = nlohmann::json::array();
  for (int r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    a.push_back(row);
  }
  return a;
}

nlohmann::json cvec_to_json(const CVecX& v) {
  nlohmann::json a = nlohmann::json::array();
  for (int i = 0; i < v.size(); ++i)
    a.push_back({{"re", v[i].real()}, {"im", v[i].imag()}});
  return a;
}

}  // namespace

nlohmann::json solution_to_json(const Solution& sol) {
  nlohmann::json j;
  j["scheme"] = scheme_name(sol.scheme);
  j["seed"] = sol.seed;
  j["scenario"] = nlohmann::json::parse(scenario_to_json(sol.scenario));
  j["scenario_hash"] = sol.scenario_hash;
  j["association"] = sol.association.cs_to_uav;
  j["wcss"] = sol.association.wcss;
  j["uav_positions"] = mat_to_json(sol.state.uav_positions);
  j["common_alloc"] = vec_to_json(sol.state.common_alloc);
  j["wsr"] = sol.wsr;
  j["sensing_snr"] = sol.sensing_snr;
  j["total_rate"] = vec_to_json(sol.report.total_rate);
  j["private_rate"] = vec_to_json(sol.report.private_rate);
  j["outer_trace"] = sol.outer_trace;
  j["outer_iterations"] = sol.outer_iterations;
  j["converged"] = sol.converged;
  j["feasible"] = sol.feasible;
  j["message"] = sol.message;
  j["runtime_seconds"] = sol.runtime_seconds;
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& st : sol.stage_traces)
    stages.push_back({{"outer", st.outer}, {"stage", st.stage}, {"objective", st.objective}});
  j["stage_traces"] = stages;
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& p : sol.position_history) hist.push_back(mat_to_json(p));
  j["position_history"] = hist;
  nlohmann::json beams;
  beams["common"] = nlohmann::json::array();
  for (const auto& v : sol.state.common) beams["common"].push_back(cvec_to_json(v));
  beams["private"] = nlohmann::json::array();
  for (const auto& v : sol.state.private_beams) beams["private"].push_back(cvec_to_json(v));
  beams["sensing"] = nlohmann::json::array();
  for (const auto& v : sol.state.sensing) beams["sensing"].push_back(cvec_to_json(v));
  j["beams"] = beams;
  return j;
}

void write_solution(const std::string& path, const Solution& sol) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << solution_to_json(sol).dump(2) << "\n";
}

std::string format_sig(double v, int digits) {
  std::ostringstream ss;
  ss.precision(digits);
  ss << v;
  return ss.str();
}

void write_csv(const std::string& path, const std::vector<std::string>& columns,
               const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  for (size_t i = 0; i < columns.size(); ++i)
    out << columns[i] << (i + 1 < columns.size() ? "," : "\n");
  for (const auto& row : rows) {
    if (row.size() != columns.size())
      throw std::runtime_error("csv row width mismatch in " + path);
    for (size_t i = 0; i < row.size(); ++i)
      out << row[i] << (i + 1 < row.size() ? "," : "\n");
  }
}

void append_manifest(const std::string& dir, const nlohmann::json& entry) {
  std::filesystem::create_directories(dir);
  std::ofstream out(std::filesystem::path(dir) / "manifest.jsonl", std::ios::app);
  if (!out) throw std::runtime_error("cannot open manifest in " + dir);
  out << entry.dump() << "\n";
}

}  // namespace corsma::io
