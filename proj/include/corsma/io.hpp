#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "corsma/pipeline.hpp"

namespace corsma::io {

nlohmann::json solution_to_json(const Solution& sol);
void write_solution(const std::string& path, const Solution& sol);

// Numbers formatted with 9 significant digits.
std::string format_sig(double v, int digits = 9);
void write_csv(const std::string& path, const std::vector<std::string>& columns,
               const std::vector<std::vector<std::string>>& rows);

// Append-only run manifest (one JSON object per line).
void append_manifest(const std::string& dir, const nlohmann::json& entry);

}  // namespace corsma::io
