#pragma once

#include <string>

#include "json.hpp"

#include "cslc/free_energy.hpp"
#include "cslc/score_matching.hpp"

namespace cslc {

// Binary field container: magic "CSLCFLD1", u32le n/h/w, then n*h*w
// float64le values, sample-major then row-major.
void write_field_container(const std::string& path, const FieldStack& fields);
FieldStack read_field_container(const std::string& path);

nlohmann::json model_to_json(const LearnedModel& model);
LearnedModel model_from_json(const nlohmann::json& j);
void save_model(const std::string& path, const LearnedModel& model);
LearnedModel load_model(const std::string& path);

nlohmann::json report_to_json(const LearnReport& report);
nlohmann::json solve_report_to_json(const SolveReport& report);

nlohmann::json free_energy_to_json(const FreeEnergyParams& fe);
FreeEnergyParams free_energy_from_json(const nlohmann::json& j);

void write_json(const std::string& path, const nlohmann::json& j);
nlohmann::json read_json(const std::string& path);

} // namespace cslc
