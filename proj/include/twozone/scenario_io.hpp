#pragma once

// JSON scenario files. Input may use GW and per-GW slopes; everything is
// normalized to MW on load and written back in MW.

#include <json.hpp>

#include <string>
#include <string_view>

#include "twozone/model.hpp"

namespace twozone {

/// Throws ParseError for malformed input and ValidationError (with the
/// dotted field path) for invariant violations.
ScenarioSpec scenario_from_json(const nlohmann::json& doc);
ScenarioSpec parse_scenario(std::string_view text);
ScenarioSpec load_scenario(const std::string& path);

/// Canonical form: MW, per-MW slopes, explicit volatilities.
nlohmann::json scenario_to_json(const ScenarioSpec& scenario);
std::string dump_scenario(const ScenarioSpec& scenario);
void save_scenario(const ScenarioSpec& scenario, const std::string& path);

nlohmann::json read_json_file(const std::string& path);

void validate_scenario(const ScenarioSpec& scenario);

/// OU volatility giving a terminal standard deviation `sd` after `tau` years.
double volatility_from_terminal_sd(double sd, double mean_reversion, double tau);

}  // namespace twozone
