#pragma once

#include <string>

#include "twozone/commands.hpp"
#include "twozone/scenario_io.hpp"

namespace fixtures {

inline std::string scenario_path(const std::string& name) { return std::string(TWOZONE_SCENARIO_DIR) + "/" + name; }

inline twozone::ScenarioSpec load(const std::string& name = "base.json") {
  return twozone::load_scenario(scenario_path(name));
}

/// Scenario with a symmetric transfer capacity given in MW.
inline twozone::ScenarioSpec with_capacity(twozone::ScenarioSpec s, double mw) {
  s.coupling.flow_min = -mw;
  s.coupling.flow_max = mw;
  return s;
}

inline twozone::ScenarioSpec zero_vol(twozone::ScenarioSpec s) {
  for (auto& f : s.fuels) f.volatility = 0.0;
  s.market_a.demand_volatility = 0.0;
  s.market_b.demand_volatility = 0.0;
  return s;
}

}  // namespace fixtures
