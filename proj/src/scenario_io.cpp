#include "twozone/scenario_io.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "twozone/errors.hpp"

namespace twozone {

using nlohmann::json;

namespace {

struct Units {
  double power = 1.0;  // MW per input unit
  double beta = 1.0;   // input beta per MW beta
};

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

const json& require(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) throw ParseError(path + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(join(path, key) + ": missing field");
  return *it;
}

double number(const json& v, const std::string& path) {
  if (!v.is_number()) throw ParseError(path + ": expected a number");
  return v.get<double>();
}

double number_at(const json& obj, const std::string& key, const std::string& path) {
  return number(require(obj, key, path), join(path, key));
}

double number_or(const json& obj, const std::string& key, const std::string& path, double fallback) {
  auto it = obj.find(key);
  return it == obj.end() ? fallback : number(*it, join(path, key));
}

bool has(const json& obj, const std::string& key) { return obj.find(key) != obj.end(); }

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& path) {
  if (!obj.is_object()) throw ParseError((path.empty() ? "scenario" : path) + ": expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key())) throw ParseError(join(path, it.key()) + ": unknown field");
}

Units parse_units(const json& doc) {
  Units u;
  if (!has(doc, "units")) return u;
  const auto& units = doc.at("units");
  check_keys(units, {"power", "beta"}, "units");
  std::string power = "MW";
  if (has(units, "power")) {
    if (!units.at("power").is_string()) throw ParseError("units.power: expected a string");
    power = units.at("power").get<std::string>();
  }
  if (power == "GW")
    u.power = 1000.0;
  else if (power != "MW")
    throw ParseError("units.power: expected \"GW\" or \"MW\"");
  u.beta = u.power;
  if (has(units, "beta")) {
    if (!units.at("beta").is_string()) throw ParseError("units.beta: expected a string");
    const auto beta = units.at("beta").get<std::string>();
    if (beta == "per_GW")
      u.beta = 1000.0;
    else if (beta == "per_MW")
      u.beta = 1.0;
    else
      throw ParseError("units.beta: expected \"per_GW\" or \"per_MW\"");
  }
  return u;
}

double tau_of(const ScenarioSpec& s) { return s.maturity - s.valuation_time; }

// `parent` holds the mean_reversion field next to the terminal moment.
double terminal_to_vol(double sd, double a, double tau, const std::string& path, const std::string& parent) {
  if (sd < 0.0) throw ValidationError(path, "terminal standard deviation must be nonnegative");
  if (sd == 0.0) return 0.0;
  if (!(a > 0.0)) throw ValidationError(join(parent, "mean_reversion"), "must be positive");
  if (!(tau > 0.0)) throw ValidationError("maturity", "terminal moments need maturity after valuation_time");
  return volatility_from_terminal_sd(sd, a, tau);
}

FuelSpec parse_fuel(const json& f, const std::string& path, double tau) {
  check_keys(f, {"name", "initial_cost", "initial_log_cost", "mean_reversion", "long_run_log_mean", "volatility",
                 "terminal_log_sd"},
             path);
  FuelSpec fuel;
  const auto& name = require(f, "name", path);
  if (!name.is_string()) throw ParseError(join(path, "name") + ": expected a string");
  fuel.name = name.get<std::string>();
  if (has(f, "initial_cost") == has(f, "initial_log_cost"))
    throw ParseError(path + ": give exactly one of initial_cost, initial_log_cost");
  if (has(f, "initial_cost")) {
    const double c = number_at(f, "initial_cost", path);
    if (!(c > 0.0)) throw ValidationError(join(path, "initial_cost"), "must be positive");
    fuel.initial_log_cost = std::log(c);
  } else {
    fuel.initial_log_cost = number_at(f, "initial_log_cost", path);
  }
  fuel.mean_reversion = number_or(f, "mean_reversion", path, 1.0);
  fuel.long_run_log_mean = number_or(f, "long_run_log_mean", path, fuel.initial_log_cost);
  if (has(f, "volatility") && has(f, "terminal_log_sd"))
    throw ParseError(path + ": give at most one of volatility, terminal_log_sd");
  if (has(f, "terminal_log_sd"))
    fuel.volatility = terminal_to_vol(number_at(f, "terminal_log_sd", path), fuel.mean_reversion, tau,
                                      join(path, "terminal_log_sd"), path);
  else
    fuel.volatility = number_or(f, "volatility", path, 0.0);
  return fuel;
}

int resolve_fuel(const json& v, const std::map<std::string, int>& names, int n, const std::string& path) {
  if (v.is_string()) {
    auto it = names.find(v.get<std::string>());
    if (it == names.end()) throw ValidationError(path, "unknown fuel \"" + v.get<std::string>() + "\"");
    return it->second;
  }
  if (v.is_number_integer()) {
    const int id = v.get<int>();
    if (id < 0 || id >= n) throw ValidationError(path, "fuel index out of range");
    return id;
  }
  throw ParseError(path + ": expected a fuel name or index");
}

MarketSpec parse_market(const json& m, const std::string& path, const Units& u,
                        const std::map<std::string, int>& names, int n_fuels, double tau) {
  check_keys(m, {"alpha", "beta", "demand", "technologies"}, path);
  MarketSpec market;
  market.alpha = number_at(m, "alpha", path);
  market.beta = number_at(m, "beta", path) / u.beta;

  const auto dpath = join(path, "demand");
  const auto& d = require(m, "demand", path);
  check_keys(d, {"const", "cos", "sin", "mean_reversion", "volatility", "terminal_variance", "terminal_sd",
                 "initial_deviation"},
             dpath);
  market.demand_const = number_or(d, "const", dpath, 0.0) * u.power;
  market.demand_cos = number_or(d, "cos", dpath, 0.0) * u.power;
  market.demand_sin = number_or(d, "sin", dpath, 0.0) * u.power;
  market.demand_mean_reversion = number_or(d, "mean_reversion", dpath, 1.0);
  market.initial_demand_deviation = number_or(d, "initial_deviation", dpath, 0.0) * u.power;
  const int given = has(d, "volatility") + has(d, "terminal_variance") + has(d, "terminal_sd");
  if (given > 1) throw ParseError(dpath + ": give at most one of volatility, terminal_variance, terminal_sd");
  if (has(d, "terminal_variance")) {
    const double var = number_at(d, "terminal_variance", dpath);
    if (var < 0.0) throw ValidationError(join(dpath, "terminal_variance"), "must be nonnegative");
    market.demand_volatility = terminal_to_vol(std::sqrt(var) * u.power, market.demand_mean_reversion, tau,
                                               join(dpath, "terminal_variance"), dpath);
  } else if (has(d, "terminal_sd")) {
    market.demand_volatility = terminal_to_vol(number_at(d, "terminal_sd", dpath) * u.power,
                                               market.demand_mean_reversion, tau, join(dpath, "terminal_sd"), dpath);
  } else {
    market.demand_volatility = number_or(d, "volatility", dpath, 0.0) * u.power;
  }

  const auto tpath = join(path, "technologies");
  const auto& techs = require(m, "technologies", path);
  if (!techs.is_array()) throw ParseError(tpath + ": expected an array");
  for (std::size_t i = 0; i < techs.size(); ++i) {
    const auto ip = tpath + "[" + std::to_string(i) + "]";
    check_keys(techs[i], {"fuel", "capacity", "capacity_cos", "capacity_sin"}, ip);
    TechnologySpec tech;
    tech.fuel_id = resolve_fuel(require(techs[i], "fuel", ip), names, n_fuels, join(ip, "fuel"));
    tech.capacity_const = number_or(techs[i], "capacity", ip, 0.0) * u.power;
    tech.capacity_cos = number_or(techs[i], "capacity_cos", ip, 0.0) * u.power;
    tech.capacity_sin = number_or(techs[i], "capacity_sin", ip, 0.0) * u.power;
    market.technologies.push_back(tech);
  }
  return market;
}

void parse_numerics(const json& doc, Numerics& n) {
  if (!has(doc, "numerics")) return;
  const auto& x = doc.at("numerics");
  check_keys(x, {"quadrature_tolerance", "quadrature_shifts", "quadrature_max_points", "mc_samples", "flow_grid_step",
                 "max_fuels"},
             "numerics");
  auto integer = [&](const char* key, auto& target) {
    if (!has(x, key)) return;
    const auto& v = x.at(key);
    if (!v.is_number_integer()) throw ParseError(std::string("numerics.") + key + ": expected an integer");
    target = v.get<std::remove_reference_t<decltype(target)>>();
  };
  n.quadrature_tolerance = number_or(x, "quadrature_tolerance", "numerics", n.quadrature_tolerance);
  integer("quadrature_shifts", n.quadrature_shifts);
  integer("quadrature_max_points", n.quadrature_max_points);
  integer("mc_samples", n.mc_samples);
  n.flow_grid_step = number_or(x, "flow_grid_step", "numerics", n.flow_grid_step);
  integer("max_fuels", n.max_fuels);
}

void check_market(const MarketSpec& m, const std::string& path, const ScenarioSpec& s) {
  if (m.technologies.empty()) throw ValidationError(join(path, "technologies"), "need at least one technology");
  if (!std::isfinite(m.alpha)) throw ValidationError(join(path, "alpha"), "must be finite");
  if (!(m.beta <= 0.0)) throw ValidationError(join(path, "beta"), "must be nonpositive");
  if (!(m.demand_mean_reversion > 0.0))
    throw ValidationError(join(path, "demand.mean_reversion"), "must be positive");
  if (!(m.demand_volatility >= 0.0)) throw ValidationError(join(path, "demand.volatility"), "must be nonnegative");
  for (std::size_t i = 0; i < m.technologies.size(); ++i) {
    const int id = m.technologies[i].fuel_id;
    if (id < 0 || id >= s.fuel_count())
      throw ValidationError(join(path, "technologies[" + std::to_string(i) + "].fuel"), "fuel index out of range");
  }
  // Capacities are periodic with period one year; sample one full cycle.
  constexpr int kGrid = 1024;
  for (int j = 0; j < kGrid; ++j) {
    const double t = static_cast<double>(j) / kGrid;
    double total = 0.0;
    for (int k = 0; k < m.size(); ++k) {
      const double c = capacity_at(m, k, t);
      if (c < -1e-9 * std::max(1.0, std::abs(m.technologies[k].capacity_const)))
        throw ValidationError(join(path, "technologies[" + std::to_string(k) + "].capacity"),
                              "capacity becomes negative at t = " + std::to_string(t));
      total += c;
    }
    if (!(total > 0.0)) throw ValidationError(join(path, "technologies"), "total capacity must stay positive");
  }
}

}  // namespace

double volatility_from_terminal_sd(double sd, double mean_reversion, double tau) {
  return sd * std::sqrt(2.0 * mean_reversion / -std::expm1(-2.0 * mean_reversion * tau));
}

void validate_scenario(const ScenarioSpec& s) {
  const int n = s.fuel_count();
  if (n < 1) throw ValidationError("fuels", "need at least one fuel");
  if (n > s.numerics.max_fuels)
    throw ValidationError("fuels", std::to_string(n) + " fuels exceed numerics.max_fuels = " +
                                       std::to_string(s.numerics.max_fuels));
  std::set<std::string> names;
  for (int i = 0; i < n; ++i) {
    const auto p = "fuels[" + std::to_string(i) + "]";
    const auto& f = s.fuels[i];
    if (!names.insert(f.name).second) throw ValidationError(join(p, "name"), "duplicate fuel name");
    if (!std::isfinite(f.initial_log_cost)) throw ValidationError(join(p, "initial_log_cost"), "must be finite");
    if (!(f.mean_reversion > 0.0)) throw ValidationError(join(p, "mean_reversion"), "must be positive");
    if (!(f.volatility >= 0.0)) throw ValidationError(join(p, "volatility"), "must be nonnegative");
    if (!std::isfinite(f.long_run_log_mean)) throw ValidationError(join(p, "long_run_log_mean"), "must be finite");
  }
  check_market(s.market_a, "markets.A", s);
  check_market(s.market_b, "markets.B", s);
  if (s.market_a.beta == 0.0 && s.market_b.beta == 0.0)
    throw ValidationError("markets.A.beta", "beta is zero in both markets");
  if (n > s.market_a.size() + s.market_b.size())
    throw ValidationError("fuels", "more fuels than technologies in both markets");
  if (!(s.coupling.flow_min <= 0.0)) throw ValidationError("coupling.flow_min", "must be <= 0");
  if (!(s.coupling.flow_max >= 0.0)) throw ValidationError("coupling.flow_max", "must be >= 0");
  if (!std::isfinite(s.coupling.flow_min) || !std::isfinite(s.coupling.flow_max))
    throw ValidationError("coupling", "bounds must be finite");
  if (!(s.maturity >= s.valuation_time)) throw ValidationError("maturity", "must be >= valuation_time");

  const auto& c = s.correlation;
  const int m = s.state_dim();
  if (c.rows() != m || c.cols() != m)
    throw ValidationError("correlation", "must be " + std::to_string(m) + "x" + std::to_string(m));
  for (int i = 0; i < m; ++i) {
    if (c(i, i) != 1.0) throw ValidationError("correlation", "diagonal must be 1");
    for (int j = 0; j < m; ++j) {
      if (!std::isfinite(c(i, j)) || std::abs(c(i, j)) > 1.0)
        throw ValidationError("correlation", "entries must lie in [-1, 1]");
      if (std::abs(c(i, j) - c(j, i)) > 1e-12) throw ValidationError("correlation", "matrix is not symmetric");
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(c, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-10 * m)
    throw ValidationError("correlation", "matrix is not positive semidefinite");

  const auto& x = s.numerics;
  if (!(x.quadrature_tolerance > 0.0)) throw ValidationError("numerics.quadrature_tolerance", "must be positive");
  if (x.quadrature_shifts < 2) throw ValidationError("numerics.quadrature_shifts", "must be at least 2");
  if (x.quadrature_max_points < 1) throw ValidationError("numerics.quadrature_max_points", "must be positive");
  if (x.mc_samples < 1) throw ValidationError("numerics.mc_samples", "must be positive");
  if (!(x.flow_grid_step > 0.0)) throw ValidationError("numerics.flow_grid_step", "must be positive");
  if (x.max_fuels < 1) throw ValidationError("numerics.max_fuels", "must be positive");
}

ScenarioSpec scenario_from_json(const json& doc) {
  check_keys(doc, {"units", "valuation_time", "maturity", "seed", "fuels", "markets", "coupling", "correlation",
                   "numerics", "description"},
             "");
  const Units u = parse_units(doc);
  ScenarioSpec s;
  s.valuation_time = number_or(doc, "valuation_time", "", 0.0);
  s.maturity = number_or(doc, "maturity", "", 1.0);
  if (has(doc, "seed")) {
    const auto& v = doc.at("seed");
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
      throw ParseError("seed: expected a nonnegative integer");
    s.seed = v.get<std::uint64_t>();
  }
  parse_numerics(doc, s.numerics);
  if (!(s.maturity >= s.valuation_time)) throw ValidationError("maturity", "must be >= valuation_time");
  const double tau = tau_of(s);

  const auto& fuels = require(doc, "fuels", "");
  if (!fuels.is_array()) throw ParseError("fuels: expected an array");
  std::map<std::string, int> names;
  for (std::size_t i = 0; i < fuels.size(); ++i) {
    s.fuels.push_back(parse_fuel(fuels[i], "fuels[" + std::to_string(i) + "]", tau));
    if (!names.emplace(s.fuels.back().name, static_cast<int>(i)).second)
      throw ValidationError("fuels[" + std::to_string(i) + "].name", "duplicate fuel name");
  }
  const auto& markets = require(doc, "markets", "");
  check_keys(markets, {"A", "B"}, "markets");
  s.market_a = parse_market(require(markets, "A", "markets"), "markets.A", u, names, s.fuel_count(), tau);
  s.market_b = parse_market(require(markets, "B", "markets"), "markets.B", u, names, s.fuel_count(), tau);

  const auto& coupling = require(doc, "coupling", "");
  check_keys(coupling, {"flow_min", "flow_max"}, "coupling");
  s.coupling.flow_max = number_at(coupling, "flow_max", "coupling") * u.power;
  s.coupling.flow_min = number_or(coupling, "flow_min", "coupling", -s.coupling.flow_max / u.power) * u.power;

  const int m = s.state_dim();
  s.correlation = Eigen::MatrixXd::Identity(m, m);
  if (has(doc, "correlation")) {
    const auto& c = doc.at("correlation");
    if (!c.is_array() || static_cast<int>(c.size()) != m)
      throw ValidationError("correlation", "must be " + std::to_string(m) + "x" + std::to_string(m));
    for (int i = 0; i < m; ++i) {
      if (!c[i].is_array() || static_cast<int>(c[i].size()) != m)
        throw ValidationError("correlation", "must be " + std::to_string(m) + "x" + std::to_string(m));
      for (int j = 0; j < m; ++j)
        s.correlation(i, j) = number(c[i][j], "correlation[" + std::to_string(i) + "][" + std::to_string(j) + "]");
    }
  }
  validate_scenario(s);
  return s;
}

ScenarioSpec parse_scenario(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what());
  }
  try {
    return scenario_from_json(doc);
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed scenario: ") + e.what());
  }
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open file");
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return json::parse(buf.str());
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": invalid JSON: " + e.what());
  }
}

ScenarioSpec load_scenario(const std::string& path) {
  const auto doc = read_json_file(path);
  try {
    return scenario_from_json(doc);
  } catch (const json::exception& e) {
    throw ParseError(path + ": malformed scenario: " + e.what());
  }
}

json scenario_to_json(const ScenarioSpec& s) {
  json doc;
  doc["units"] = {{"power", "MW"}, {"beta", "per_MW"}};
  doc["valuation_time"] = s.valuation_time;
  doc["maturity"] = s.maturity;
  doc["seed"] = s.seed;
  doc["fuels"] = json::array();
  for (const auto& f : s.fuels) {
    doc["fuels"].push_back({{"name", f.name},
                            {"initial_log_cost", f.initial_log_cost},
                            {"mean_reversion", f.mean_reversion},
                            {"long_run_log_mean", f.long_run_log_mean},
                            {"volatility", f.volatility}});
  }
  for (Zone z : {Zone::A, Zone::B}) {
    const auto& m = s.market(z);
    json techs = json::array();
    for (const auto& t : m.technologies) {
      techs.push_back({{"fuel", s.fuels[t.fuel_id].name},
                       {"capacity", t.capacity_const},
                       {"capacity_cos", t.capacity_cos},
                       {"capacity_sin", t.capacity_sin}});
    }
    doc["markets"][zone_name(z)] = {{"alpha", m.alpha},
                                    {"beta", m.beta},
                                    {"demand",
                                     {{"const", m.demand_const},
                                      {"cos", m.demand_cos},
                                      {"sin", m.demand_sin},
                                      {"mean_reversion", m.demand_mean_reversion},
                                      {"volatility", m.demand_volatility},
                                      {"initial_deviation", m.initial_demand_deviation}}},
                                    {"technologies", techs}};
  }
  doc["coupling"] = {{"flow_min", s.coupling.flow_min}, {"flow_max", s.coupling.flow_max}};
  json corr = json::array();
  for (int i = 0; i < s.correlation.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < s.correlation.cols(); ++j) row.push_back(s.correlation(i, j));
    corr.push_back(row);
  }
  doc["correlation"] = corr;
  doc["numerics"] = {{"quadrature_tolerance", s.numerics.quadrature_tolerance},
                     {"quadrature_shifts", s.numerics.quadrature_shifts},
                     {"quadrature_max_points", s.numerics.quadrature_max_points},
                     {"mc_samples", s.numerics.mc_samples},
                     {"flow_grid_step", s.numerics.flow_grid_step},
                     {"max_fuels", s.numerics.max_fuels}};
  return doc;
}

std::string dump_scenario(const ScenarioSpec& scenario) { return scenario_to_json(scenario).dump(2) + "\n"; }

void save_scenario(const ScenarioSpec& scenario, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << dump_scenario(scenario);
}

}  // namespace twozone
