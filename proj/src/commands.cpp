#include "twozone/commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "twozone/coupling.hpp"
#include "twozone/errors.hpp"
#include "twozone/scenario_io.hpp"

namespace twozone {

using nlohmann::json;

namespace {

struct Common {
  std::string scenario;
  std::optional<std::uint64_t> seed;
  std::optional<double> maturity;
  std::optional<std::string> flow_max;
  std::optional<double> tolerance;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-s,--scenario", c.scenario, "Scenario JSON file")->required();
  cmd->add_option("--seed", c.seed, "Override the scenario seed");
  cmd->add_option("--maturity", c.maturity, "Maturity T in years (defaults to the scenario's)");
  cmd->add_option("--flow-max", c.flow_max, "Symmetric transfer capacity, e.g. 4GW or 4000MW");
  cmd->add_option("--tolerance", c.tolerance, "Quadrature absolute tolerance");
}

double power_unit(const json& doc);

// Terminal moments are calibrated at the scenario's own maturity; replace them
// by the implied volatilities so a maturity override keeps the dynamics.
void freeze_volatilities(json& doc) {
  ScenarioSpec s;
  try {
    s = scenario_from_json(doc);
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed scenario: ") + e.what());
  }
  for (std::size_t i = 0; i < doc["fuels"].size(); ++i) {
    auto& f = doc["fuels"][i];
    if (f.contains("terminal_log_sd")) {
      f.erase("terminal_log_sd");
      f["volatility"] = s.fuels[i].volatility;
    }
  }
  const double unit = power_unit(doc);
  for (Zone z : {Zone::A, Zone::B}) {
    auto& d = doc["markets"][zone_name(z)]["demand"];
    if (d.contains("terminal_variance") || d.contains("terminal_sd")) {
      d.erase("terminal_variance");
      d.erase("terminal_sd");
      d["volatility"] = s.market(z).demand_volatility / unit;
    }
  }
}

json load_doc(const Common& c) {
  json doc = read_json_file(c.scenario);
  if (c.flow_max) doc = with_parameter(doc, "coupling.flow_max", parse_quantity(*c.flow_max, doc), true);
  if (c.maturity) {
    freeze_volatilities(doc);
    doc["maturity"] = *c.maturity;
  }
  if (c.seed) doc["seed"] = *c.seed;
  if (c.tolerance) doc["numerics"]["quadrature_tolerance"] = *c.tolerance;
  return doc;
}

ScenarioSpec load(const Common& c) {
  const auto doc = load_doc(c);
  try {
    return scenario_from_json(doc);
  } catch (const json::exception& e) {
    throw ParseError(c.scenario + ": malformed scenario: " + e.what());
  }
}

Zone parse_zone(const std::string& s) {
  if (s == "A" || s == "a") return Zone::A;
  if (s == "B" || s == "b") return Zone::B;
  throw std::invalid_argument("market must be A or B");
}

PtrDirection parse_direction(const std::string& s) {
  if (s == "both") return PtrDirection::Both;
  if (s == "AtoB") return PtrDirection::AtoB;
  if (s == "BtoA") return PtrDirection::BtoA;
  throw std::invalid_argument("direction must be both, AtoB or BtoA");
}

std::ostream& precise(std::ostream& out) {
  out << std::setprecision(9);
  return out;
}

StructuralPricer pricer_for(const ScenarioSpec& s) {
  return StructuralPricer(s, initial_state(s), s.valuation_time, s.maturity);
}

bool is_flow_param(const std::string& p) { return p == "coupling.flow_max" || p == "coupling.flow_min"; }

double power_unit(const json& doc) {
  auto u = doc.find("units");
  if (u != doc.end() && u->is_object()) {
    auto p = u->find("power");
    if (p != u->end() && p->is_string() && p->get<std::string>() == "GW") return 1000.0;
  }
  return 1.0;
}

struct Check {
  std::string name;
  bool pass = false;
  std::string detail;
};

std::vector<Check> validation_suite(const ScenarioSpec& s, std::int64_t n_states, std::int64_t n_mc) {
  std::vector<Check> checks;
  const double t = s.valuation_time;
  const double T = s.maturity;
  const auto state0 = initial_state(s);

  {
    auto mean = StateVector::unpack(conditional_law(state0, t, T, s).mean, T);
    const auto spot = spot_prices(mean, s, T);
    const double grid = brute_force_flow(mean, s, T, s.numerics.flow_grid_step);
    std::ostringstream d;
    precise(d) << "flow " << spot.flow << " MW, grid " << grid << " MW";
    checks.push_back({"mean_state_flow_oracle", std::abs(spot.flow - grid) <= s.numerics.flow_grid_step, d.str()});
  }
  {
    const auto batch = sample_terminal(s, state0, t, T, n_states, s.seed ^ 0x5eedULL);
    std::int64_t bad_ineq = 0, bad_flow = 0, bad_grid = 0;
    const std::int64_t n_grid = std::min<std::int64_t>(n_states, 200);
    for (std::int64_t i = 0; i < batch.size(); ++i) {
      const auto x = batch.state(i);
      const auto spot = spot_prices(x, s, T);
      if (!event_inequalities_hold(spot.key, x, s, T)) ++bad_ineq;
      if (is_coupled(spot.regime)) {
        const double g = closed_form_flow(spot.key, x, s, T);
        if (std::abs(g - spot.flow) > 1e-9 * std::max(1.0, std::abs(g))) ++bad_flow;
      }
      if (i < n_grid && std::abs(brute_force_flow(x, s, T, s.numerics.flow_grid_step) - spot.flow) >
                            s.numerics.flow_grid_step)
        ++bad_grid;
    }
    std::ostringstream d;
    d << n_states << " states: " << bad_ineq << " inequality, " << bad_flow << " closed-form, " << bad_grid
      << " grid mismatches";
    checks.push_back({"partition_soundness", bad_ineq == 0 && bad_flow == 0 && bad_grid == 0, d.str()});
  }
  auto pricer = pricer_for(s);
  {
    const auto p = pricer.event_probabilities();
    std::ostringstream d;
    precise(d) << "sum " << p.total << " over " << p.per_event.size() << " cells";
    checks.push_back({"partition_closure", std::abs(p.total - 1.0) <= 1e-3 + p.quadrature_error, d.str()});
  }
  if (n_mc > 0) {
    const auto batch = sample_terminal(s, state0, t, T, n_mc, s.seed);
    const auto spots = evaluate_spots(batch, s);
    const auto mc = mc_price({Payoff::forward(Zone::A), Payoff::forward(Zone::B), Payoff::ptr(),
                              Payoff::coupling_indicator()},
                             spots);
    const PriceDecomposition analytic[] = {pricer.forward(Zone::A), pricer.forward(Zone::B),
                                           pricer.transmission_right(), pricer.coupling_rate()};
    const char* names[] = {"forward_A", "forward_B", "ptr", "coupling_rate"};
    for (int i = 0; i < 4; ++i) {
      const double gap = std::abs(analytic[i].total - mc[i].value);
      const double support = i == 3 ? std::clamp(analytic[i].total, 0.0, 1.0) : support_probability(analytic[i]);
      const double allowed = agreement_tolerance(analytic[i], mc[i], support);
      std::ostringstream d;
      precise(d) << "analytic " << analytic[i].total << " mc " << mc[i].value << " +- " << mc[i].standard_error
                 << " gap " << gap << " allowed " << allowed;
      checks.push_back({std::string("mc_agreement_") + names[i], gap <= allowed, d.str()});
    }
  }
  return checks;
}

}  // namespace

double parse_quantity(const std::string& text, const json& doc) {
  std::string body = text;
  double scale = 1.0;
  auto ends_with = [&](const std::string& suffix) {
    return body.size() >= suffix.size() && body.compare(body.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  const double unit = power_unit(doc);
  if (ends_with("GW")) {
    scale = 1000.0 / unit;
    body.resize(body.size() - 2);
  } else if (ends_with("MW")) {
    scale = 1.0 / unit;
    body.resize(body.size() - 2);
  }
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(body, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("cannot parse quantity \"" + text + "\"");
  }
  if (used != body.size()) throw std::invalid_argument("cannot parse quantity \"" + text + "\"");
  return v * scale;
}

json with_parameter(const json& doc, const std::string& path, double value, bool symmetric) {
  json out = doc;
  json* node = &out;
  std::stringstream ss(path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  if (parts.empty()) throw std::invalid_argument("empty parameter path");
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto& p = parts[i];
    const bool last = i + 1 == parts.size();
    if (node->is_array()) {
      std::size_t idx = 0;
      try {
        idx = std::stoul(p);
      } catch (const std::exception&) {
        throw std::invalid_argument("parameter path " + path + ": expected an array index at \"" + p + "\"");
      }
      if (idx >= node->size()) throw std::invalid_argument("parameter path " + path + ": index out of range");
      node = &(*node)[idx];
    } else if (node->is_object() || node->is_null()) {
      if (!last && !node->contains(p)) throw std::invalid_argument("parameter path " + path + ": no field \"" + p + "\"");
      node = &(*node)[p];
    } else {
      throw std::invalid_argument("parameter path " + path + ": cannot descend into a value");
    }
  }
  *node = value;
  if (symmetric && path == "coupling.flow_max") out["coupling"]["flow_min"] = -value;
  return out;
}

std::vector<double> sweep_points(double from, double to, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("sweep step must be positive");
  if (!(from <= to)) throw std::invalid_argument("sweep needs from <= to");
  const auto n = static_cast<std::int64_t>(std::floor((to - from) / step + 1e-9)) + 1;
  std::vector<double> pts;
  for (std::int64_t i = 0; i < n; ++i) pts.push_back(from + static_cast<double>(i) * step);
  return pts;
}

std::vector<SweepRow> run_sweep(const json& doc, const SweepOptions& o) {
  std::vector<SweepRow> rows;
  for (double v : sweep_points(o.from, o.to, o.step)) {
    json point = with_parameter(doc, o.param, v, o.symmetric);
    if (o.seed) point["seed"] = *o.seed;
    ScenarioSpec s;
    try {
      s = scenario_from_json(point);
    } catch (const json::exception& e) {
      throw ParseError(std::string("malformed scenario: ") + e.what());
    }
    SweepRow r;
    r.value = v;
    r.value_mw = is_flow_param(o.param) ? v * power_unit(doc) : v;
    auto pricer = pricer_for(s);
    r.forward_a = pricer.forward(Zone::A);
    r.forward_b = pricer.forward(Zone::B);
    r.rate = pricer.coupling_rate();
    r.ptr = pricer.transmission_right();
    const std::int64_t n = o.mc_samples == 0 ? s.numerics.mc_samples : o.mc_samples;
    if (n > 0) {
      const auto batch = sample_terminal(s, initial_state(s), s.valuation_time, s.maturity, n, s.seed);
      const auto spots = evaluate_spots(batch, s);
      const auto mc = mc_price({Payoff::forward(Zone::A), Payoff::forward(Zone::B), Payoff::coupling_indicator(),
                                Payoff::ptr()},
                               spots);
      r.has_mc = true;
      r.mc_forward_a = mc[0];
      r.mc_forward_b = mc[1];
      r.mc_rate = mc[2];
      r.mc_ptr = mc[3];
      r.moments = spot_log_moments(spots, s.maturity - s.valuation_time);
      r.margrabe = margrabe_value(r.moments, s.maturity - s.valuation_time);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows, const std::string& param) {
  out << std::setprecision(9);
  out << (param == "coupling.flow_max" ? std::string("E_max") : param)
      << ",F_A,F_A_err,F_B,F_B_err,coupling_rate,coupling_rate_err,ptr_structural,ptr_structural_err,ptr_margrabe,"
         "mc_F_A,mc_se_A,mc_F_B,mc_se_B,mc_coupling_rate,mc_coupling_rate_se,mc_ptr,mc_ptr_se,vol_A,vol_B,"
         "correlation\n";
  for (const auto& r : rows) {
    out << r.value_mw << ',' << r.forward_a.total << ',' << r.forward_a.quadrature_error << ',' << r.forward_b.total
        << ',' << r.forward_b.quadrature_error << ',' << r.rate.total << ',' << r.rate.quadrature_error << ','
        << r.ptr.total << ',' << r.ptr.quadrature_error << ',';
    if (r.has_mc) {
      out << r.margrabe << ',' << r.mc_forward_a.value << ',' << r.mc_forward_a.standard_error << ','
          << r.mc_forward_b.value << ',' << r.mc_forward_b.standard_error << ',' << r.mc_rate.value << ','
          << r.mc_rate.standard_error << ',' << r.mc_ptr.value << ',' << r.mc_ptr.standard_error << ','
          << r.moments.vol_a << ',' << r.moments.vol_b << ',' << r.moments.correlation << '\n';
    } else {
      out << ",,,,,,,,,,,\n";
    }
  }
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Two-zone coupled electricity price model", "twozone"};
  app.require_subcommand(1);

  Common common;
  std::string market = "A";
  double strike = 0.0;
  std::string direction = "both";
  std::int64_t samples = 0;
  std::int64_t states = 10000;
  std::string out_path;
  SweepOptions sweep;
  std::string from_text = "0", to_text = "0", step_text = "1";
  bool asymmetric = false;

  auto* spot = app.add_subcommand("spot", "Coupled spot prices at the expected terminal state");
  add_common(spot, common);
  auto* forward = app.add_subcommand("forward", "Forward price of one market");
  add_common(forward, common);
  forward->add_option("-m,--market", market, "A or B");
  auto* call = app.add_subcommand("call", "European call on one market's spot price");
  add_common(call, common);
  call->add_option("-m,--market", market, "A or B");
  call->add_option("-k,--strike", strike, "Strike in EUR/MWh")->required();
  auto* ptr = app.add_subcommand("ptr", "Transmission right value");
  add_common(ptr, common);
  ptr->add_option("--direction", direction, "both, AtoB or BtoA");
  auto* rate = app.add_subcommand("coupling-rate", "Probability that the two spot prices coincide");
  add_common(rate, common);
  auto* margrabe = app.add_subcommand("margrabe", "Exchange-option comparator with simulated spot moments");
  add_common(margrabe, common);
  margrabe->add_option("-n,--samples", samples, "Monte Carlo samples (default: numerics.mc_samples)");
  auto* sweep_cmd = app.add_subcommand("sweep", "Price a grid of one scenario parameter and write CSV");
  add_common(sweep_cmd, common);
  sweep_cmd->add_option("--param", sweep.param, "Dotted JSON path, e.g. coupling.flow_max");
  sweep_cmd->add_option("--from", from_text, "Start value (GW/MW suffix allowed)");
  sweep_cmd->add_option("--to", to_text, "End value, inclusive");
  sweep_cmd->add_option("--step", step_text, "Step");
  sweep_cmd->add_option("-n,--samples", samples, "Monte Carlo samples per point; negative disables MC");
  sweep_cmd->add_flag("--asymmetric", asymmetric, "Do not mirror flow_max into flow_min");
  sweep_cmd->add_option("-o,--out", out_path, "CSV output file (default stdout)");
  auto* validate = app.add_subcommand("validate", "Run partition, oracle and Monte Carlo consistency checks");
  add_common(validate, common);
  validate->add_option("--states", states, "Random states for the partition checks");
  validate->add_option("-n,--samples", samples, "Monte Carlo samples (default: numerics.mc_samples)");
  auto* simulate = app.add_subcommand("simulate", "Sample terminal states and their spot outcomes as CSV");
  add_common(simulate, common);
  simulate->add_option("-n,--samples", samples, "Number of samples")->default_val(1000);
  simulate->add_option("-o,--out", out_path, "CSV output file (default stdout)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    std::ofstream file;
    auto target = [&]() -> std::ostream& {
      if (out_path.empty()) return out;
      file.open(out_path);
      if (!file) throw std::invalid_argument("cannot open " + out_path + " for writing");
      return file;
    };

    if (spot->parsed()) {
      const auto s = load(common);
      const auto mean = StateVector::unpack(conditional_law(initial_state(s), s.valuation_time, s.maturity, s).mean,
                                            s.maturity);
      const auto o = spot_prices(mean, s, s.maturity);
      precise(out) << "flow_MW,regime,rank_A,rank_B,technology_A,technology_B,price_A,price_B\n"
                   << o.flow + 0.0 << ',' << regime_name(o.regime) << ',' << o.key.k + 1 << ',' << o.key.l + 1 << ','
                   << o.key.order.perm_a[o.key.k] + 1 << ',' << o.key.order.perm_b[o.key.l] + 1 << ','
                   << o.price_a << ',' << o.price_b << '\n';
    } else if (forward->parsed()) {
      const auto s = load(common);
      const Zone z = parse_zone(market);
      const auto d = pricer_for(s).forward(z);
      precise(out) << "market,maturity,value,quadrature_error\n"
                   << zone_name(z) << ',' << s.maturity << ',' << d.total << ',' << d.quadrature_error << '\n';
    } else if (call->parsed()) {
      const auto s = load(common);
      const Zone z = parse_zone(market);
      if (strike < 0.0) throw std::invalid_argument("strike must be nonnegative");
      const auto d = pricer_for(s).call(z, strike);
      precise(out) << "market,strike,maturity,value,quadrature_error\n"
                   << zone_name(z) << ',' << strike << ',' << s.maturity << ',' << d.total << ','
                   << d.quadrature_error << '\n';
    } else if (ptr->parsed()) {
      const auto s = load(common);
      const auto d = pricer_for(s).transmission_right(parse_direction(direction));
      precise(out) << "direction,value,quadrature_error\n"
                   << direction << ',' << d.total << ',' << d.quadrature_error << '\n';
    } else if (rate->parsed()) {
      const auto s = load(common);
      const auto d = pricer_for(s).coupling_rate();
      precise(out) << "coupling_rate,quadrature_error\n" << d.total << ',' << d.quadrature_error << '\n';
    } else if (margrabe->parsed()) {
      const auto s = load(common);
      const std::int64_t n = samples > 0 ? samples : s.numerics.mc_samples;
      const double tau = s.maturity - s.valuation_time;
      const auto batch = sample_terminal(s, initial_state(s), s.valuation_time, s.maturity, n, s.seed);
      const auto m = spot_log_moments(evaluate_spots(batch, s), tau);
      const auto d = pricer_for(s).transmission_right();
      precise(out) << "ptr_structural,ptr_structural_err,ptr_margrabe,vol_A,vol_B,correlation,correlation_defined,"
                      "F_A,F_B\n"
                   << d.total << ',' << d.quadrature_error << ',' << margrabe_value(m, tau) << ',' << m.vol_a << ','
                   << m.vol_b << ',' << m.correlation << ',' << (m.correlation_defined ? 1 : 0) << ','
                   << m.forward_a << ',' << m.forward_b << '\n';
    } else if (sweep_cmd->parsed()) {
      json doc = load_doc(common);
      sweep.from = parse_quantity(from_text, doc);
      sweep.to = parse_quantity(to_text, doc);
      sweep.step = parse_quantity(step_text, doc);
      sweep.symmetric = !asymmetric;
      sweep.mc_samples = samples;
      const auto rows = run_sweep(doc, sweep);
      write_sweep_csv(target(), rows, sweep.param);
    } else if (validate->parsed()) {
      const auto s = load(common);
      const std::int64_t n = samples > 0 ? samples : s.numerics.mc_samples;
      const auto checks = validation_suite(s, states, n);
      bool all = true;
      for (const auto& c : checks) {
        out << (c.pass ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
        all = all && c.pass;
      }
      return all ? kExitOk : kExitNumerics;
    } else if (simulate->parsed()) {
      const auto s = load(common);
      if (samples < 1) throw std::invalid_argument("samples must be positive");
      const auto batch = sample_terminal(s, initial_state(s), s.valuation_time, s.maturity, samples, s.seed);
      auto& o = target();
      precise(o);
      for (const auto& f : s.fuels) o << "log_" << f.name << ',';
      o << "demand_A,demand_B,flow_MW,regime,price_A,price_B\n";
      for (std::int64_t i = 0; i < batch.size(); ++i) {
        const auto x = batch.state(i);
        const auto r = spot_prices(x, s, s.maturity);
        for (int j = 0; j < x.fuel_count(); ++j) o << x.log_fuels(j) << ',';
        o << x.demand_a << ',' << x.demand_b << ',' << r.flow + 0.0 << ',' << regime_name(r.regime) << ',' << r.price_a
          << ',' << r.price_b << '\n';
      }
    }
    return kExitOk;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << '\n';
    return kExitParse;
  } catch (const ValidationError& e) {
    err << "validation error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const NumericsError& e) {
    err << "numerics error: " << e.what() << '\n';
    return kExitNumerics;
  } catch (const std::invalid_argument& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerics;
  }
}

}  // namespace twozone
