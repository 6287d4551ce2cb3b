#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <functional>

#include "fixtures.hpp"
#include "twozone/errors.hpp"
#include "twozone/gaussian.hpp"
#include "twozone/scenario_io.hpp"

using namespace twozone;
using nlohmann::json;

namespace {

json base_doc() { return read_json_file(fixtures::scenario_path("base.json")); }

std::string validation_field(const std::function<void(json&)>& edit) {
  auto doc = base_doc();
  edit(doc);
  try {
    scenario_from_json(doc);
  } catch (const ValidationError& e) {
    return e.field();
  }
  return "<accepted>";
}

bool parse_fails(const std::function<void(json&)>& edit) {
  auto doc = base_doc();
  edit(doc);
  try {
    scenario_from_json(doc);
  } catch (const ParseError&) {
    return true;
  }
  return false;
}

}  // namespace

TEST_CASE("gigawatt input is normalized to megawatts") {
  const auto s = fixtures::load();
  CHECK(s.fuel_count() == 4);
  CHECK(s.market_a.technologies[0].capacity_const == doctest::Approx(48000.0));
  CHECK(s.market_b.technologies[1].capacity_const == doctest::Approx(56000.0));
  CHECK(s.market_a.demand_const == doctest::Approx(50000.0));
  CHECK(s.market_a.beta == doctest::Approx(-1e-5));
  CHECK(s.coupling.flow_min == doctest::Approx(-4000.0));
  CHECK(s.coupling.flow_max == doctest::Approx(4000.0));
  CHECK(s.market_b.technologies[0].fuel_id == 2);
  CHECK(std::exp(s.fuels[3].initial_log_cost) == doctest::Approx(35.0));
  CHECK(s.correlation == Eigen::MatrixXd::Identity(6, 6));

  // Terminal moments: 0.5 GW^2 demand variance and 1% fuel log-sd at maturity.
  const auto law = conditional_law(initial_state(s), 0.0, 1.0, s);
  CHECK(law.covariance(4, 4) == doctest::Approx(0.5e6).epsilon(1e-12));
  CHECK(law.covariance(5, 5) == doctest::Approx(0.5e6).epsilon(1e-12));
  CHECK(law.covariance(0, 0) == doctest::Approx(1e-4).epsilon(1e-12));
}

TEST_CASE("terminal moment conversion") {
  const double vol = volatility_from_terminal_sd(0.3, 2.0, 0.5);
  CHECK(vol * vol * (1.0 - std::exp(-2.0)) / 4.0 == doctest::Approx(0.09));
  CHECK(volatility_from_terminal_sd(0.0, 1.0, 1.0) == 0.0);
}

TEST_CASE("canonical round trip") {
  for (const char* name : {"base.json", "base_highdem_highfuel.json", "base_lowdem_lowfuel.json"}) {
    const auto s = fixtures::load(name);
    const auto back = parse_scenario(dump_scenario(s));
    CHECK(back == s);
    CHECK(dump_scenario(back) == dump_scenario(s));
  }
  const auto path = std::string("roundtrip_test.json");
  auto s = fixtures::load();
  s.market_a.technologies[1].capacity_cos = 1500.0;
  s.correlation(0, 1) = s.correlation(1, 0) = 0.3;
  save_scenario(s, path);
  CHECK(load_scenario(path) == s);
  std::remove(path.c_str());
}

TEST_CASE("megawatt units and explicit volatilities") {
  auto doc = base_doc();
  doc["units"] = {{"power", "MW"}, {"beta", "per_MW"}};
  doc["markets"]["A"]["beta"] = -1e-5;
  doc["markets"]["A"]["technologies"][0]["capacity"] = 48000;
  doc["fuels"][0].erase("terminal_log_sd");
  doc["fuels"][0]["volatility"] = 0.25;
  const auto s = scenario_from_json(doc);
  CHECK(s.market_a.beta == -1e-5);
  CHECK(s.market_a.technologies[0].capacity_const == 48000.0);
  CHECK(s.fuels[0].volatility == 0.25);
  // Fuel names or indices both resolve.
  doc["markets"]["A"]["technologies"][1]["fuel"] = 1;
  CHECK(scenario_from_json(doc).market_a.technologies[1].fuel_id == 1);
}

TEST_CASE("validation errors name the field") {
  CHECK(validation_field([](json& d) { d["markets"]["A"]["beta"] = 0.01; }) == "markets.A.beta");
  CHECK(validation_field([](json& d) {
          d["markets"]["A"]["beta"] = 0;
          d["markets"]["B"]["beta"] = 0;
        }) == "markets.A.beta");
  CHECK(validation_field([](json& d) { d["coupling"]["flow_min"] = 1; }) == "coupling.flow_min");
  CHECK(validation_field([](json& d) { d["coupling"]["flow_max"] = -1; }) == "coupling.flow_max");
  CHECK(validation_field([](json& d) { d["fuels"][1]["mean_reversion"] = 0; }) == "fuels[1].mean_reversion");
  CHECK(validation_field([](json& d) { d["fuels"][2]["initial_cost"] = -3; }) == "fuels[2].initial_cost");
  CHECK(validation_field([](json& d) { d["fuels"][1]["name"] = "A1"; }) == "fuels[1].name");
  CHECK(validation_field([](json& d) { d["markets"]["B"]["technologies"][0]["fuel"] = "coal"; }) ==
        "markets.B.technologies[0].fuel");
  CHECK(validation_field([](json& d) { d["markets"]["B"]["technologies"][0]["fuel"] = 7; }) ==
        "markets.B.technologies[0].fuel");
  CHECK(validation_field([](json& d) { d["markets"]["A"]["technologies"][1]["capacity_cos"] = 30; }) ==
        "markets.A.technologies[1].capacity");
  CHECK(validation_field([](json& d) { d["markets"]["A"]["technologies"] = json::array(); }) ==
        "markets.A.technologies");
  CHECK(validation_field([](json& d) { d["markets"]["A"]["demand"]["terminal_variance"] = -1; }) ==
        "markets.A.demand.terminal_variance");
  CHECK(validation_field([](json& d) { d["maturity"] = -1.0; }) == "maturity");
  CHECK(validation_field([](json& d) { d["numerics"]["max_fuels"] = 3; }) == "fuels");
  CHECK(validation_field([](json& d) { d["numerics"]["quadrature_tolerance"] = 0; }) ==
        "numerics.quadrature_tolerance");
  CHECK(validation_field([](json& d) {
          d["fuels"].push_back({{"name", "extra"}, {"initial_cost", 5}});
        }) == "fuels");

  SUBCASE("correlation") {
    auto corr = [](double rho01, double rho02, double rho12) {
      json c = json::array();
      for (int i = 0; i < 6; ++i) {
        json row = json::array();
        for (int j = 0; j < 6; ++j) row.push_back(i == j ? 1.0 : 0.0);
        c.push_back(row);
      }
      c[0][1] = c[1][0] = rho01;
      c[0][2] = c[2][0] = rho02;
      c[1][2] = c[2][1] = rho12;
      return c;
    };
    CHECK(validation_field([&](json& d) { d["correlation"] = corr(0.5, 0.2, -0.1); }) == "<accepted>");
    CHECK(validation_field([&](json& d) { d["correlation"] = corr(0.9, 0.9, -0.9); }) == "correlation");
    CHECK(validation_field([&](json& d) { d["correlation"] = corr(1.2, 0.0, 0.0); }) == "correlation");
    CHECK(validation_field([&](json& d) {
            d["correlation"] = corr(0.1, 0.0, 0.0);
            d["correlation"][1][0] = 0.2;
          }) == "correlation");
    CHECK(validation_field([&](json& d) { d["correlation"] = json::array({json::array({1.0})}); }) == "correlation");
    // Perfect correlation is singular but admissible.
    CHECK(validation_field([&](json& d) { d["correlation"] = corr(1.0, 1.0, 1.0); }) == "<accepted>");
  }
}

TEST_CASE("parse errors") {
  CHECK_THROWS_AS(parse_scenario("{ not json"), ParseError);
  CHECK_THROWS_AS(load_scenario("/nonexistent/scenario.json"), ParseError);
  CHECK(parse_fails([](json& d) { d.erase("fuels"); }));
  CHECK(parse_fails([](json& d) { d["markets"]["A"].erase("alpha"); }));
  CHECK(parse_fails([](json& d) { d["markets"]["A"]["alpha"] = "high"; }));
  CHECK(parse_fails([](json& d) { d["typo"] = 1; }));
  CHECK(parse_fails([](json& d) { d["units"]["power"] = "kW"; }));
  CHECK(parse_fails([](json& d) { d["seed"] = -4; }));
  CHECK(parse_fails([](json& d) { d["numerics"]["mc_samples"] = 2.5; }));
  CHECK(parse_fails([](json& d) { d["fuels"][0]["volatility"] = 0.1; }));
  CHECK(parse_fails([](json& d) { d["markets"]["A"]["technologies"][0]["fuel"] = true; }));
  CHECK(parse_fails([](json& d) { d["markets"]["A"]["demand"]["terminal_sd"] = 1.0; }));
  try {
    parse_scenario(R"({"fuels": []})");
    FAIL("accepted a scenario without markets");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("markets") != std::string::npos);
  }
}
