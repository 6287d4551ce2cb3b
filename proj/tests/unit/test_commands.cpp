#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "twozone/commands.hpp"
#include "twozone/scenario_io.hpp"

using namespace twozone;
using nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::vector<std::string> fields(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  for (std::string f; std::getline(in, f, ',');) out.push_back(f);
  return out;
}

double value_field(const Run& r, int column) { return std::stod(fields(lines(r.out).at(1)).at(column)); }

std::string temp_json(const json& doc, const std::string& name) {
  std::ofstream(name) << doc.dump(2);
  return name;
}

const std::string kBase = fixtures::scenario_path("base.json");

}  // namespace

TEST_CASE("quantities") {
  const json gw = {{"units", {{"power", "GW"}}}};
  const json mw = {{"units", {{"power", "MW"}}}};
  CHECK(parse_quantity("20GW", gw) == 20.0);
  CHECK(parse_quantity("500MW", gw) == 0.5);
  CHECK(parse_quantity("4", gw) == 4.0);
  CHECK(parse_quantity("4GW", mw) == 4000.0);
  CHECK(parse_quantity("4GW", json::object()) == 4000.0);
  CHECK(parse_quantity("-1.5e3MW", mw) == -1500.0);
  CHECK_THROWS_AS(parse_quantity("GW", gw), std::invalid_argument);
  CHECK_THROWS_AS(parse_quantity("4 GW", gw), std::invalid_argument);
  CHECK_THROWS_AS(parse_quantity("4kW", gw), std::invalid_argument);
}

TEST_CASE("parameter paths") {
  const json doc = read_json_file(kBase);
  auto d = with_parameter(doc, "coupling.flow_max", 12.0, true);
  CHECK(d["coupling"]["flow_max"] == 12.0);
  CHECK(d["coupling"]["flow_min"] == -12.0);
  d = with_parameter(doc, "coupling.flow_max", 12.0, false);
  CHECK(d["coupling"]["flow_min"] == -4);
  d = with_parameter(doc, "markets.B.technologies.1.capacity", 60.0, false);
  CHECK(d["markets"]["B"]["technologies"][1]["capacity"] == 60.0);
  d = with_parameter(doc, "markets.A.demand.cos", 2.0, false);
  CHECK(d["markets"]["A"]["demand"]["cos"] == 2.0);
  CHECK(doc["coupling"]["flow_max"] == 4);
  CHECK_THROWS_AS(with_parameter(doc, "nowhere.flow", 1.0, false), std::invalid_argument);
  CHECK_THROWS_AS(with_parameter(doc, "fuels.9.volatility", 1.0, false), std::invalid_argument);
  CHECK_THROWS_AS(with_parameter(doc, "fuels.x.volatility", 1.0, false), std::invalid_argument);
  CHECK_THROWS_AS(with_parameter(doc, "seed.value", 1.0, false), std::invalid_argument);
}

TEST_CASE("sweep grid") {
  CHECK(sweep_points(0.0, 20.0, 1.0).size() == 21);
  CHECK(sweep_points(0.0, 1.0, 0.1).size() == 11);
  CHECK(sweep_points(3.0, 3.0, 1.0) == std::vector<double>{3.0});
  CHECK_THROWS_AS(sweep_points(0.0, 1.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(sweep_points(2.0, 1.0, 1.0), std::invalid_argument);
}

TEST_CASE("spot command at the expected state") {
  auto r = cli({"spot", "-s", kBase});
  REQUIRE(r.code == kExitOk);
  auto row = fields(lines(r.out).at(1));
  CHECK(lines(r.out).at(0) == "flow_MW,regime,rank_A,rank_B,technology_A,technology_B,price_A,price_B");
  CHECK(row.at(0) == "-2000");
  CHECK(row.at(1) == "CoupledDiscA");
  CHECK(row.at(2) == "2");
  CHECK(row.at(3) == "2");
  CHECK(std::stod(row.at(6)) == doctest::Approx(35.0 * std::exp(0.47)).epsilon(1e-8));

  r = cli({"spot", "-s", kBase, "--flow-max", "1GW"});
  row = fields(lines(r.out).at(1));
  CHECK(row.at(0) == "-1000");
  CHECK(row.at(1) == "SaturatedBtoA");

  r = cli({"spot", "-s", kBase, "--flow-max", "0"});
  CHECK(fields(lines(r.out).at(1)).at(0) == "0");
}

TEST_CASE("pricing commands") {
  const auto fwd = cli({"forward", "-s", kBase, "-m", "A"});
  REQUIRE(fwd.code == kExitOk);
  const double fa = value_field(fwd, 2);
  CHECK(fa == doctest::Approx(forward_price(Zone::A, fixtures::load(), 0.0, 1.0).total).epsilon(1e-8));

  const auto call0 = cli({"call", "-s", kBase, "-m", "A", "-k", "0"});
  CHECK(value_field(call0, 3) == doctest::Approx(fa).epsilon(1e-8));
  const auto call50 = cli({"call", "-s", kBase, "-m", "B", "--strike", "50"});
  CHECK(value_field(call50, 3) < fa);

  const auto both = cli({"ptr", "-s", kBase, "--flow-max", "1GW"});
  const auto atob = cli({"ptr", "-s", kBase, "--flow-max", "1GW", "--direction", "AtoB"});
  const auto btoa = cli({"ptr", "-s", kBase, "--flow-max", "1GW", "--direction", "BtoA"});
  CHECK(value_field(both, 1) == doctest::Approx(value_field(atob, 1) + value_field(btoa, 1)).epsilon(1e-8));

  const auto rate = cli({"coupling-rate", "-s", kBase, "--flow-max", "20GW"});
  CHECK(value_field(rate, 0) > 0.99);
}

TEST_CASE("maturity override keeps calibrated volatilities") {
  const auto s = fixtures::load();
  const auto r = cli({"forward", "-s", kBase, "-m", "A", "--maturity", "0.25"});
  REQUIRE(r.code == kExitOk);
  auto shorter = s;
  shorter.maturity = 0.25;
  CHECK(value_field(r, 2) == doctest::Approx(forward_price(Zone::A, shorter, 0.0, 0.25).total).epsilon(1e-8));
  CHECK(value_field(r, 1) == 0.25);
}

TEST_CASE("sweep command") {
  const std::vector<std::string> args{"sweep", "-s", kBase, "--from", "0", "--to", "8GW", "--step", "4GW", "-n", "2000"};
  const auto a = cli(args);
  const auto b = cli(args);
  REQUIRE(a.code == kExitOk);
  CHECK(a.out == b.out);
  const auto rows = lines(a.out);
  REQUIRE(rows.size() == 4);
  CHECK(fields(rows[0]).size() == 21);
  CHECK(fields(rows[0]).at(0) == "E_max");
  CHECK(fields(rows[2]).at(0) == "4000");
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(fields(rows[i]).size() == 21);

  const auto seeded = cli({"sweep", "-s", kBase, "--to", "4", "--step", "4", "-n", "2000", "--seed", "7"});
  CHECK(lines(seeded.out).at(2) != rows[2]);

  const auto no_mc = cli({"sweep", "-s", kBase, "--to", "4", "--step", "4", "-n", "-1"});
  REQUIRE(no_mc.code == kExitOk);
  CHECK(lines(no_mc.out).at(1).substr(lines(no_mc.out).at(1).size() - 11) == ",,,,,,,,,,,");

  const std::string path = "sweep_test.csv";
  CHECK(cli({"sweep", "-s", kBase, "--to", "4", "--step", "4", "-n", "-1", "-o", path}).code == kExitOk);
  std::ifstream in(path);
  std::stringstream buf;
  buf << in.rdbuf();
  CHECK(buf.str() == no_mc.out);
  std::remove(path.c_str());
}

TEST_CASE("simulate command") {
  const auto r = cli({"simulate", "-s", kBase, "-n", "5"});
  REQUIRE(r.code == kExitOk);
  const auto rows = lines(r.out);
  CHECK(rows.size() == 6);
  CHECK(rows[0] == "log_A1,log_A2,log_B1,log_B2,demand_A,demand_B,flow_MW,regime,price_A,price_B");
  CHECK(cli({"simulate", "-s", kBase, "-n", "5"}).out == r.out);
}

TEST_CASE("validate command") {
  const auto r = cli({"validate", "-s", kBase, "--states", "500", "-n", "20000"});
  INFO(r.out);
  CHECK(r.code == kExitOk);
  CHECK(lines(r.out).size() == 7);
  for (const auto& line : lines(r.out)) CHECK(line.rfind("PASS ", 0) == 0);
}

TEST_CASE("exit codes") {
  CHECK(cli({}).code == kExitUsage);
  CHECK(cli({"bogus"}).code == kExitUsage);
  CHECK(cli({"forward"}).code == kExitUsage);
  CHECK(cli({"forward", "-s", kBase, "-m", "C"}).code == kExitUsage);
  CHECK(cli({"call", "-s", kBase, "-k", "-5"}).code == kExitUsage);
  CHECK(cli({"ptr", "-s", kBase, "--direction", "sideways"}).code == kExitUsage);
  CHECK(cli({"forward", "-s", kBase, "--flow-max", "lots"}).code == kExitUsage);
  CHECK(cli({"--help"}).code == kExitOk);

  CHECK(cli({"forward", "-s", "/nonexistent.json"}).code == kExitParse);
  {
    const auto path = std::string("broken_test.json");
    std::ofstream(path) << "{ \"fuels\": [";
    CHECK(cli({"forward", "-s", path}).code == kExitParse);
    std::remove(path.c_str());
  }
  {
    auto doc = read_json_file(kBase);
    doc["markets"]["A"]["beta"] = 1.0;
    const auto path = temp_json(doc, "invalid_test.json");
    const auto r = cli({"forward", "-s", path});
    CHECK(r.code == kExitValidation);
    CHECK(r.err.find("markets.A.beta") != std::string::npos);
    std::remove(path.c_str());
  }
  {
    auto doc = read_json_file(kBase);
    doc["numerics"]["max_fuels"] = 6;
    doc["fuels"].push_back({{"name", "F5"}, {"initial_cost", 50}});
    doc["fuels"].push_back({{"name", "F6"}, {"initial_cost", 60}});
    doc["markets"]["A"]["technologies"].push_back({{"fuel", "F5"}, {"capacity", 1}});
    doc["markets"]["B"]["technologies"].push_back({{"fuel", "F6"}, {"capacity", 1}});
    const auto path = temp_json(doc, "six_fuels_test.json");
    CHECK(cli({"spot", "-s", path}).code == kExitOk);
    std::remove(path.c_str());
  }
}
