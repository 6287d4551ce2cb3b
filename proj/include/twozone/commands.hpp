#pragma once

// Command-line front end, kept in the library so tests can drive it without
// spawning processes.

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "twozone/montecarlo.hpp"
#include "twozone/pricing.hpp"

namespace twozone {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitParse = 2, kExitValidation = 3, kExitNumerics = 4 };

/// args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Parses "20GW", "500MW" or a bare number into the document's power unit.
double parse_quantity(const std::string& text, const nlohmann::json& doc);

/// Copy of `doc` with the dotted path (array indices as numbers) set to
/// `value`. Setting coupling.flow_max with `symmetric` also sets flow_min.
nlohmann::json with_parameter(const nlohmann::json& doc, const std::string& path, double value, bool symmetric);

struct SweepOptions {
  std::string param = "coupling.flow_max";
  double from = 0.0;  // document units
  double to = 0.0;
  double step = 1.0;
  bool symmetric = true;
  std::int64_t mc_samples = 0;  // 0 uses numerics.mc_samples; negative disables MC
  std::optional<std::uint64_t> seed;
};

struct SweepRow {
  double value = 0.0;  // parameter value in document units
  double value_mw = 0.0;  // same, in MW when the parameter is a flow bound
  PriceDecomposition forward_a;
  PriceDecomposition forward_b;
  PriceDecomposition rate;
  PriceDecomposition ptr;
  bool has_mc = false;
  McEstimate mc_forward_a;
  McEstimate mc_forward_b;
  McEstimate mc_rate;
  McEstimate mc_ptr;
  SpotMoments moments;
  double margrabe = 0.0;
};

std::vector<double> sweep_points(double from, double to, double step);
std::vector<SweepRow> run_sweep(const nlohmann::json& doc, const SweepOptions& options);
void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows, const std::string& param);

}  // namespace twozone
