#pragma once

// Static description of two interconnected markets with multi-fuel merit
// order stacks, plus the deterministic building blocks of the spot price:
// capacities, seasonal demand, the scarcity function and offer curves.
//
// Units: power in MW, costs and prices in EUR/MWh, beta per MW, time in years.
// Technology and rank indices are 0-based throughout the C++ API.

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace twozone {

enum class Zone { A, B };

inline const char* zone_name(Zone z) { return z == Zone::A ? "A" : "B"; }

struct FuelSpec {
  std::string name;
  double initial_log_cost = 0.0;
  double mean_reversion = 1.0;     // 1/year, > 0
  double long_run_log_mean = 0.0;  // constant in time
  double volatility = 0.0;         // 1/sqrt(year), >= 0

  friend bool operator==(const FuelSpec&, const FuelSpec&) = default;
};

struct TechnologySpec {
  int fuel_id = 0;
  double capacity_const = 0.0;  // MW
  double capacity_cos = 0.0;    // MW
  double capacity_sin = 0.0;    // MW

  friend bool operator==(const TechnologySpec&, const TechnologySpec&) = default;
};

struct MarketSpec {
  std::vector<TechnologySpec> technologies;
  double alpha = 0.0;
  double beta = 0.0;  // per MW, <= 0
  double demand_const = 0.0;
  double demand_cos = 0.0;
  double demand_sin = 0.0;
  double demand_mean_reversion = 1.0;  // 1/year, > 0
  double demand_volatility = 0.0;      // MW/sqrt(year), >= 0
  double initial_demand_deviation = 0.0;

  int size() const { return static_cast<int>(technologies.size()); }
  friend bool operator==(const MarketSpec&, const MarketSpec&) = default;
};

/// Net transfer capacity bounds. Positive flow means A exports to B.
struct CouplingSpec {
  double flow_min = 0.0;  // <= 0
  double flow_max = 0.0;  // >= 0

  friend bool operator==(const CouplingSpec&, const CouplingSpec&) = default;
};

struct Numerics {
  double quadrature_tolerance = 1e-4;
  int quadrature_shifts = 12;
  std::int64_t quadrature_max_points = 1 << 16;  // per shift
  std::int64_t mc_samples = 200000;
  double flow_grid_step = 1.0;  // MW
  int max_fuels = 5;

  friend bool operator==(const Numerics&, const Numerics&) = default;
};

struct ScenarioSpec {
  std::vector<FuelSpec> fuels;
  MarketSpec market_a;
  MarketSpec market_b;
  CouplingSpec coupling;
  // Correlation of the Wiener drivers (W^1..W^N, W^A, W^B).
  Eigen::MatrixXd correlation;
  double valuation_time = 0.0;
  double maturity = 1.0;
  std::uint64_t seed = 42;
  Numerics numerics;

  int fuel_count() const { return static_cast<int>(fuels.size()); }
  int state_dim() const { return fuel_count() + 2; }
  const MarketSpec& market(Zone z) const { return z == Zone::A ? market_a : market_b; }
  MarketSpec& market(Zone z) { return z == Zone::A ? market_a : market_b; }

  friend bool operator==(const ScenarioSpec& x, const ScenarioSpec& y) {
    return x.fuels == y.fuels && x.market_a == y.market_a && x.market_b == y.market_b && x.coupling == y.coupling &&
           x.correlation.rows() == y.correlation.rows() && x.correlation.cols() == y.correlation.cols() &&
           x.correlation == y.correlation && x.valuation_time == y.valuation_time && x.maturity == y.maturity &&
           x.seed == y.seed && x.numerics == y.numerics;
  }
};

/// Random state V = (log fuel costs, demand A, demand B) at `time`.
struct StateVector {
  Eigen::VectorXd log_fuels;
  double demand_a = 0.0;
  double demand_b = 0.0;
  double time = 0.0;

  int fuel_count() const { return static_cast<int>(log_fuels.size()); }
  double demand(Zone z) const { return z == Zone::A ? demand_a : demand_b; }

  Eigen::VectorXd packed() const;
  static StateVector unpack(const Eigen::Ref<const Eigen::VectorXd>& v, double time);
};

/// Realized merit orders. `perm_a[r]` is the technology at rank r in A.
/// `fuel_order` is the global ascending ordering of fuels.
struct MeritOrder {
  std::vector<int> fuel_order;
  std::vector<int> perm_a;
  std::vector<int> perm_b;

  const std::vector<int>& perm(Zone z) const { return z == Zone::A ? perm_a : perm_b; }
  friend bool operator==(const MeritOrder&, const MeritOrder&) = default;
};

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
  double width() const { return upper - lower; }
};

struct OfferPoint {
  double price = 0.0;
  int rank = 0;        // position in the merit order
  int technology = 0;  // base technology index
};

/// State at the valuation time: initial log costs and seasonal mean plus
/// the initial demand deviation.
StateVector initial_state(const ScenarioSpec& scenario);

double capacity_at(const MarketSpec& market, int k, double t);
double total_capacity(const MarketSpec& market, double t);
double seasonal_demand_mean(const MarketSpec& market, double t);

/// s * exp(alpha + beta * (c_bar - d)).
double scarcity_price(double s, double c_bar, double d, double alpha, double beta);

/// Ascending sort of technology costs, ties broken by base technology index.
std::vector<int> zone_order(const MarketSpec& market, const Eigen::Ref<const Eigen::VectorXd>& log_fuels);
MeritOrder merit_order(const StateVector& state, const ScenarioSpec& scenario);

/// Capacity band served by rank k under `order`: [lower, upper).
Interval marginality_interval(const MarketSpec& market, const std::vector<int>& order, int k, double t);

/// Offer curve at demand d. Demand below zero keeps the first technology
/// marginal; demand at or above total capacity keeps the last one.
OfferPoint offer_curve(const MarketSpec& market, const StateVector& state, double d, double t);

/// Merit-order stack of one market at a fixed time, with fuel costs resolved.
/// Only ranks of positive width can be marginal.
struct Stack {
  struct Step {
    int technology = 0;
    int fuel = 0;
    double log_cost = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    bool active = false;
  };

  std::vector<Step> steps;
  double total = 0.0;
  double alpha = 0.0;
  double beta = 0.0;

  static Stack build(const MarketSpec& market, const std::vector<int>& order,
                     const Eigen::Ref<const Eigen::VectorXd>& log_fuels, double t);

  int size() const { return static_cast<int>(steps.size()); }
  int first_active() const;
  int last_active() const;
  /// Nearest active rank strictly below `rank`, or -1.
  int previous_active(int rank) const;
  /// Active rank serving demand d, using the [lower, upper) convention and
  /// extending the first/last active rank to -inf/+inf.
  int marginal_rank(double d) const;
  /// Marginality band of an active rank with the outer ends extended.
  Interval extended_band(int rank) const;

  double log_price(int rank, double d) const {
    return steps[rank].log_cost + alpha + beta * (total - d);
  }
  double price(int rank, double d) const;
  double price_at(double d) const { return price(marginal_rank(d), d); }
};

}  // namespace twozone
