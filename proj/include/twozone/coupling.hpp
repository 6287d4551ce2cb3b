#pragma once

// Interconnection flow and coupled spot prices for a realized state.

#include "twozone/model.hpp"

#include <array>
#include <string_view>

namespace twozone {

enum class Regime {
  SaturatedAtoB,    // flow at flow_max, price A <= price B
  SaturatedBtoA,    // flow at flow_min, price A >= price B
  CoupledDiscA,     // flow puts A's residual demand on one of A's breakpoints
  CoupledDiscB,     // same for B
  CoupledInterior,  // both offer curves continuous at the flow
};

inline constexpr std::array<Regime, 5> kAllRegimes = {
    Regime::SaturatedAtoB, Regime::SaturatedBtoA, Regime::CoupledDiscA, Regime::CoupledDiscB,
    Regime::CoupledInterior};

std::string_view regime_name(Regime r);

inline bool is_coupled(Regime r) {
  return r == Regime::CoupledDiscA || r == Regime::CoupledDiscB || r == Regime::CoupledInterior;
}

/// One cell of the (merit order, marginal ranks, regime) partition. `k` and
/// `l` are ranks in A's and B's merit order.
struct EventKey {
  MeritOrder order;
  int k = 0;
  int l = 0;
  Regime regime = Regime::SaturatedAtoB;

  friend bool operator==(const EventKey&, const EventKey&) = default;
};

struct SpotOutcome {
  double flow = 0.0;
  Regime regime = Regime::SaturatedAtoB;
  EventKey key;
  double price_a = 0.0;
  double price_b = 0.0;
};

EventKey classify(const StateVector& state, const ScenarioSpec& scenario, double t);
double optimal_flow(const StateVector& state, const ScenarioSpec& scenario, double t);
SpotOutcome spot_prices(const StateVector& state, const ScenarioSpec& scenario, double t);

/// Uncoupled offer-curve prices at each market's own demand.
std::pair<double, double> uncoupled_prices(const StateVector& state, const ScenarioSpec& scenario, double t);

/// Grid-search reading of the flow definition: scan [flow_min, flow_max] in
/// steps of `grid_step` (plus both ends and zero) and take the sup/inf of the
/// feasible points.
double brute_force_flow(const StateVector& state, const ScenarioSpec& scenario, double t, double grid_step);

/// Flow implied by the key's regime: a bound for saturated regimes, the
/// breakpoint or log-linear root for coupled ones. Uses the key's ranks.
double closed_form_flow(const EventKey& key, const StateVector& state, const ScenarioSpec& scenario, double t);

/// Evaluates the key's defining inequalities directly on the state (merit
/// order consistency, marginal bands and price comparisons).
bool event_inequalities_hold(const EventKey& key, const StateVector& state, const ScenarioSpec& scenario,
                             double t);

// Lower-level solver on prebuilt stacks, shared with the Monte Carlo engine.
struct CouplingSolution {
  Regime regime = Regime::SaturatedAtoB;
  int k = 0;
  int l = 0;
  double flow = 0.0;
  double price_a = 0.0;
  double price_b = 0.0;
};

CouplingSolution solve_coupling(const Stack& a, const Stack& b, double demand_a, double demand_b,
                                const CouplingSpec& coupling);

}  // namespace twozone
