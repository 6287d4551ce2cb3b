#include "twozone/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "twozone/errors.hpp"

namespace twozone {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool in_band(const Interval& band, double x) { return band.lower <= x && x < band.upper; }
bool in_open_band(const Interval& band, double x) { return band.lower < x && x < band.upper; }

struct Breakpoint {
  double flow;
  int rank;
  bool from_a;
};

// Log price gap between A and B at flow e, for fixed marginal ranks.
double log_gap(const Stack& a, const Stack& b, int ka, int lb, double demand_a, double demand_b, double e) {
  return a.log_price(ka, demand_a + e) - b.log_price(lb, demand_b - e);
}

double interior_root(const Stack& a, const Stack& b, int ka, int lb, double demand_a, double demand_b) {
  const double slope = a.beta + b.beta;
  return (a.steps[ka].log_cost - b.steps[lb].log_cost + a.alpha - b.alpha + a.beta * (a.total - demand_a) -
          b.beta * (b.total - demand_b)) /
         slope;
}

CouplingSolution saturated(const Stack& a, const Stack& b, double demand_a, double demand_b, double flow,
                           Regime regime) {
  CouplingSolution s;
  s.regime = regime;
  s.flow = flow;
  s.k = a.marginal_rank(demand_a + flow);
  s.l = b.marginal_rank(demand_b - flow);
  s.price_a = a.price(s.k, demand_a + flow);
  s.price_b = b.price(s.l, demand_b - flow);
  return s;
}

std::pair<Stack, Stack> stacks_for(const StateVector& state, const ScenarioSpec& scenario, const MeritOrder& order,
                                   double t) {
  return {Stack::build(scenario.market_a, order.perm_a, state.log_fuels, t),
          Stack::build(scenario.market_b, order.perm_b, state.log_fuels, t)};
}

bool order_consistent(const MarketSpec& market, const std::vector<int>& perm, const Eigen::VectorXd& log_fuels) {
  for (std::size_t r = 1; r < perm.size(); ++r) {
    if (log_fuels(market.technologies[perm[r - 1]].fuel_id) > log_fuels(market.technologies[perm[r]].fuel_id))
      return false;
  }
  return true;
}

}  // namespace

std::string_view regime_name(Regime r) {
  switch (r) {
    case Regime::SaturatedAtoB: return "SaturatedAtoB";
    case Regime::SaturatedBtoA: return "SaturatedBtoA";
    case Regime::CoupledDiscA: return "CoupledDiscA";
    case Regime::CoupledDiscB: return "CoupledDiscB";
    case Regime::CoupledInterior: return "CoupledInterior";
  }
  return "?";
}

CouplingSolution solve_coupling(const Stack& a, const Stack& b, double demand_a, double demand_b,
                                const CouplingSpec& coupling) {
  const double e_max = coupling.flow_max;
  const double e_min = coupling.flow_min;

  {
    const int k = a.marginal_rank(demand_a + e_max);
    const int l = b.marginal_rank(demand_b - e_max);
    if (log_gap(a, b, k, l, demand_a, demand_b, e_max) <= 0.0)
      return saturated(a, b, demand_a, demand_b, e_max, Regime::SaturatedAtoB);
  }
  {
    const int k = a.marginal_rank(demand_a + e_min);
    const int l = b.marginal_rank(demand_b - e_min);
    if (log_gap(a, b, k, l, demand_a, demand_b, e_min) >= 0.0)
      return saturated(a, b, demand_a, demand_b, e_min, Regime::SaturatedBtoA);
  }

  // The gap is strictly increasing in the flow with upward jumps at the
  // breakpoints of either curve; it changes sign exactly once in (e_min, e_max).
  // Ranks are carried across breakpoints rather than recomputed from
  // demand + flow, which can round to the wrong side of a band edge.
  std::vector<Breakpoint> breaks;
  for (int r = 0; r < a.size(); ++r) {
    if (!a.steps[r].active || a.previous_active(r) < 0) continue;
    const double e = a.steps[r].lower - demand_a;
    if (e > e_min && e < e_max) breaks.push_back({e, r, true});
  }
  for (int r = 0; r < b.size(); ++r) {
    if (!b.steps[r].active || b.previous_active(r) < 0) continue;
    const double e = demand_b - b.steps[r].lower;
    if (e > e_min && e < e_max) breaks.push_back({e, r, false});
  }
  // Coincident breakpoints resolve to A first.
  std::sort(breaks.begin(), breaks.end(), [](const Breakpoint& x, const Breakpoint& y) {
    return x.flow < y.flow || (x.flow == y.flow && x.from_a && !y.from_a);
  });

  int ka = a.marginal_rank(demand_a + e_min);
  int lb = b.marginal_rank(demand_b - e_min);
  if (b.steps[lb].lower == demand_b - e_min && b.previous_active(lb) >= 0) lb = b.previous_active(lb);

  double lo = e_min;
  double prev_high = 0.0;
  std::size_t i = 0;
  while (true) {
    const double hi = i < breaks.size() ? breaks[i].flow : e_max;
    const double gap_lo = log_gap(a, b, ka, lb, demand_a, demand_b, lo);
    const double gap_hi = log_gap(a, b, ka, lb, demand_a, demand_b, hi);
    if (gap_lo < 0.0 && gap_hi > 0.0) {
      CouplingSolution s;
      s.regime = Regime::CoupledInterior;
      s.k = ka;
      s.l = lb;
      s.flow = std::clamp(interior_root(a, b, ka, lb, demand_a, demand_b), lo, hi);
      s.price_a = s.price_b = a.price(ka, demand_a + s.flow);
      return s;
    }
    if (i == breaks.size()) break;
    prev_high = gap_hi;

    // Cross every breakpoint at this flow.
    const Breakpoint& first = breaks[i];
    for (; i < breaks.size() && breaks[i].flow == hi; ++i) {
      if (breaks[i].from_a) ka = breaks[i].rank;
      else lb = b.previous_active(breaks[i].rank);
    }
    lo = hi;
    if (prev_high <= 0.0 && log_gap(a, b, ka, lb, demand_a, demand_b, lo) >= 0.0) {
      CouplingSolution s;
      s.flow = lo;
      if (first.from_a) {
        s.regime = Regime::CoupledDiscA;
        s.k = first.rank;
        s.l = b.marginal_rank(demand_b - lo);
        s.price_a = s.price_b = b.price(s.l, demand_b - lo);
      } else {
        s.regime = Regime::CoupledDiscB;
        s.k = a.marginal_rank(demand_a + lo);
        s.l = first.rank;
        s.price_a = s.price_b = a.price(s.k, demand_a + lo);
      }
      return s;
    }
  }
  throw NumericsError("solve_coupling: no sign change of the price gap inside the transfer bounds");
}

EventKey classify(const StateVector& state, const ScenarioSpec& scenario, double t) {
  return spot_prices(state, scenario, t).key;
}

double optimal_flow(const StateVector& state, const ScenarioSpec& scenario, double t) {
  return spot_prices(state, scenario, t).flow;
}

SpotOutcome spot_prices(const StateVector& state, const ScenarioSpec& scenario, double t) {
  SpotOutcome out;
  out.key.order = merit_order(state, scenario);
  const auto [a, b] = stacks_for(state, scenario, out.key.order, t);
  const auto s = solve_coupling(a, b, state.demand_a, state.demand_b, scenario.coupling);
  out.flow = s.flow;
  out.regime = s.regime;
  out.key.k = s.k;
  out.key.l = s.l;
  out.key.regime = s.regime;
  out.price_a = s.price_a;
  out.price_b = s.price_b;
  return out;
}

std::pair<double, double> uncoupled_prices(const StateVector& state, const ScenarioSpec& scenario, double t) {
  const auto order = merit_order(state, scenario);
  const auto [a, b] = stacks_for(state, scenario, order, t);
  return {a.price_at(state.demand_a), b.price_at(state.demand_b)};
}

double brute_force_flow(const StateVector& state, const ScenarioSpec& scenario, double t, double grid_step) {
  if (!(grid_step > 0.0)) throw std::invalid_argument("brute_force_flow: grid_step must be positive");
  const auto order = merit_order(state, scenario);
  const auto [a, b] = stacks_for(state, scenario, order, t);
  const double e_min = scenario.coupling.flow_min;
  const double e_max = scenario.coupling.flow_max;

  std::vector<double> grid;
  for (long i = 0;; ++i) {
    const double e = e_min + static_cast<double>(i) * grid_step;
    if (e >= e_max) break;
    grid.push_back(e);
  }
  grid.push_back(e_max);
  grid.push_back(0.0);

  auto pa = [&](double e) { return a.price_at(state.demand_a + e); };
  auto pb = [&](double e) { return b.price_at(state.demand_b - e); };

  if (pa(0.0) <= pb(0.0)) {
    double best = -kInf;
    for (double e : grid)
      if (pa(e) <= pb(e)) best = std::max(best, e);
    return best;
  }
  double best = kInf;
  for (double e : grid)
    if (pa(e) >= pb(e)) best = std::min(best, e);
  return best;
}

double closed_form_flow(const EventKey& key, const StateVector& state, const ScenarioSpec& scenario, double t) {
  const auto [a, b] = stacks_for(state, scenario, key.order, t);
  switch (key.regime) {
    case Regime::SaturatedAtoB: return scenario.coupling.flow_max;
    case Regime::SaturatedBtoA: return scenario.coupling.flow_min;
    case Regime::CoupledDiscA: return a.steps[key.k].lower - state.demand_a;
    case Regime::CoupledDiscB: return state.demand_b - b.steps[key.l].lower;
    case Regime::CoupledInterior: return interior_root(a, b, key.k, key.l, state.demand_a, state.demand_b);
  }
  return 0.0;
}

bool event_inequalities_hold(const EventKey& key, const StateVector& state, const ScenarioSpec& scenario,
                             double t) {
  if (!order_consistent(scenario.market_a, key.order.perm_a, state.log_fuels) ||
      !order_consistent(scenario.market_b, key.order.perm_b, state.log_fuels))
    return false;
  const auto [a, b] = stacks_for(state, scenario, key.order, t);
  if (!a.steps[key.k].active || !b.steps[key.l].active) return false;

  const double da = state.demand_a;
  const double db = state.demand_b;
  const double e_min = scenario.coupling.flow_min;
  const double e_max = scenario.coupling.flow_max;
  const auto band_a = a.extended_band(key.k);
  const auto band_b = b.extended_band(key.l);

  switch (key.regime) {
    case Regime::SaturatedAtoB:
      return in_band(band_a, da + e_max) && in_band(band_b, db - e_max) &&
             a.log_price(key.k, da + e_max) <= b.log_price(key.l, db - e_max);
    case Regime::SaturatedBtoA:
      return in_band(band_a, da + e_min) && in_band(band_b, db - e_min) &&
             a.log_price(key.k, da + e_min) >= b.log_price(key.l, db - e_min);
    case Regime::CoupledDiscA: {
      const int prev = a.previous_active(key.k);
      if (prev < 0) return false;
      const double g = a.steps[key.k].lower - da;
      const double common = b.log_price(key.l, db - g);
      return e_min < g && g < e_max && in_band(band_b, db - g) && a.log_price(prev, da + g) <= common &&
             a.log_price(key.k, da + g) >= common;
    }
    case Regime::CoupledDiscB: {
      const int prev = b.previous_active(key.l);
      if (prev < 0) return false;
      const double g = db - b.steps[key.l].lower;
      const double common = a.log_price(key.k, da + g);
      return e_min < g && g < e_max && in_band(band_a, da + g) && b.log_price(prev, db - g) <= common &&
             b.log_price(key.l, db - g) >= common;
    }
    case Regime::CoupledInterior: {
      const double g = interior_root(a, b, key.k, key.l, da, db);
      return e_min < g && g < e_max && in_open_band(band_a, da + g) && in_open_band(band_b, db - g);
    }
  }
  return false;
}

}  // namespace twozone
