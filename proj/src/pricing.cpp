#include "twozone/pricing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>

#include "twozone/errors.hpp"
#include "twozone/rng.hpp"

namespace twozone {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<std::vector<int>> global_fuel_orders(const ScenarioSpec& scenario) {
  const int n = scenario.fuel_count();
  if (n > scenario.numerics.max_fuels) {
    throw NumericsError("enumerate_events: " + std::to_string(n) + " fuels exceed the cap of " +
                        std::to_string(scenario.numerics.max_fuels));
  }
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<std::vector<int>> out;
  do {
    out.push_back(perm);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return out;
}

// Zone orders induced by a global fuel order.
MeritOrder induced_order(const ScenarioSpec& scenario, const std::vector<int>& fuel_order) {
  Eigen::VectorXd position(scenario.fuel_count());
  for (int i = 0; i < static_cast<int>(fuel_order.size()); ++i) position(fuel_order[i]) = i;
  MeritOrder order;
  order.fuel_order = fuel_order;
  order.perm_a = zone_order(scenario.market_a, position);
  order.perm_b = zone_order(scenario.market_b, position);
  return order;
}

void check_key(const EventKey& key, const ScenarioSpec& scenario, MeritBlock block) {
  const auto& o = key.order;
  if (key.k < 0 || key.k >= scenario.market_a.size() || key.l < 0 || key.l >= scenario.market_b.size())
    throw std::invalid_argument("event key: rank out of range");
  if (static_cast<int>(o.fuel_order.size()) != scenario.fuel_count())
    throw std::invalid_argument("event key: fuel order has the wrong length");
  std::vector<int> sorted = o.fuel_order;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < static_cast<int>(sorted.size()); ++i)
    if (sorted[i] != i) throw std::invalid_argument("event key: fuel order is not a permutation");
  const auto induced = induced_order(scenario, o.fuel_order);
  if (induced.perm_a != o.perm_a || induced.perm_b != o.perm_b) {
    if (block == MeritBlock::Global) throw std::invalid_argument("event key: zone orders inconsistent with fuel order");
    // Zone-restricted keys only need some global order to induce them.
    bool found = false;
    for (const auto& f : global_fuel_orders(scenario)) {
      const auto m = induced_order(scenario, f);
      if (m.perm_a == o.perm_a && m.perm_b == o.perm_b) {
        found = true;
        break;
      }
    }
    if (!found) throw std::invalid_argument("event key: zone orders not induced by any fuel order");
  }
}

void add_merit_block(LinearConstraints& c, const ScenarioSpec& scenario, const MeritOrder& order, MeritBlock block) {
  const int m = scenario.state_dim();
  auto add_pair = [&](int lo_fuel, int hi_fuel) {
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(m);
    row(hi_fuel) = 1.0;
    row(lo_fuel) = -1.0;
    c.add_row(row, 0.0, kInf);
  };
  if (block == MeritBlock::Global) {
    for (std::size_t i = 1; i < order.fuel_order.size(); ++i) add_pair(order.fuel_order[i - 1], order.fuel_order[i]);
    return;
  }
  std::set<std::pair<int, int>> seen;
  for (Zone z : {Zone::A, Zone::B}) {
    const auto& market = scenario.market(z);
    const auto& perm = order.perm(z);
    for (std::size_t r = 1; r < perm.size(); ++r) {
      const int lo = market.technologies[perm[r - 1]].fuel_id;
      const int hi = market.technologies[perm[r]].fuel_id;
      if (lo == hi || !seen.insert({lo, hi}).second) continue;
      add_pair(lo, hi);
    }
  }
}

struct Geometry {
  Stack a;
  Stack b;
  int fuel_k = 0;
  int fuel_l = 0;
  Interval band_a;
  Interval band_b;
  double e_min = 0.0;
  double e_max = 0.0;
};

Geometry geometry(const EventKey& key, const ScenarioSpec& scenario, double maturity) {
  const Eigen::VectorXd zeros = Eigen::VectorXd::Zero(scenario.fuel_count());
  Geometry g;
  g.a = Stack::build(scenario.market_a, key.order.perm_a, zeros, maturity);
  g.b = Stack::build(scenario.market_b, key.order.perm_b, zeros, maturity);
  g.fuel_k = g.a.steps[key.k].fuel;
  g.fuel_l = g.b.steps[key.l].fuel;
  g.e_min = scenario.coupling.flow_min;
  g.e_max = scenario.coupling.flow_max;
  if (g.a.steps[key.k].active) g.band_a = g.a.extended_band(key.k);
  if (g.b.steps[key.l].active) g.band_b = g.b.extended_band(key.l);
  return g;
}

// Row over V = (x, DA, DB) with a fuel difference and demand coefficients.
Eigen::RowVectorXd row_of(int m, int fuel_plus, int fuel_minus, double coef_a, double coef_b) {
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(m);
  if (fuel_plus >= 0) row(fuel_plus) += 1.0;
  if (fuel_minus >= 0) row(fuel_minus) -= 1.0;
  row(m - 2) = coef_a;
  row(m - 1) = coef_b;
  return row;
}

// Builds the regime rows and, when `tilt` is set, the price leg.
EventTerm build_term(const EventKey& key, const ScenarioSpec& scenario, double maturity, MeritBlock block,
                     bool tilt, Zone leg) {
  check_key(key, scenario, block);
  const int m = scenario.state_dim();
  const int da = m - 2;
  const int db = m - 1;
  const auto g = geometry(key, scenario, maturity);
  const double alpha_a = g.a.alpha, alpha_b = g.b.alpha;
  const double beta_a = g.a.beta, beta_b = g.b.beta;
  const double cap_a = g.a.total, cap_b = g.b.total;

  EventTerm term;
  term.key = key;
  term.lambda = Eigen::VectorXd::Zero(m);
  term.constraints.matrix.resize(0, m);
  add_merit_block(term.constraints, scenario, key.order, block);

  if (!g.a.steps[key.k].active || !g.b.steps[key.l].active) {
    term.impossible = true;
    return term;
  }
  auto& c = term.constraints;
  const auto [la, ua] = g.band_a;
  const auto [lb, ub] = g.band_b;

  auto saturated = [&](double flow, bool a_cheaper) {
    c.add_row(row_of(m, -1, -1, 1.0, 0.0), la - flow, ua - flow);
    c.add_row(row_of(m, -1, -1, 0.0, 1.0), lb + flow, ub + flow);
    const double rhs = alpha_b - alpha_a + beta_b * (cap_b + flow) - beta_a * (cap_a - flow);
    const auto price_row = row_of(m, g.fuel_k, g.fuel_l, -beta_a, beta_b);
    if (a_cheaper)
      c.add_row(price_row, -kInf, rhs);
    else
      c.add_row(price_row, rhs, kInf);
    if (!tilt) return;
    if (leg == Zone::A) {
      term.role = PayoffRole::PriceA;
      term.lambda(g.fuel_k) += 1.0;
      term.lambda(da) = -beta_a;
      term.eta = alpha_a + beta_a * (cap_a - flow);
    } else {
      term.role = PayoffRole::PriceB;
      term.lambda(g.fuel_l) += 1.0;
      term.lambda(db) = -beta_b;
      term.eta = alpha_b + beta_b * (cap_b + flow);
    }
  };

  switch (key.regime) {
    case Regime::SaturatedAtoB:
      saturated(g.e_max, true);
      break;
    case Regime::SaturatedBtoA:
      saturated(g.e_min, false);
      break;
    case Regime::CoupledDiscA: {
      const int kp = g.a.previous_active(key.k);
      if (kp < 0) {
        term.impossible = true;
        return term;
      }
      const double edge = g.a.steps[key.k].lower;
      const int fuel_kp = g.a.steps[kp].fuel;
      c.add_row(row_of(m, -1, -1, 1.0, 0.0), edge - g.e_max, edge - g.e_min);
      c.add_row(row_of(m, -1, -1, 1.0, 1.0), edge + lb, edge + ub);
      const double rhs = alpha_b - alpha_a + beta_b * (cap_b + edge) - beta_a * (cap_a - edge);
      c.add_row(row_of(m, fuel_kp, g.fuel_l, beta_b, beta_b), -kInf, rhs);
      c.add_row(row_of(m, g.fuel_k, g.fuel_l, beta_b, beta_b), rhs, kInf);
      if (tilt) {
        term.role = PayoffRole::Common;
        term.lambda(g.fuel_l) += 1.0;
        term.lambda(da) = -beta_b;
        term.lambda(db) = -beta_b;
        term.eta = alpha_b + beta_b * (cap_b + edge);
      }
      break;
    }
    case Regime::CoupledDiscB: {
      const int lp = g.b.previous_active(key.l);
      if (lp < 0) {
        term.impossible = true;
        return term;
      }
      const double edge = g.b.steps[key.l].lower;
      const int fuel_lp = g.b.steps[lp].fuel;
      c.add_row(row_of(m, -1, -1, 0.0, 1.0), edge + g.e_min, edge + g.e_max);
      c.add_row(row_of(m, -1, -1, 1.0, 1.0), la + edge, ua + edge);
      const double rhs = alpha_a - alpha_b + beta_a * (cap_a + edge) - beta_b * (cap_b - edge);
      c.add_row(row_of(m, fuel_lp, g.fuel_k, beta_a, beta_a), -kInf, rhs);
      c.add_row(row_of(m, g.fuel_l, g.fuel_k, beta_a, beta_a), rhs, kInf);
      if (tilt) {
        term.role = PayoffRole::Common;
        term.lambda(g.fuel_k) += 1.0;
        term.lambda(da) = -beta_a;
        term.lambda(db) = -beta_a;
        term.eta = alpha_a + beta_a * (cap_a + edge);
      }
      break;
    }
    case Regime::CoupledInterior: {
      const double bs = beta_a + beta_b;
      if (bs == 0.0) throw std::invalid_argument("event_term: interior regime needs a nonzero slope");
      const double kk = alpha_a - alpha_b + beta_a * cap_a - beta_b * cap_b;
      c.add_row(row_of(m, g.fuel_k, g.fuel_l, -beta_a, beta_b), bs * g.e_max - kk, bs * g.e_min - kk);
      c.add_row(row_of(m, g.fuel_k, g.fuel_l, beta_b, beta_b), bs * ua - kk, bs * la - kk);
      c.add_row(row_of(m, g.fuel_k, g.fuel_l, -beta_a, -beta_a), -bs * lb - kk, -bs * ub - kk);
      if (tilt) {
        term.role = PayoffRole::Common;
        term.lambda(g.fuel_k) += beta_b / bs;
        term.lambda(g.fuel_l) += beta_a / bs;
        term.lambda(da) = -beta_a * beta_b / bs;
        term.lambda(db) = -beta_a * beta_b / bs;
        term.eta = (beta_b * alpha_a + beta_a * alpha_b + beta_a * beta_b * (cap_a + cap_b)) / bs;
      }
      break;
    }
  }
  return term;
}

std::uint64_t quadrature_seed(std::uint64_t base, std::size_t event, int role) {
  return mix64(base ^ mix64(static_cast<std::uint64_t>(event) * 8 + static_cast<std::uint64_t>(role) + 1));
}

bool saturated_atob(Regime r) { return r == Regime::SaturatedAtoB; }
bool saturated_btoa(Regime r) { return r == Regime::SaturatedBtoA; }

}  // namespace

std::vector<EventKey> enumerate_events(const ScenarioSpec& scenario) {
  std::vector<EventKey> keys;
  for (const auto& f : global_fuel_orders(scenario)) {
    const auto order = induced_order(scenario, f);
    for (int k = 0; k < scenario.market_a.size(); ++k)
      for (int l = 0; l < scenario.market_b.size(); ++l)
        for (Regime r : kAllRegimes) keys.push_back({order, k, l, r});
  }
  return keys;
}

std::vector<MeritClass> merit_classes(const ScenarioSpec& scenario) {
  std::vector<MeritClass> classes;
  for (const auto& f : global_fuel_orders(scenario)) {
    const auto order = induced_order(scenario, f);
    auto it = std::find_if(classes.begin(), classes.end(), [&](const MeritClass& c) {
      return c.order.perm_a == order.perm_a && c.order.perm_b == order.perm_b;
    });
    if (it == classes.end())
      classes.push_back({order, 1});
    else
      ++it->global_orders;
  }
  return classes;
}

EventTerm event_constraints(const EventKey& key, const ScenarioSpec& scenario, double maturity, MeritBlock block) {
  return build_term(key, scenario, maturity, block, false, Zone::A);
}

EventTerm event_term(const EventKey& key, const ScenarioSpec& scenario, double maturity, Zone leg,
                     MeritBlock block) {
  return build_term(key, scenario, maturity, block, true, leg);
}

PricingOptions pricing_options(const ScenarioSpec& scenario) {
  PricingOptions o;
  o.quadrature.abs_tolerance = scenario.numerics.quadrature_tolerance;
  o.quadrature.shifts = scenario.numerics.quadrature_shifts;
  o.quadrature.max_points = scenario.numerics.quadrature_max_points;
  o.quadrature.seed = scenario.seed;
  return o;
}

StructuralPricer::StructuralPricer(const ScenarioSpec& scenario, const StateVector& state, double t, double maturity)
    : StructuralPricer(scenario, state, t, maturity, pricing_options(scenario)) {}

StructuralPricer::StructuralPricer(const ScenarioSpec& scenario, const StateVector& state, double t, double maturity,
                                   const PricingOptions& options)
    : scenario_(scenario), state_(state), t_(t), maturity_(maturity), options_(options) {
  law_ = conditional_law(state, t, maturity, scenario);
  degenerate_ = law_.degenerate();
  if (degenerate_) {
    spot_ = spot_prices(StateVector::unpack(law_.mean, maturity), scenario, maturity);
    return;
  }
  for (const auto& mc : merit_classes(scenario)) {
    for (int k = 0; k < scenario.market_a.size(); ++k) {
      for (int l = 0; l < scenario.market_b.size(); ++l) {
        for (Regime r : kAllRegimes) {
          EventKey key{mc.order, k, l, r};
          auto term = event_constraints(key, scenario, maturity, MeritBlock::ZoneRestricted);
          if (term.impossible) continue;
          events_.push_back(key);
          base_.push_back(std::move(term));
        }
      }
    }
  }
}

PayoffRole StructuralPricer::role_for(const EventKey& key, Zone zone) const {
  if (is_coupled(key.regime)) return PayoffRole::Common;
  return zone == Zone::A ? PayoffRole::PriceA : PayoffRole::PriceB;
}

double StructuralPricer::probability(std::size_t event, double& error) {
  const Leg leg = leg_value(event, PayoffRole::Probability, 0.0);
  error = leg.error;
  return leg.value;
}

// E[leg * 1{cell, leg >= strike}] for priced roles, P(cell) for Probability.
StructuralPricer::Leg StructuralPricer::leg_value(std::size_t event, PayoffRole role, double strike) {
  const auto cache_key = std::make_tuple(event, static_cast<int>(role), strike);
  if (auto it = cache_.find(cache_key); it != cache_.end()) return it->second;

  Leg out;
  const auto& key = events_[event];
  auto qopts = options_.quadrature;
  qopts.seed = quadrature_seed(options_.quadrature.seed, event, static_cast<int>(role));

  GaussianLaw law = law_;
  double factor = 1.0;
  LinearConstraints constraints = base_[event].constraints;
  if (role != PayoffRole::Probability) {
    const Zone zone = role == PayoffRole::PriceB ? Zone::B : Zone::A;
    const auto term = event_term(key, scenario_, maturity_, zone, MeritBlock::ZoneRestricted);
    if (strike > 0.0) constraints.add_row(term.lambda.transpose(), std::log(strike) - term.eta, kInf);
    auto tilt = exponential_tilt(law_, term.lambda, term.eta);
    factor = tilt.factor;
    law = std::move(tilt.tilted);
  }
  const auto box = project(law, constraints);
  const double bound = box_probability_bound(box);
  if (bound < options_.prune_probability) {
    out.error = factor * bound;
  } else {
    const auto est = rectangle_probability(box.law, box.lower, box.upper, qopts);
    out.value = factor * est.value;
    out.error = factor * est.error;
  }
  cache_.emplace(cache_key, out);
  return out;
}

PriceDecomposition StructuralPricer::forward(Zone zone) { return call(zone, 0.0); }

PriceDecomposition StructuralPricer::call(Zone zone, double strike) {
  if (!(strike >= 0.0)) throw std::invalid_argument("call: strike must be nonnegative");
  PriceDecomposition d;
  if (degenerate_) {
    const double p = zone == Zone::A ? spot_.price_a : spot_.price_b;
    d.total = std::max(p - strike, 0.0);
    d.per_event.push_back({spot_.key, d.total, 1.0});
    return d;
  }
  for (std::size_t e = 0; e < events_.size(); ++e) {
    const auto role = role_for(events_[e], zone);
    const Leg leg = leg_value(e, role, strike);
    double contribution = leg.value;
    double error = leg.error;
    if (strike > 0.0) {
      // Probability of the cell with the strike row, under the untilted law.
      const auto cache_key = std::make_tuple(e, static_cast<int>(role) + 16, strike);
      Leg indicator;
      if (auto it = cache_.find(cache_key); it != cache_.end()) {
        indicator = it->second;
      } else {
        const auto term = event_term(events_[e], scenario_, maturity_, zone, MeritBlock::ZoneRestricted);
        LinearConstraints c = base_[e].constraints;
        c.add_row(term.lambda.transpose(), std::log(strike) - term.eta, kInf);
        auto qopts = options_.quadrature;
        qopts.seed = quadrature_seed(options_.quadrature.seed, e, static_cast<int>(role) + 4);
        const auto box = project(law_, c);
        const double bound = box_probability_bound(box);
        if (bound < options_.prune_probability) {
          indicator.error = bound;
        } else {
          const auto est = rectangle_probability(box.law, box.lower, box.upper, qopts);
          indicator.value = est.value;
          indicator.error = est.error;
        }
        cache_.emplace(cache_key, indicator);
      }
      contribution -= strike * indicator.value;
      error += strike * indicator.error;
    }
    double perr = 0.0;
    const double p = probability(e, perr);
    d.total += contribution;
    d.quadrature_error += error;
    d.per_event.push_back({events_[e], contribution, p});
  }
  return d;
}

PriceDecomposition StructuralPricer::transmission_right(PtrDirection direction) {
  PriceDecomposition d;
  if (degenerate_) {
    double v = 0.0;
    if (direction != PtrDirection::BtoA) v += std::max(spot_.price_b - spot_.price_a, 0.0);
    if (direction != PtrDirection::AtoB) v += std::max(spot_.price_a - spot_.price_b, 0.0);
    d.total = v;
    d.per_event.push_back({spot_.key, v, 1.0});
    return d;
  }
  for (std::size_t e = 0; e < events_.size(); ++e) {
    const Regime r = events_[e].regime;
    double sign = 0.0;
    if (saturated_atob(r) && direction != PtrDirection::BtoA) sign = 1.0;
    if (saturated_btoa(r) && direction != PtrDirection::AtoB) sign = -1.0;
    if (sign == 0.0) continue;
    const Leg a = leg_value(e, PayoffRole::PriceA, 0.0);
    const Leg b = leg_value(e, PayoffRole::PriceB, 0.0);
    double perr = 0.0;
    const double p = probability(e, perr);
    const double contribution = sign * (b.value - a.value);
    d.total += contribution;
    d.quadrature_error += a.error + b.error;
    d.per_event.push_back({events_[e], contribution, p});
  }
  return d;
}

PriceDecomposition StructuralPricer::coupling_rate() {
  PriceDecomposition d;
  if (degenerate_) {
    d.total = is_coupled(spot_.regime) ? 1.0 : 0.0;
    d.per_event.push_back({spot_.key, d.total, 1.0});
    return d;
  }
  for (std::size_t e = 0; e < events_.size(); ++e) {
    if (!is_coupled(events_[e].regime)) continue;
    double err = 0.0;
    const double p = probability(e, err);
    d.total += p;
    d.quadrature_error += err;
    d.per_event.push_back({events_[e], p, p});
  }
  return d;
}

PriceDecomposition StructuralPricer::event_probabilities() {
  PriceDecomposition d;
  if (degenerate_) {
    d.total = 1.0;
    d.per_event.push_back({spot_.key, 1.0, 1.0});
    return d;
  }
  for (std::size_t e = 0; e < events_.size(); ++e) {
    double err = 0.0;
    const double p = probability(e, err);
    d.total += p;
    d.quadrature_error += err;
    d.per_event.push_back({events_[e], p, p});
  }
  return d;
}

namespace {

StateVector state_at(const ScenarioSpec& scenario, double t) {
  auto s = initial_state(scenario);
  s.time = t;
  s.demand_a = seasonal_demand_mean(scenario.market_a, t) + scenario.market_a.initial_demand_deviation;
  s.demand_b = seasonal_demand_mean(scenario.market_b, t) + scenario.market_b.initial_demand_deviation;
  return s;
}

}  // namespace

PriceDecomposition forward_price(Zone zone, const ScenarioSpec& scenario, double t, double maturity) {
  return StructuralPricer(scenario, state_at(scenario, t), t, maturity).forward(zone);
}

PriceDecomposition transmission_right_value(const ScenarioSpec& scenario, double t, double maturity,
                                            PtrDirection direction) {
  return StructuralPricer(scenario, state_at(scenario, t), t, maturity).transmission_right(direction);
}

PriceDecomposition call_value(Zone zone, double strike, const ScenarioSpec& scenario, double t, double maturity) {
  if (!(strike >= 0.0)) throw std::invalid_argument("call_value: strike must be nonnegative");
  return StructuralPricer(scenario, state_at(scenario, t), t, maturity).call(zone, strike);
}

PriceDecomposition coupling_rate(const ScenarioSpec& scenario, double t, double maturity) {
  return StructuralPricer(scenario, state_at(scenario, t), t, maturity).coupling_rate();
}

double margrabe_value(const SpotMoments& m, double tau) {
  if (!(m.forward_a > 0.0) || !(m.forward_b > 0.0)) throw std::invalid_argument("margrabe_value: forwards must be positive");
  if (m.vol_a < 0.0 || m.vol_b < 0.0) throw std::invalid_argument("margrabe_value: negative volatility");
  if (tau < 0.0) throw std::invalid_argument("margrabe_value: negative horizon");
  const double var = std::max(m.vol_a * m.vol_a + m.vol_b * m.vol_b - 2.0 * m.correlation * m.vol_a * m.vol_b, 0.0);
  const double s = std::sqrt(var * tau);
  if (s == 0.0) return std::abs(m.forward_a - m.forward_b);
  auto exchange = [s](double receive, double give) {
    const double d1 = (std::log(receive / give) + 0.5 * s * s) / s;
    return receive * normal_cdf(d1) - give * normal_cdf(d1 - s);
  };
  return exchange(m.forward_b, m.forward_a) + exchange(m.forward_a, m.forward_b);
}

}  // namespace twozone
