#include "twozone/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include <boost/math/constants/constants.hpp>

namespace twozone {

namespace {

constexpr double kTwoPi = boost::math::constants::two_pi<double>();
constexpr double kInf = std::numeric_limits<double>::infinity();

void check_tech_index(const MarketSpec& market, int k) {
  if (k < 0 || k >= market.size()) {
    throw std::out_of_range("technology index " + std::to_string(k) + " outside [0, " +
                            std::to_string(market.size()) + ")");
  }
}

}  // namespace

Eigen::VectorXd StateVector::packed() const {
  Eigen::VectorXd v(log_fuels.size() + 2);
  v.head(log_fuels.size()) = log_fuels;
  v(log_fuels.size()) = demand_a;
  v(log_fuels.size() + 1) = demand_b;
  return v;
}

StateVector StateVector::unpack(const Eigen::Ref<const Eigen::VectorXd>& v, double time) {
  const auto n = v.size() - 2;
  StateVector s;
  s.log_fuels = v.head(n);
  s.demand_a = v(n);
  s.demand_b = v(n + 1);
  s.time = time;
  return s;
}

StateVector initial_state(const ScenarioSpec& scenario) {
  StateVector s;
  s.time = scenario.valuation_time;
  s.log_fuels.resize(scenario.fuel_count());
  for (int i = 0; i < scenario.fuel_count(); ++i) s.log_fuels(i) = scenario.fuels[i].initial_log_cost;
  s.demand_a = seasonal_demand_mean(scenario.market_a, s.time) + scenario.market_a.initial_demand_deviation;
  s.demand_b = seasonal_demand_mean(scenario.market_b, s.time) + scenario.market_b.initial_demand_deviation;
  return s;
}

double capacity_at(const MarketSpec& market, int k, double t) {
  check_tech_index(market, k);
  const auto& tech = market.technologies[k];
  return tech.capacity_const + tech.capacity_cos * std::cos(kTwoPi * t) +
         tech.capacity_sin * std::sin(kTwoPi * t);
}

double total_capacity(const MarketSpec& market, double t) {
  double total = 0.0;
  for (int k = 0; k < market.size(); ++k) total += capacity_at(market, k, t);
  return total;
}

double seasonal_demand_mean(const MarketSpec& market, double t) {
  return market.demand_const + market.demand_cos * std::cos(kTwoPi * t) +
         market.demand_sin * std::sin(kTwoPi * t);
}

double scarcity_price(double s, double c_bar, double d, double alpha, double beta) {
  if (!(s > 0.0)) throw std::invalid_argument("scarcity_price: cost must be positive");
  return s * std::exp(alpha + beta * (c_bar - d));
}

std::vector<int> zone_order(const MarketSpec& market, const Eigen::Ref<const Eigen::VectorXd>& log_fuels) {
  std::vector<int> perm(market.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::stable_sort(perm.begin(), perm.end(), [&](int i, int j) {
    return log_fuels(market.technologies[i].fuel_id) < log_fuels(market.technologies[j].fuel_id);
  });
  return perm;
}

MeritOrder merit_order(const StateVector& state, const ScenarioSpec& scenario) {
  MeritOrder order;
  order.fuel_order.resize(state.fuel_count());
  std::iota(order.fuel_order.begin(), order.fuel_order.end(), 0);
  std::stable_sort(order.fuel_order.begin(), order.fuel_order.end(),
                   [&](int i, int j) { return state.log_fuels(i) < state.log_fuels(j); });
  order.perm_a = zone_order(scenario.market_a, state.log_fuels);
  order.perm_b = zone_order(scenario.market_b, state.log_fuels);
  return order;
}

Interval marginality_interval(const MarketSpec& market, const std::vector<int>& order, int k, double t) {
  if (k < 0 || k >= static_cast<int>(order.size())) {
    throw std::out_of_range("rank " + std::to_string(k) + " outside merit order");
  }
  Interval band;
  for (int r = 0; r < k; ++r) band.lower += capacity_at(market, order[r], t);
  band.upper = band.lower + capacity_at(market, order[k], t);
  return band;
}

OfferPoint offer_curve(const MarketSpec& market, const StateVector& state, double d, double t) {
  const auto stack = Stack::build(market, zone_order(market, state.log_fuels), state.log_fuels, t);
  const int rank = stack.marginal_rank(d);
  return {stack.price(rank, d), rank, stack.steps[rank].technology};
}

Stack Stack::build(const MarketSpec& market, const std::vector<int>& order,
                   const Eigen::Ref<const Eigen::VectorXd>& log_fuels, double t) {
  Stack stack;
  stack.alpha = market.alpha;
  stack.beta = market.beta;
  stack.steps.resize(order.size());
  double cumulative = 0.0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    auto& step = stack.steps[r];
    step.technology = order[r];
    step.fuel = market.technologies[order[r]].fuel_id;
    step.log_cost = log_fuels(step.fuel);
    const double width = capacity_at(market, order[r], t);
    step.lower = cumulative;
    cumulative += width;
    step.upper = cumulative;
    step.active = width > 0.0;
  }
  stack.total = cumulative;
  return stack;
}

int Stack::first_active() const {
  for (int r = 0; r < size(); ++r)
    if (steps[r].active) return r;
  return size() - 1;
}

int Stack::last_active() const {
  for (int r = size() - 1; r >= 0; --r)
    if (steps[r].active) return r;
  return size() - 1;
}

int Stack::previous_active(int rank) const {
  for (int r = rank - 1; r >= 0; --r)
    if (steps[r].active) return r;
  return -1;
}

int Stack::marginal_rank(double d) const {
  int rank = first_active();
  for (int r = rank + 1; r < size(); ++r) {
    if (steps[r].active && d >= steps[r].lower) rank = r;
  }
  return rank;
}

Interval Stack::extended_band(int rank) const {
  Interval band{steps[rank].lower, steps[rank].upper};
  if (rank == first_active()) band.lower = -kInf;
  if (rank == last_active()) band.upper = kInf;
  return band;
}

double Stack::price(int rank, double d) const { return std::exp(log_price(rank, d)); }

}  // namespace twozone
