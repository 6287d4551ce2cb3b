#include <doctest.h>

#include <cmath>
#include <numeric>

#include "fixtures.hpp"
#include "twozone/errors.hpp"
#include "twozone/montecarlo.hpp"

using namespace twozone;

namespace {

ScenarioSpec single_fuel(double kappa, double sigma) {
  ScenarioSpec s;
  s.fuels = {{"gas", std::log(30.0), kappa, std::log(25.0), sigma}};
  s.market_a.alpha = 0.2;
  s.market_a.technologies = {{0, 1000.0, 0.0, 0.0}};
  s.market_a.demand_const = 500.0;
  s.market_b = s.market_a;
  s.market_b.alpha = 0.3;
  s.market_b.beta = -1e-5;  // at least one slope must be nonzero
  s.correlation = Eigen::MatrixXd::Identity(3, 3);
  return s;
}

}  // namespace

TEST_CASE("sampling is deterministic in the seed") {
  const auto s = fixtures::load();
  const auto x = initial_state(s);
  const auto a = sample_terminal(s, x, 0.0, 1.0, 1000, 5);
  const auto b = sample_terminal(s, x, 0.0, 1.0, 1000, 5);
  const auto c = sample_terminal(s, x, 0.0, 1.0, 1000, 6);
  CHECK(a.states == b.states);
  CHECK(a.states != c.states);
  // Counter-based streams: a prefix does not depend on the batch size.
  const auto head = sample_terminal(s, x, 0.0, 1.0, 10, 5);
  CHECK(head.states == a.states.topRows(10));
  CHECK(a.state(3).time == 1.0);
  CHECK_THROWS_AS(sample_terminal(s, x, 0.0, 1.0, 0, 5), std::invalid_argument);
}

TEST_CASE("sample moments match the conditional law") {
  const auto s = fixtures::load("base_highdem_highfuel.json");
  const auto x = initial_state(s);
  const auto law = conditional_law(x, 0.0, 1.0, s);
  const std::int64_t n = 100000;
  const auto batch = sample_terminal(s, x, 0.0, 1.0, n, 17);
  const Eigen::RowVectorXd mean = batch.states.colwise().mean();
  const Eigen::MatrixXd centered = batch.states.rowwise() - mean;
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);
  for (int i = 0; i < law.dim(); ++i) {
    const double se_mean = std::sqrt(law.covariance(i, i) / n);
    CHECK(std::abs(mean(i) - law.mean(i)) <= 5.0 * se_mean);
    for (int j = 0; j < law.dim(); ++j) {
      const double se = std::sqrt((law.covariance(i, i) * law.covariance(j, j) + law.covariance(i, j) * law.covariance(i, j)) / n);
      CHECK(std::abs(cov(i, j) - law.covariance(i, j)) <= 5.0 * se);
    }
  }
}

TEST_CASE("zero volatility collapses onto the mean") {
  const auto s = fixtures::with_capacity(fixtures::zero_vol(fixtures::load()), 4000.0);
  const auto x = initial_state(s);
  const auto batch = sample_terminal(s, x, 0.0, 1.0, 64, 1);
  const auto law = conditional_law(x, 0.0, 1.0, s);
  for (std::int64_t i = 0; i < batch.size(); ++i) CHECK(batch.states.row(i) == law.mean.transpose());

  const auto est = mc_price({Payoff::forward(Zone::A), Payoff::coupling_indicator(), Payoff::ptr()}, batch, s);
  CHECK(est[0].value == doctest::Approx(35.0 * std::exp(0.47)).epsilon(1e-12));
  CHECK(est[0].standard_error == 0.0);
  CHECK(est[1].value == 1.0);
  CHECK(est[2].value == 0.0);

  const auto m = spot_log_moments(batch, s);
  CHECK_FALSE(m.correlation_defined);
  CHECK(m.vol_a == 0.0);
  CHECK(m.forward_a == doctest::Approx(est[0].value));
}

TEST_CASE("payoff definitions") {
  SpotOutcome o;
  o.price_a = 60.0;
  o.price_b = 45.0;
  CHECK(Payoff::forward(Zone::B)(o) == 45.0);
  CHECK(Payoff::call(Zone::A, 50.0)(o) == 10.0);
  CHECK(Payoff::call(Zone::B, 50.0)(o) == 0.0);
  CHECK(Payoff::ptr()(o) == 15.0);
  CHECK(Payoff::ptr(PtrDirection::AtoB)(o) == 0.0);
  CHECK(Payoff::ptr(PtrDirection::BtoA)(o) == 15.0);
  CHECK(Payoff::coupling_indicator()(o) == 0.0);
  o.price_b = 60.0;
  CHECK(Payoff::coupling_indicator()(o) == 1.0);
}

TEST_CASE("coupling frequency against the analytic rate") {
  const auto s = fixtures::with_capacity(fixtures::load("base_lowdem_lowfuel.json"), 4000.0);
  const auto x = initial_state(s);
  const auto rate = coupling_rate(s, 0.0, 1.0);
  const auto mc = mc_price(Payoff::coupling_indicator(), sample_terminal(s, x, 0.0, 1.0, 100000, 3), s);
  CHECK(std::abs(rate.total - mc.value) <= agreement_tolerance(rate, mc, std::clamp(rate.total, 0.0, 1.0)));
}

TEST_CASE("huge capacity removes the transmission right value") {
  const auto s = fixtures::with_capacity(fixtures::load("base_highdem_highfuel.json"), 1e7);
  const auto mc = mc_price(Payoff::ptr(), sample_terminal(s, initial_state(s), 0.0, 1.0, 20000, 9), s);
  CHECK(mc.value < 1e-9);
}

TEST_CASE("single-fuel spot volatility is the fuel's") {
  const double kappa = 1.5, sigma = 0.4, tau = 0.75;
  const auto s = single_fuel(kappa, sigma);
  const auto batch = sample_terminal(s, initial_state(s), 0.0, tau, 200000, 21);
  const auto m = spot_log_moments(batch, s);
  const double vol = sigma * std::sqrt((1.0 - std::exp(-2.0 * kappa * tau)) / (2.0 * kappa * tau));
  const double rel_se = 1.0 / std::sqrt(2.0 * batch.size());
  CHECK(std::abs(m.vol_a / vol - 1.0) <= 5.0 * rel_se);
  CHECK(m.vol_b == doctest::Approx(m.vol_a).epsilon(1e-12));
  CHECK(m.correlation == doctest::Approx(1.0).epsilon(1e-12));
  // The lognormal mean of exp(x + alpha) with no scarcity slope.
  const auto law = conditional_law(initial_state(s), 0.0, tau, s);
  const double fwd = std::exp(law.mean(0) + 0.5 * law.covariance(0, 0) + 0.2);
  CHECK(std::abs(m.forward_a - fwd) <= 5.0 * fwd * std::sqrt(std::expm1(law.covariance(0, 0)) / batch.size()));
  CHECK(forward_price(Zone::A, s, 0.0, tau).total == doctest::Approx(fwd).epsilon(1e-6));
}

TEST_CASE("estimator guards") {
  CHECK_THROWS_AS(mc_price({Payoff::forward(Zone::A)}, std::vector<SpotOutcome>{}), std::invalid_argument);
  CHECK_THROWS_AS(spot_log_moments(std::vector<SpotOutcome>{}, 1.0), std::invalid_argument);
  SpotOutcome bad;
  bad.price_a = 0.0;
  bad.price_b = 1.0;
  CHECK_THROWS_AS(spot_log_moments(std::vector<SpotOutcome>{bad}, 1.0), NumericsError);
}

TEST_CASE("pairwise sum") {
  std::vector<double> x(1000);
  std::iota(x.begin(), x.end(), 1.0);
  CHECK(pairwise_sum(x.data(), x.size()) == 500500.0);
  CHECK(pairwise_sum(x.data(), 0) == 0.0);
  // 1 + many tiny terms: naive left-to-right summation loses them all.
  std::vector<double> y(1 << 20, 1e-16);
  y[0] = 1.0;
  CHECK(pairwise_sum(y.data(), y.size()) == doctest::Approx(1.0 + 1e-16 * ((1 << 20) - 1)).epsilon(1e-15));
}

TEST_CASE("agreement band") {
  PriceDecomposition a;
  a.total = 2.0;
  a.quadrature_error = 0.01;
  McEstimate mc{2.0, 0.1, 100};
  CHECK(agreement_tolerance(a, mc) == doctest::Approx(0.31));
  // Payoff living on a 1% event with no draw in it.
  McEstimate empty{0.0, 0.0, 100};
  CHECK(agreement_tolerance(a, empty, 0.01) == doctest::Approx(3.0 * 2.0 * std::sqrt(0.99 / 1.0) + 0.01));
  PriceDecomposition cells;
  cells.per_event = {{EventKey{}, 0.5, 0.2}, {EventKey{}, 0.0, 0.7}, {EventKey{}, 1.0, 0.05}};
  CHECK(support_probability(cells) == doctest::Approx(0.25));
}
