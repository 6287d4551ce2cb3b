#include "twozone/montecarlo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "twozone/errors.hpp"
#include "twozone/rng.hpp"

namespace twozone {

StateVector SampleBatch::state(std::int64_t i) const {
  return StateVector::unpack(states.row(i).transpose(), maturity);
}

SampleBatch sample_terminal(const ScenarioSpec& scenario, const StateVector& state, double t, double maturity,
                            std::int64_t n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample_terminal: need at least one sample");
  const auto law = conditional_law(state, t, maturity, scenario);
  const Eigen::MatrixXd factor = psd_factor(law.covariance);
  const int m = law.dim();

  SampleBatch batch;
  batch.seed = seed;
  batch.t = t;
  batch.maturity = maturity;
  batch.states.resize(n, m);
  Eigen::VectorXd z(m);
  for (std::int64_t i = 0; i < n; ++i) {
    CounterRng rng(seed, static_cast<std::uint64_t>(i));
    for (int d = 0; d < m; ++d) z(d) = normal_quantile(rng.uniform());
    batch.states.row(i) = (law.mean + factor * z).transpose();
  }
  return batch;
}

double Payoff::operator()(const SpotOutcome& s) const {
  switch (kind) {
    case PayoffKind::ForwardA: return s.price_a;
    case PayoffKind::ForwardB: return s.price_b;
    case PayoffKind::CallA: return std::max(s.price_a - strike, 0.0);
    case PayoffKind::CallB: return std::max(s.price_b - strike, 0.0);
    case PayoffKind::Ptr: return std::abs(s.price_a - s.price_b);
    case PayoffKind::PtrAtoB: return std::max(s.price_b - s.price_a, 0.0);
    case PayoffKind::PtrBtoA: return std::max(s.price_a - s.price_b, 0.0);
    case PayoffKind::CouplingIndicator: return s.price_a == s.price_b ? 1.0 : 0.0;
  }
  return 0.0;
}

double pairwise_sum(const double* x, std::size_t n) {
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(x, half) + pairwise_sum(x + half, n - half);
}

double support_probability(const PriceDecomposition& analytic) {
  double p = 0.0;
  for (const auto& e : analytic.per_event)
    if (e.contribution != 0.0) p += e.probability;
  return std::clamp(p, 0.0, 1.0);
}

double agreement_tolerance(const PriceDecomposition& analytic, const McEstimate& mc, double support) {
  double se = mc.standard_error;
  if (mc.n > 0 && support > 0.0 && support < 1.0)
    se = std::max(se, std::abs(analytic.total) * std::sqrt((1.0 - support) / (support * static_cast<double>(mc.n))));
  const double scale = std::max({1.0, std::abs(analytic.total), std::abs(mc.value)});
  return 3.0 * se + analytic.quadrature_error + 16.0 * std::numeric_limits<double>::epsilon() * scale;
}

std::vector<SpotOutcome> evaluate_spots(const SampleBatch& batch, const ScenarioSpec& scenario) {
  std::vector<SpotOutcome> out;
  out.reserve(static_cast<std::size_t>(batch.size()));
  for (std::int64_t i = 0; i < batch.size(); ++i) out.push_back(spot_prices(batch.state(i), scenario, batch.maturity));
  return out;
}

std::vector<McEstimate> mc_price(const std::vector<Payoff>& payoffs, const std::vector<SpotOutcome>& spots) {
  if (spots.empty()) throw std::invalid_argument("mc_price: empty batch");
  const std::size_t n = spots.size();
  std::vector<McEstimate> out;
  std::vector<double> values(n);
  std::vector<double> squares(n);
  for (const auto& payoff : payoffs) {
    for (std::size_t i = 0; i < n; ++i) values[i] = payoff(spots[i]);
    const double mean = pairwise_sum(values.data(), n) / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) squares[i] = (values[i] - mean) * (values[i] - mean);
    McEstimate e;
    e.n = static_cast<std::int64_t>(n);
    e.value = mean;
    if (n > 1) {
      const double var = pairwise_sum(squares.data(), n) / static_cast<double>(n - 1);
      e.standard_error = std::sqrt(var / static_cast<double>(n));
    }
    out.push_back(e);
  }
  return out;
}

std::vector<McEstimate> mc_price(const std::vector<Payoff>& payoffs, const SampleBatch& batch,
                                 const ScenarioSpec& scenario) {
  return mc_price(payoffs, evaluate_spots(batch, scenario));
}

McEstimate mc_price(const Payoff& payoff, const SampleBatch& batch, const ScenarioSpec& scenario) {
  return mc_price(std::vector<Payoff>{payoff}, batch, scenario).front();
}

SpotMoments spot_log_moments(const std::vector<SpotOutcome>& spots, double tau) {
  if (spots.empty()) throw std::invalid_argument("spot_log_moments: empty batch");
  const std::size_t n = spots.size();
  std::vector<double> la(n), lb(n), pa(n), pb(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(spots[i].price_a > 0.0) || !(spots[i].price_b > 0.0))
      throw NumericsError("spot_log_moments: non-positive simulated price");
    pa[i] = spots[i].price_a;
    pb[i] = spots[i].price_b;
    la[i] = std::log(pa[i]);
    lb[i] = std::log(pb[i]);
  }
  const double dn = static_cast<double>(n);
  const double ma = pairwise_sum(la.data(), n) / dn;
  const double mb = pairwise_sum(lb.data(), n) / dn;
  std::vector<double> saa(n), sbb(n), sab(n);
  for (std::size_t i = 0; i < n; ++i) {
    saa[i] = (la[i] - ma) * (la[i] - ma);
    sbb[i] = (lb[i] - mb) * (lb[i] - mb);
    sab[i] = (la[i] - ma) * (lb[i] - mb);
  }
  const double denom = n > 1 ? dn - 1.0 : 1.0;
  const double va = pairwise_sum(saa.data(), n) / denom;
  const double vb = pairwise_sum(sbb.data(), n) / denom;
  const double cab = pairwise_sum(sab.data(), n) / denom;

  SpotMoments m;
  m.forward_a = pairwise_sum(pa.data(), n) / dn;
  m.forward_b = pairwise_sum(pb.data(), n) / dn;
  if (tau > 0.0) {
    m.vol_a = std::sqrt(va / tau);
    m.vol_b = std::sqrt(vb / tau);
  }
  if (va > 0.0 && vb > 0.0) {
    m.correlation = std::clamp(cab / std::sqrt(va * vb), -1.0, 1.0);
  } else {
    m.correlation = 1.0;
    m.correlation_defined = false;
  }
  return m;
}

SpotMoments spot_log_moments(const SampleBatch& batch, const ScenarioSpec& scenario) {
  return spot_log_moments(evaluate_spots(batch, scenario), batch.maturity - batch.t);
}

}  // namespace twozone
