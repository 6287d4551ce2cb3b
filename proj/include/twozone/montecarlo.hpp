#pragma once

// Exact terminal sampling and plain Monte Carlo estimators. Used as the
// independent check on every quasi-analytical price.

#include <cstdint>
#include <vector>

#include "twozone/coupling.hpp"
#include "twozone/gaussian.hpp"
#include "twozone/pricing.hpp"

namespace twozone {

struct SampleBatch {
  Eigen::MatrixXd states;  // n x (N+2), one terminal V_T per row
  std::uint64_t seed = 0;
  double t = 0.0;
  double maturity = 0.0;

  std::int64_t size() const { return states.rows(); }
  StateVector state(std::int64_t i) const;
};

/// Row i is mean + A z_i with z_i drawn from the counter stream (seed, i).
SampleBatch sample_terminal(const ScenarioSpec& scenario, const StateVector& state, double t, double maturity,
                            std::int64_t n, std::uint64_t seed);

struct McEstimate {
  double value = 0.0;
  double standard_error = 0.0;
  std::int64_t n = 0;
};

enum class PayoffKind { ForwardA, ForwardB, CallA, CallB, Ptr, PtrAtoB, PtrBtoA, CouplingIndicator };

struct Payoff {
  PayoffKind kind = PayoffKind::ForwardA;
  double strike = 0.0;

  static Payoff forward(Zone z) { return {z == Zone::A ? PayoffKind::ForwardA : PayoffKind::ForwardB, 0.0}; }
  static Payoff call(Zone z, double k) { return {z == Zone::A ? PayoffKind::CallA : PayoffKind::CallB, k}; }
  static Payoff ptr(PtrDirection d = PtrDirection::Both) {
    return {d == PtrDirection::Both ? PayoffKind::Ptr : d == PtrDirection::AtoB ? PayoffKind::PtrAtoB
                                                                                 : PayoffKind::PtrBtoA,
            0.0};
  }
  static Payoff coupling_indicator() { return {PayoffKind::CouplingIndicator, 0.0}; }

  double operator()(const SpotOutcome& s) const;
};

/// Spot outcome of every sample, in sample order.
std::vector<SpotOutcome> evaluate_spots(const SampleBatch& batch, const ScenarioSpec& scenario);

/// Averages each payoff over the batch with pairwise summation.
std::vector<McEstimate> mc_price(const std::vector<Payoff>& payoffs, const std::vector<SpotOutcome>& spots);
std::vector<McEstimate> mc_price(const std::vector<Payoff>& payoffs, const SampleBatch& batch,
                                 const ScenarioSpec& scenario);
McEstimate mc_price(const Payoff& payoff, const SampleBatch& batch, const ScenarioSpec& scenario);

/// Log-spot volatilities (std / sqrt(T - t)), their correlation and mean
/// spots. Throws NumericsError on a non-positive price.
SpotMoments spot_log_moments(const std::vector<SpotOutcome>& spots, double tau);
SpotMoments spot_log_moments(const SampleBatch& batch, const ScenarioSpec& scenario);

/// Model probability of the cells where the payoff is non-zero.
double support_probability(const PriceDecomposition& analytic);

/// Allowed |analytic - mc| gap: 3 standard errors plus the quadrature error
/// and a few ulps of roundoff. A payoff vanishing outside an event of
/// probability p has variance at least mean^2 (1 - p) / p; that floors the
/// sample standard error, which is zero when no draw lands in the event.
double agreement_tolerance(const PriceDecomposition& analytic, const McEstimate& mc, double support = 1.0);

/// Fixed-order pairwise sum.
double pairwise_sum(const double* x, std::size_t n);

}  // namespace twozone
