#pragma once

// Quasi-analytical pricing over the partition of the terminal state space
// into (merit order, marginal ranks, regime) cells. Each cell contributes
// exp-linear price legs, so every expectation reduces to tilt factors times
// Gaussian box probabilities.

#include <cstdint>
#include <map>
#include <tuple>
#include <vector>

#include "twozone/coupling.hpp"
#include "twozone/gaussian.hpp"
#include "twozone/model.hpp"

namespace twozone {

enum class PayoffRole {
  Probability,  // untilted indicator
  PriceA,       // A's price leg under a saturated regime
  PriceB,       // B's price leg under a saturated regime
  Common,       // the common price under a coupled regime
};

/// How the merit-order event is written as linear constraints.
enum class MeritBlock {
  Global,         // the full chain of the key's global fuel order
  ZoneRestricted  // only the consecutive fuel comparisons inside each zone
};

struct EventTerm {
  EventKey key;
  PayoffRole role = PayoffRole::Probability;
  Eigen::VectorXd lambda;  // over V = (log fuels, demand A, demand B)
  double eta = 0.0;
  LinearConstraints constraints;
  // True when the cell is empty by construction (zero-width band, or a
  // discontinuity regime without a lower active rank).
  bool impossible = false;
};

/// A distinct pair of zone merit orders, with one representative global order.
struct MeritClass {
  MeritOrder order;
  int global_orders = 0;  // number of global fuel orders inducing this pair
};

/// Every (global order, k, l, regime), lexicographic. Throws NumericsError if
/// the fuel count exceeds numerics.max_fuels.
std::vector<EventKey> enumerate_events(const ScenarioSpec& scenario);

/// Distinct zone-restricted merit orders in order of first appearance.
std::vector<MeritClass> merit_classes(const ScenarioSpec& scenario);

/// Untilted constraint system of the key's cell at maturity T.
EventTerm event_constraints(const EventKey& key, const ScenarioSpec& scenario, double maturity,
                            MeritBlock block = MeritBlock::Global);

/// Constraint system plus the tilt (lambda, eta) with price leg =
/// exp(lambda'V_T + eta). `leg` selects the zone for saturated regimes and is
/// ignored for coupled ones.
EventTerm event_term(const EventKey& key, const ScenarioSpec& scenario, double maturity, Zone leg,
                     MeritBlock block = MeritBlock::Global);

struct EventContribution {
  EventKey key;
  double contribution = 0.0;
  double probability = 0.0;  // untilted probability of the cell
};

struct PriceDecomposition {
  double total = 0.0;
  std::vector<EventContribution> per_event;
  double quadrature_error = 0.0;
};

enum class PtrDirection { Both, AtoB, BtoA };

struct PricingOptions {
  QuadratureOptions quadrature;
  // Cells whose one-row probability bound falls below this are skipped; the
  // skipped mass is added to the reported error.
  double prune_probability = 1e-12;
};

PricingOptions pricing_options(const ScenarioSpec& scenario);

/// Shares tilted and untilted cell probabilities across all products priced
/// from one (scenario, state, t, T).
class StructuralPricer {
 public:
  StructuralPricer(const ScenarioSpec& scenario, const StateVector& state, double t, double maturity);
  StructuralPricer(const ScenarioSpec& scenario, const StateVector& state, double t, double maturity,
                   const PricingOptions& options);

  PriceDecomposition forward(Zone zone);
  PriceDecomposition transmission_right(PtrDirection direction = PtrDirection::Both);
  PriceDecomposition call(Zone zone, double strike);
  /// Probability of the coupled regimes; `total` is the rate.
  PriceDecomposition coupling_rate();
  /// Untilted probabilities of every priced cell; `total` should be 1.
  PriceDecomposition event_probabilities();

  const GaussianLaw& law() const { return law_; }
  bool degenerate() const { return degenerate_; }
  const std::vector<EventKey>& events() const { return events_; }

 private:
  struct Leg {
    double value = 0.0;
    double error = 0.0;
  };

  Leg leg_value(std::size_t event, PayoffRole role, double strike);
  double probability(std::size_t event, double& error);
  PayoffRole role_for(const EventKey& key, Zone zone) const;

  ScenarioSpec scenario_;
  StateVector state_;
  double t_;
  double maturity_;
  PricingOptions options_;
  GaussianLaw law_;
  bool degenerate_ = false;
  SpotOutcome spot_;  // deterministic outcome when the law is degenerate
  std::vector<EventKey> events_;
  std::vector<EventTerm> base_;
  std::map<std::tuple<std::size_t, int, double>, Leg> cache_;
};

/// Convenience wrappers starting from the scenario's initial state at t.
PriceDecomposition forward_price(Zone zone, const ScenarioSpec& scenario, double t, double maturity);
PriceDecomposition transmission_right_value(const ScenarioSpec& scenario, double t, double maturity,
                                            PtrDirection direction = PtrDirection::Both);
PriceDecomposition call_value(Zone zone, double strike, const ScenarioSpec& scenario, double t, double maturity);
PriceDecomposition coupling_rate(const ScenarioSpec& scenario, double t, double maturity);

/// Lognormal moments of the two spot prices used by the exchange-option
/// comparator. Volatilities are annualized.
struct SpotMoments {
  double vol_a = 0.0;
  double vol_b = 0.0;
  double correlation = 1.0;
  double forward_a = 0.0;
  double forward_b = 0.0;
  bool correlation_defined = true;
};

/// Sum of the two exchange options (B for A and A for B) over horizon tau.
double margrabe_value(const SpotMoments& moments, double tau);

}  // namespace twozone
